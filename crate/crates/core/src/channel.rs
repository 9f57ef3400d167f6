//! BS–RIS–UE channel generation.
//!
//! The BS–RIS link `H` is a time-invariant rank-one LoS channel between a ULA
//! at the BS and a UPA at the RIS. The RIS–UE link `g(n)` is a sum of
//! `L_g` Doppler-rotated plane waves, held constant over each block of `L_c`
//! channel uses. The cascaded channel is `C(n) = H·diag(g(n))`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::complex::ComplexMatrix;
use crate::error::{Error, Result};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// BS antennas (ULA).
    pub bs_antennas: usize,
    /// RIS rows.
    pub ris_vertical: usize,
    /// RIS columns.
    pub ris_horizontal: usize,
    /// Scattering paths on the RIS–UE link.
    pub paths: usize,
    /// UE speed in m/s.
    pub speed: f64,
    pub carrier_frequency: f64,
    pub light_speed: f64,
    pub sample_period: f64,
    /// Channel uses per block.
    pub block_length: usize,
    pub element_spacing: f64,
    pub wavelength: f64,
    /// Motion-incidence angles are drawn from ±this many degrees.
    pub max_motion_angle_deg: f64,
    /// Path delays are drawn from `[0, max_delay)` seconds.
    pub max_delay: f64,
}

impl ScenarioParams {
    /// 2 BS antennas, 8×8 RIS, 5 paths, 100 km/h at 28 GHz, 20 MHz sampling.
    pub fn full_scale() -> Self {
        let f = 28e9;
        let wavelength = SPEED_OF_LIGHT / f;
        Self {
            bs_antennas: 2,
            ris_vertical: 8,
            ris_horizontal: 8,
            paths: 5,
            speed: 100.0 / 3.6,
            carrier_frequency: f,
            light_speed: SPEED_OF_LIGHT,
            sample_period: 1.0 / 20e6,
            block_length: 200,
            element_spacing: wavelength / 2.0,
            wavelength,
            max_motion_angle_deg: 20.0,
            max_delay: 100e-9,
        }
    }

    /// Same physics with a 4×4 RIS.
    pub fn desk() -> Self {
        Self {
            ris_vertical: 4,
            ris_horizontal: 4,
            ..Self::full_scale()
        }
    }

    pub fn ris_elements(&self) -> usize {
        self.ris_vertical * self.ris_horizontal
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("bs_antennas", self.bs_antennas),
            ("ris_vertical", self.ris_vertical),
            ("ris_horizontal", self.ris_horizontal),
            ("paths", self.paths),
            ("block_length", self.block_length),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("scenario.{name} must be at least 1")));
            }
        }
        let reals = [
            ("carrier_frequency", self.carrier_frequency),
            ("light_speed", self.light_speed),
            ("sample_period", self.sample_period),
            ("element_spacing", self.element_spacing),
            ("wavelength", self.wavelength),
        ];
        for (name, v) in reals {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("scenario.{name} must be positive")));
            }
        }
        for (name, v) in [
            ("speed", self.speed),
            ("max_motion_angle_deg", self.max_motion_angle_deg),
            ("max_delay", self.max_delay),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("scenario.{name} must be non-negative")));
            }
        }
        Ok(())
    }

    /// Doppler phase advance per block, in cycles, for `cos θ = 1`.
    pub fn doppler_cycles_per_block(&self) -> f64 {
        self.speed * self.carrier_frequency / self.light_speed
            * self.block_length as f64
            * self.sample_period
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub gain: Complex64,
    pub delay: f64,
    /// Angle between the incident wave and the UE's direction of motion.
    pub motion_angle: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayParams {
    /// BS–RIS complex gain.
    pub gain: Complex64,
    /// Angle of departure at the BS.
    pub departure: f64,
    pub ris_azimuth: f64,
    pub ris_elevation: f64,
    pub paths: Vec<PathParams>,
}

fn complex_normal(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

impl RayParams {
    /// Synthetic draw: azimuths in (−π/2, π/2), elevations in (π/4, 3π/4),
    /// unit-variance circular Gaussian gains.
    pub fn sample(scenario: &ScenarioParams, rng: &mut impl Rng) -> Self {
        let azimuth = |rng: &mut dyn rand::RngCore| rng.random_range(-FRAC_PI_2..FRAC_PI_2);
        let elevation = |rng: &mut dyn rand::RngCore| rng.random_range(FRAC_PI_4..3.0 * FRAC_PI_4);
        let gain = complex_normal(rng);
        let departure = azimuth(rng);
        let ris_azimuth = azimuth(rng);
        let ris_elevation = elevation(rng);
        let theta_max = scenario.max_motion_angle_deg.to_radians();
        let paths = (0..scenario.paths)
            .map(|_| PathParams {
                gain: complex_normal(rng),
                delay: if scenario.max_delay > 0.0 {
                    rng.random_range(0.0..scenario.max_delay)
                } else {
                    0.0
                },
                motion_angle: if theta_max > 0.0 {
                    rng.random_range(-theta_max..=theta_max)
                } else {
                    0.0
                },
                azimuth: azimuth(rng),
                elevation: elevation(rng),
            })
            .collect();
        Self {
            gain,
            departure,
            ris_azimuth,
            ris_elevation,
            paths,
        }
    }
}

fn phase_ramp(len: usize, step: f64) -> Vec<Complex64> {
    (0..len)
        .map(|m| Complex64::from_polar(1.0, step * m as f64))
        .collect()
}

/// BS ULA response: entry `m` is `exp(j·2π/λ·d·m·sin ψ)`.
pub fn steering_ula(antennas: usize, departure: f64, spacing: f64, wavelength: f64) -> ComplexMatrix {
    let step = 2.0 * PI / wavelength * spacing * departure.sin();
    ComplexMatrix::column_vector(phase_ramp(antennas, step))
}

/// RIS UPA response `a_el(ϕ) ⊗ a_az(φ, ϕ)`, length `N_v·N_h`.
pub fn steering_upa(
    vertical: usize,
    horizontal: usize,
    azimuth: f64,
    elevation: f64,
    spacing: f64,
    wavelength: f64,
) -> ComplexMatrix {
    let k = 2.0 * PI * spacing / wavelength;
    let a_el = ComplexMatrix::column_vector(phase_ramp(vertical, k * elevation.cos()));
    let a_az = ComplexMatrix::column_vector(phase_ramp(
        horizontal,
        k * azimuth.sin() * elevation.cos(),
    ));
    a_el.kron(&a_az)
}

/// `H = √(MN)·α·a_A(ψ)·a_R(φ_h, ϕ_h)ᴴ`.
pub fn make_h(rays: &RayParams, sc: &ScenarioParams) -> ComplexMatrix {
    let m = sc.bs_antennas;
    let n = sc.ris_elements();
    let a_a = steering_ula(m, rays.departure, sc.element_spacing, sc.wavelength);
    let a_r = steering_upa(
        sc.ris_vertical,
        sc.ris_horizontal,
        rays.ris_azimuth,
        rays.ris_elevation,
        sc.element_spacing,
        sc.wavelength,
    );
    let scale = rays.gain * ((m * n) as f64).sqrt();
    a_a.matmul(&a_r.adjoint())
        .expect("column times row")
        .scale(scale)
}

/// RIS–UE channel at block `n` (1-based).
pub fn make_g(rays: &RayParams, sc: &ScenarioParams, block: usize) -> Result<ComplexMatrix> {
    if block == 0 {
        return Err(Error::Contract("block indices start at 1".into()));
    }
    let n_el = sc.ris_elements();
    let lg = rays.paths.len();
    if lg == 0 {
        return Err(Error::Contract("ray parameters carry no paths".into()));
    }
    let doppler = sc.doppler_cycles_per_block();
    let mut g = vec![Complex64::new(0.0, 0.0); n_el];
    for p in &rays.paths {
        let cycles = block as f64 * doppler * p.motion_angle.cos() - sc.carrier_frequency * p.delay;
        let rot = p.gain * Complex64::from_polar(1.0, 2.0 * PI * cycles);
        let a_r = steering_upa(
            sc.ris_vertical,
            sc.ris_horizontal,
            p.azimuth,
            p.elevation,
            sc.element_spacing,
            sc.wavelength,
        );
        for (gi, ai) in g.iter_mut().zip(a_r.as_slice()) {
            *gi += rot * ai;
        }
    }
    let norm = (n_el as f64 / lg as f64).sqrt();
    Ok(ComplexMatrix::column_vector(
        g.into_iter().map(|v| v * norm).collect(),
    ))
}

/// `C(n) = H·diag(g(n))` for every `g(n)` in the sequence.
pub fn make_cascade(h: &ComplexMatrix, g_seq: &[ComplexMatrix]) -> Result<Vec<ComplexMatrix>> {
    g_seq
        .iter()
        .map(|g| {
            if g.cols() != 1 {
                return Err(crate::error::shape_err!("g(n) must be a column vector"));
            }
            h.mul_diag(g.as_slice())
        })
        .collect()
}

/// One frame of ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub rays: RayParams,
    pub h: ComplexMatrix,
    pub g_seq: Vec<ComplexMatrix>,
    pub c_seq: Vec<ComplexMatrix>,
}

impl ChannelSample {
    pub fn from_rays(rays: RayParams, sc: &ScenarioParams, blocks: usize) -> Result<Self> {
        let h = make_h(&rays, sc);
        let g_seq = (1..=blocks)
            .map(|n| make_g(&rays, sc, n))
            .collect::<Result<Vec<_>>>()?;
        let c_seq = make_cascade(&h, &g_seq)?;
        Ok(Self {
            rays,
            h,
            g_seq,
            c_seq,
        })
    }

    pub fn draw(sc: &ScenarioParams, blocks: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::from_rays(RayParams::sample(sc, rng), sc, blocks)
    }
}
