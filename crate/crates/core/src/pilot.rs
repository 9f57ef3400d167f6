//! Frame schedule, RIS on/off pilot observations and the LS coarse estimate.
//!
//! Block and element indices in [`FrameSchedule`] are 1-based, matching the
//! block-index time coordinate used by the interpolator.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::complex::{stack_re_im, ComplexMatrix};
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSchedule {
    /// Blocks per frame, `L`.
    pub blocks: usize,
    /// RIS element count, `N`.
    pub ris_elements: usize,
    /// Blocks carrying pilots (1-based, ascending).
    pub pilot_blocks: Vec<usize>,
    /// RIS elements switched on during pilot blocks (1-based, ascending).
    pub selected_elements: Vec<usize>,
    /// Pilot sequence length `Nᵖ`.
    pub pilot_length: usize,
    /// Pilot power `P`.
    pub pilot_power: f64,
}

fn uniform_subset(total: usize, rate: f64, what: &str) -> Result<Vec<usize>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Schedule(format!("{what} rate {rate} outside (0, 1]")));
    }
    let count = ((rate * total as f64).round() as usize).clamp(1, total);
    let stride = total / count;
    Ok((0..count).map(|k| 1 + k * stride).collect())
}

/// Pilot blocks evenly strided from block 1, selected elements evenly strided
/// from element 1. `pilot_length` defaults to `N_s`.
pub fn build_schedule(
    blocks: usize,
    time_rate: f64,
    ris_elements: usize,
    antenna_rate: f64,
    pilot_length: Option<usize>,
    pilot_power: f64,
) -> Result<FrameSchedule> {
    if blocks == 0 || ris_elements == 0 {
        return Err(Error::Schedule("frame and RIS must be non-empty".into()));
    }
    if !(pilot_power.is_finite() && pilot_power > 0.0) {
        return Err(Error::Schedule(format!("pilot power {pilot_power} must be positive")));
    }
    let pilot_blocks = uniform_subset(blocks, time_rate, "time-domain")?;
    let selected_elements = uniform_subset(ris_elements, antenna_rate, "antenna-domain")?;
    let n_s = selected_elements.len();
    let pilot_length = pilot_length.unwrap_or(n_s);
    let s = FrameSchedule {
        blocks,
        ris_elements,
        pilot_blocks,
        selected_elements,
        pilot_length,
        pilot_power,
    };
    s.validate()?;
    Ok(s)
}

impl FrameSchedule {
    pub fn validate(&self) -> Result<()> {
        let n_s = self.selected_elements.len();
        if n_s == 0 || self.pilot_blocks.is_empty() {
            return Err(Error::Schedule("empty pilot block or element set".into()));
        }
        if self.pilot_length < n_s {
            return Err(Error::Schedule(format!(
                "pilot length {} shorter than {} selected elements",
                self.pilot_length, n_s
            )));
        }
        let ascending_within = |v: &[usize], hi: usize| {
            v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|&i| (1..=hi).contains(&i))
        };
        if !ascending_within(&self.pilot_blocks, self.blocks) {
            return Err(Error::Schedule("pilot blocks must ascend within 1..=L".into()));
        }
        if !ascending_within(&self.selected_elements, self.ris_elements) {
            return Err(Error::Schedule("selected elements must ascend within 1..=N".into()));
        }
        Ok(())
    }

    pub fn selected_count(&self) -> usize {
        self.selected_elements.len()
    }

    pub fn time_rate(&self) -> f64 {
        self.pilot_blocks.len() as f64 / self.blocks as f64
    }

    pub fn antenna_rate(&self) -> f64 {
        self.selected_elements.len() as f64 / self.ris_elements as f64
    }

    pub fn is_pilot_block(&self, block: usize) -> bool {
        self.pilot_blocks.binary_search(&block).is_ok()
    }

    /// Zero-based column indices of the selected elements.
    pub fn selected_columns(&self) -> Vec<usize> {
        self.selected_elements.iter().map(|e| e - 1).collect()
    }
}

/// First `N_s` rows of the unitary `Nᵖ`-point DFT matrix, so `Γ·Γᴴ = I`.
pub fn make_gamma(selected: usize, pilot_length: usize) -> Result<ComplexMatrix> {
    if selected == 0 || pilot_length < selected {
        return Err(Error::Schedule(format!(
            "need 1 <= N_s <= Nᵖ, got N_s={selected}, Nᵖ={pilot_length}"
        )));
    }
    let norm = 1.0 / (pilot_length as f64).sqrt();
    Ok(ComplexMatrix::from_fn(selected, pilot_length, |k, n| {
        let angle = -2.0 * PI * ((k * n) % pilot_length) as f64 / pilot_length as f64;
        Complex64::from_polar(norm, angle)
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservation {
    pub block: usize,
    /// `M × Nᵖ` received pilots.
    pub y: ComplexMatrix,
    /// `N_s × Nᵖ` RIS control matrix.
    pub gamma: ComplexMatrix,
    pub noise_variance: f64,
    pub pilot_power: f64,
}

/// Noise variance for a given SNR (`P/σ²`); `None` means noiseless.
pub fn noise_variance(pilot_power: f64, snr_db: Option<f64>) -> f64 {
    match snr_db {
        None => 0.0,
        Some(db) => pilot_power / 10f64.powf(db / 10.0),
    }
}

/// Received pilots in one pilot block:
/// `Y = √(P/Nᵖ)·C[:, 𝓐ᵖ]·Γ + V` with circular Gaussian `V`.
pub fn observe(
    c_block: &ComplexMatrix,
    block: usize,
    schedule: &FrameSchedule,
    snr_db: Option<f64>,
    rng: &mut impl Rng,
) -> Result<PilotObservation> {
    if !schedule.is_pilot_block(block) {
        return Err(Error::Contract(format!("block {block} carries no pilots")));
    }
    if c_block.cols() != schedule.ris_elements {
        return Err(shape_err!(
            "channel has {} columns, schedule expects {}",
            c_block.cols(),
            schedule.ris_elements
        ));
    }
    let gamma = make_gamma(schedule.selected_count(), schedule.pilot_length)?;
    let p = schedule.pilot_power;
    let amplitude = (p / schedule.pilot_length as f64).sqrt();
    let c_sel = c_block.select_columns(&schedule.selected_columns())?;
    let clean = c_sel.matmul(&gamma)?.scale(Complex64::new(amplitude, 0.0));
    let sigma2 = noise_variance(p, snr_db);
    let y = if sigma2 > 0.0 {
        let sd = (sigma2 / 2.0).sqrt();
        let noise = ComplexMatrix::from_fn(clean.rows(), clean.cols(), |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(sd * re, sd * im)
        });
        clean.add(&noise)?
    } else {
        clean
    };
    Ok(PilotObservation {
        block,
        y,
        gamma,
        noise_variance: sigma2,
        pilot_power: p,
    })
}

/// `C̄[:, 𝓐ᵖ] = √(Nᵖ/P)·Y·Γᴴ`.
pub fn ls_estimate(obs: &PilotObservation) -> Result<ComplexMatrix> {
    let np = obs.gamma.cols() as f64;
    let s = (np / obs.pilot_power).sqrt();
    Ok(obs.y.matmul(&obs.gamma.adjoint())?.scale(Complex64::new(s, 0.0)))
}

/// Per-block network input: the stacked LS estimate at pilot blocks, zeros
/// elsewhere. Each vector has length `2·M·N_s`.
pub fn build_network_input(
    estimates: &BTreeMap<usize, ComplexMatrix>,
    schedule: &FrameSchedule,
) -> Result<Vec<Vec<f64>>> {
    let first = estimates
        .values()
        .next()
        .ok_or_else(|| Error::Contract("no pilot estimates".into()))?;
    let dim = 2 * first.rows() * schedule.selected_count();
    for &b in &schedule.pilot_blocks {
        let est = estimates
            .get(&b)
            .ok_or_else(|| Error::Contract(format!("missing LS estimate for pilot block {b}")))?;
        if est.cols() != schedule.selected_count() || 2 * est.rows() * est.cols() != dim {
            return Err(shape_err!("estimate for block {b} is {:?}", est.shape()));
        }
    }
    Ok((1..=schedule.blocks)
        .map(|n| match estimates.get(&n) {
            Some(est) if schedule.is_pilot_block(n) => stack_re_im(&est.vectorize()),
            _ => vec![0.0; dim],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelSample, ScenarioParams};
    use crate::complex::unstack_re_im;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame(seed: u64) -> (ScenarioParams, ChannelSample) {
        let sc = ScenarioParams::desk();
        let s = ChannelSample::draw(&sc, 10, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        (sc, s)
    }

    #[test]
    fn full_time_rate_uses_every_block() {
        let s = build_schedule(10, 1.0, 16, 0.5, None, 1.0).unwrap();
        assert_eq!(s.pilot_blocks, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn strided_pilot_blocks() {
        let s = build_schedule(10, 0.3, 16, 0.5, None, 1.0).unwrap();
        assert_eq!(s.pilot_blocks, vec![1, 4, 7]);
        let s = build_schedule(10, 0.5, 16, 0.5, None, 1.0).unwrap();
        assert_eq!(s.pilot_blocks, vec![1, 3, 5, 7, 9]);
        assert_eq!(s.selected_elements, vec![1, 3, 5, 7, 9, 11, 13, 15]);
    }

    #[test]
    fn sixteenth_of_64_elements() {
        let s = build_schedule(10, 1.0, 64, 1.0 / 16.0, None, 1.0).unwrap();
        assert_eq!(s.selected_count(), 4);
        assert_eq!(s.pilot_length, 4);
    }

    #[test]
    fn short_pilot_rejected() {
        assert!(matches!(
            build_schedule(10, 1.0, 16, 0.5, Some(7), 1.0),
            Err(Error::Schedule(_))
        ));
        assert!(build_schedule(10, 0.0, 16, 0.5, None, 1.0).is_err());
        assert!(build_schedule(10, 1.0, 16, 1.5, None, 1.0).is_err());
    }

    #[test]
    fn square_gamma_is_unitary() {
        let g = make_gamma(4, 4).unwrap();
        let i4 = ComplexMatrix::identity(4);
        assert!(g.matmul(&g.adjoint()).unwrap().max_abs_diff(&i4) < 1e-12);
        assert!(g.adjoint().matmul(&g).unwrap().max_abs_diff(&i4) < 1e-12);
    }

    #[test]
    fn single_row_gamma_has_unit_norm() {
        let g = make_gamma(1, 5).unwrap();
        assert!((g.frobenius_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_inversion() {
        let (_, s) = frame(1);
        let sched = build_schedule(10, 1.0, 16, 0.25, None, 2.0).unwrap();
        let obs = observe(&s.c_seq[2], 3, &sched, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let want = s.c_seq[2].select_columns(&sched.selected_columns()).unwrap();
        let est = ls_estimate(&obs).unwrap();
        assert!(est.sub(&want).unwrap().frobenius_norm() < 1e-10 * want.frobenius_norm());
    }

    #[test]
    fn observation_matches_per_symbol_model() {
        // y(n') = C(n)·ρ(n')·s with ρ zero off 𝓐ᵖ and Γ's column on 𝓐ᵖ
        let (_, s) = frame(2);
        let sched = build_schedule(10, 1.0, 16, 0.25, Some(6), 1.5).unwrap();
        let obs = observe(&s.c_seq[0], 1, &sched, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let amp = (1.5f64 / 6.0).sqrt();
        let cols = sched.selected_columns();
        for t in 0..6 {
            let mut rho = vec![Complex64::new(0.0, 0.0); 16];
            for (k, &col) in cols.iter().enumerate() {
                rho[col] = obs.gamma[(k, t)];
            }
            let y_t = s.c_seq[0]
                .matmul(&ComplexMatrix::column_vector(rho))
                .unwrap()
                .scale(Complex64::new(amp, 0.0));
            assert!(y_t.max_abs_diff(&obs.y.column(t)) < 1e-12);
        }
    }

    #[test]
    fn zero_channel_observes_noise_only() {
        let sched = build_schedule(10, 1.0, 16, 0.5, None, 1.0).unwrap();
        let zero = ComplexMatrix::zeros(2, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let obs = observe(&zero, 1, &sched, Some(10.0), &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sd = (0.1f64 / 2.0).sqrt();
        let noise = ComplexMatrix::from_fn(2, 8, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(sd * re, sd * im)
        });
        assert_eq!(obs.y, noise);
    }

    #[test]
    fn noise_energy_matches_closed_form() {
        let sched = build_schedule(10, 1.0, 16, 0.5, None, 1.0).unwrap();
        let zero = ComplexMatrix::zeros(2, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let snr_db = 3.0;
        let sigma2 = noise_variance(1.0, Some(snr_db));
        let draws = 1000;
        let mean: f64 = (0..draws)
            .map(|_| observe(&zero, 1, &sched, Some(snr_db), &mut rng).unwrap().y.frobenius_norm_sqr())
            .sum::<f64>()
            / draws as f64;
        let want = 2.0 * 8.0 * sigma2;
        assert!((mean - want).abs() < 0.05 * want, "{mean} vs {want}");
    }

    #[test]
    fn estimate_error_is_linear_in_noise() {
        let (_, s) = frame(6);
        let sched = build_schedule(10, 1.0, 16, 0.5, Some(10), 2.0).unwrap();
        let noisy = observe(&s.c_seq[0], 1, &sched, Some(5.0), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let clean = observe(&s.c_seq[0], 1, &sched, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let v = noisy.y.sub(&clean.y).unwrap();
        let want = v
            .matmul(&noisy.gamma.adjoint())
            .unwrap()
            .scale(Complex64::new((10.0f64 / 2.0).sqrt(), 0.0));
        let got = ls_estimate(&noisy).unwrap().sub(&ls_estimate(&clean).unwrap()).unwrap();
        assert!(got.max_abs_diff(&want) < 1e-9);
    }

    #[test]
    fn doubling_power_halves_error_energy() {
        let (_, s) = frame(7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sigma2 = 0.5;
        let err = |p: f64, rng: &mut ChaCha8Rng| -> f64 {
            let sched = build_schedule(10, 1.0, 16, 0.5, None, p).unwrap();
            let snr = 10.0 * (p / sigma2).log10();
            let truth = s.c_seq[0].select_columns(&sched.selected_columns()).unwrap();
            (0..1000)
                .map(|_| {
                    let obs = observe(&s.c_seq[0], 1, &sched, Some(snr), rng).unwrap();
                    ls_estimate(&obs).unwrap().sub(&truth).unwrap().frobenius_norm_sqr()
                })
                .sum::<f64>()
                / 1000.0
        };
        let e1 = err(1.0, &mut rng);
        let e2 = err(2.0, &mut rng);
        let ratio = e2 / e1;
        assert!((ratio - 0.5).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn ls_nmse_falls_with_snr() {
        let sched = build_schedule(10, 1.0, 16, 0.5, None, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut last = f64::INFINITY;
        for snr in [0.0, 10.0, 20.0] {
            let mut acc = 0.0;
            for seed in 0..200 {
                let (_, s) = frame(100 + seed);
                let truth = s.c_seq[0].select_columns(&sched.selected_columns()).unwrap();
                let obs = observe(&s.c_seq[0], 1, &sched, Some(snr), &mut rng).unwrap();
                let e = ls_estimate(&obs).unwrap().sub(&truth).unwrap();
                acc += e.frobenius_norm_sqr() / truth.frobenius_norm_sqr();
            }
            assert!(acc < last);
            last = acc;
        }
    }

    #[test]
    fn non_pilot_block_rejected() {
        let (_, s) = frame(10);
        let sched = build_schedule(10, 0.3, 16, 0.5, None, 1.0).unwrap();
        assert!(observe(&s.c_seq[1], 2, &sched, None, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn network_input_layout() {
        let (_, s) = frame(11);
        let sched = build_schedule(10, 0.3, 16, 0.5, None, 1.0).unwrap();
        let mut est = BTreeMap::new();
        for &b in &sched.pilot_blocks {
            let obs = observe(&s.c_seq[b - 1], b, &sched, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            est.insert(b, ls_estimate(&obs).unwrap());
        }
        let x = build_network_input(&est, &sched).unwrap();
        assert_eq!(x.len(), 10);
        for (i, xn) in x.iter().enumerate() {
            let n = i + 1;
            assert_eq!(xn.len(), 2 * 2 * 8);
            if sched.is_pilot_block(n) {
                assert_eq!(unstack_re_im(xn).unwrap(), est[&n].vectorize());
            } else {
                assert!(xn.iter().all(|&v| v == 0.0));
            }
        }
        est.remove(&4);
        assert!(matches!(build_network_input(&est, &sched), Err(Error::Contract(_))));
    }

    #[test]
    fn full_time_rate_input_has_no_zero_fill() {
        let (_, s) = frame(12);
        let sched = build_schedule(10, 1.0, 16, 0.5, None, 1.0).unwrap();
        let est: BTreeMap<_, _> = sched
            .pilot_blocks
            .iter()
            .map(|&b| {
                let obs = observe(&s.c_seq[b - 1], b, &sched, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
                (b, ls_estimate(&obs).unwrap())
            })
            .collect();
        let x = build_network_input(&est, &sched).unwrap();
        assert!(x.iter().all(|xn| xn.iter().any(|&v| v != 0.0)));
    }

    proptest! {
        #[test]
        fn gamma_rows_orthonormal(n_s in 1usize..12, extra in 0usize..8) {
            let g = make_gamma(n_s, n_s + extra).unwrap();
            let gg = g.matmul(&g.adjoint()).unwrap();
            prop_assert!(gg.max_abs_diff(&ComplexMatrix::identity(n_s)) < 1e-12);
        }

        #[test]
        fn noiseless_ls_exact(seed in any::<u64>(), m in 1usize..4, n_s in 1usize..9, extra in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 16;
            let c = ComplexMatrix::from_fn(m, n, |_, _| Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)));
            let sched = build_schedule(4, 1.0, n, n_s as f64 / n as f64, Some(n_s + extra), 0.7).unwrap();
            let obs = observe(&c, 1, &sched, None, &mut rng).unwrap();
            let truth = c.select_columns(&sched.selected_columns()).unwrap();
            let err = ls_estimate(&obs).unwrap().sub(&truth).unwrap().frobenius_norm();
            prop_assert!(err < 1e-10 * truth.frobenius_norm());
        }
    }
}
