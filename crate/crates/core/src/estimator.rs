//! The two-stage estimator.
//!
//! Time-domain interpolation runs an ODE-RNN over the `L` blocks of a frame:
//! the hidden state is evolved through learned dynamics between blocks, then
//! updated by a GRU cell with the block's pilot input, then decoded into the
//! sub-sampled channel. Antenna-domain extrapolation lifts each decoded
//! sub-sampled channel to the full array width and refines it with two
//! RK-patterned residual blocks.
//!
//! Parameters live in four groups of a [`ParamStore`]: `omega_f` (dynamics),
//! `omega_r` (GRU), `omega_d` (decoder) and `omega_e` (extrapolator).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::nn::{forward_chain, Activation, DenseLayer};
use crate::ode::{ode_solve, solver_by_name, DynamicsNet, OdeSolver, RkResidualBlock};
use crate::tensor::{GradBuffer, ParamStore};

pub const GROUP_DYNAMICS: &str = "omega_f";
pub const GROUP_RNN: &str = "omega_r";
pub const GROUP_DECODER: &str = "omega_d";
pub const GROUP_EXTRA: &str = "omega_e";

/// Samples per gradient chunk. Fixed so the reduction order, and therefore
/// every bit of the summed gradient, does not depend on the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Registered ODE solver name (`rk4`, `euler`, `midpoint`, `none`).
    pub solver: String,
    /// Solver steps per elapsed block.
    pub steps_per_block: usize,
    /// Step scale `h` of the extrapolator's residual blocks.
    pub rk_step: f64,
    /// Hidden width; defaults to `2·M·N_s`.
    pub hidden_dim: Option<usize>,
    /// Decoder hidden width; defaults to `2·M·N_s`.
    pub decoder_width: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            solver: "rk4".into(),
            steps_per_block: 1,
            rk_step: 1.0,
            hidden_dim: None,
            decoder_width: None,
        }
    }
}

/// Dimensions of one estimator instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub bs_antennas: usize,
    pub ris_elements: usize,
    pub selected: usize,
    pub hidden: usize,
    pub decoder_width: usize,
}

impl Dims {
    pub fn new(bs_antennas: usize, ris_elements: usize, selected: usize, cfg: &ModelConfig) -> Self {
        let sub = 2 * bs_antennas * selected;
        Self {
            bs_antennas,
            ris_elements,
            selected,
            hidden: cfg.hidden_dim.unwrap_or(sub),
            decoder_width: cfg.decoder_width.unwrap_or(sub),
        }
    }

    /// `2·M·N_s`: stacked sub-sampled channel length.
    pub fn sub_len(&self) -> usize {
        2 * self.bs_antennas * self.selected
    }

    /// `2·M·N`: stacked full channel length.
    pub fn full_len(&self) -> usize {
        2 * self.bs_antennas * self.ris_elements
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Gate {
    inner: DenseLayer,
    outer: DenseLayer,
}

impl Gate {
    fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        act: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            inner: DenseLayer::new(store, GROUP_RNN, &format!("{name}0"), in_dim, hidden, Activation::Tanh, rng)?,
            outer: DenseLayer::new(store, GROUP_RNN, &format!("{name}1"), hidden, hidden, act, rng)?,
        })
    }

    fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let h = self.inner.forward(tape, x)?;
        self.outer.forward(tape, h)
    }
}

/// GRU update with two-layer gate networks.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    reset: Gate,
    update: Gate,
    candidate: Gate,
    hidden: usize,
    input: usize,
}

impl GruCell {
    pub fn new(store: &mut ParamStore, hidden: usize, input: usize, rng: &mut impl Rng) -> Result<Self> {
        let cat = hidden + input;
        Ok(Self {
            reset: Gate::new(store, "reset", cat, hidden, Activation::Sigmoid, rng)?,
            update: Gate::new(store, "update", cat, hidden, Activation::Sigmoid, rng)?,
            candidate: Gate::new(store, "candidate", cat, hidden, Activation::Tanh, rng)?,
            hidden,
            input,
        })
    }

    pub fn layers(&self) -> [&DenseLayer; 6] {
        [
            &self.reset.inner,
            &self.reset.outer,
            &self.update.inner,
            &self.update.outer,
            &self.candidate.inner,
            &self.candidate.outer,
        ]
    }

    /// `u = (1 − z)⊙u′ + z⊙ũ` with `r, z = σ(W[u′, x])`, `ũ = tanh(W[r⊙u′, x])`.
    pub fn step(&self, tape: &mut Tape<'_>, u_prev: Var, x: Var) -> Result<Var> {
        let (nu, nx) = (tape.value(u_prev).len(), tape.value(x).len());
        if nu != self.hidden || nx != self.input {
            return Err(shape_err!(
                "GRU expects hidden {} / input {}, got {nu} / {nx}",
                self.hidden,
                self.input
            ));
        }
        let ux = tape.concat(u_prev, x);
        let r = self.reset.forward(tape, ux)?;
        let z = self.update.forward(tape, ux)?;
        let ru = tape.mul(r, u_prev)?;
        let rux = tape.concat(ru, x);
        let cand = self.candidate.forward(tape, rux)?;
        let keep = tape.one_minus(z);
        let old = tape.mul(keep, u_prev)?;
        let new = tape.mul(z, cand)?;
        tape.add(old, new)
    }
}

/// Linear lift to the full width followed by two RK residual blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtraNet {
    pub lift: DenseLayer,
    pub blocks: Vec<RkResidualBlock>,
}

impl ExtraNet {
    pub const BLOCKS: usize = 2;

    fn new(store: &mut ParamStore, dims: &Dims, step: f64, rng: &mut impl Rng) -> Result<Self> {
        let lift = DenseLayer::new(
            store,
            GROUP_EXTRA,
            "lift",
            dims.sub_len(),
            dims.full_len(),
            Activation::Identity,
            rng,
        )?;
        let blocks = (0..Self::BLOCKS)
            .map(|i| RkResidualBlock::new(store, GROUP_EXTRA, &format!("block{i}"), dims.full_len(), step, rng))
            .collect::<Result<_>>()?;
        Ok(Self { lift, blocks })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let mut y = self.lift.forward(tape, x)?;
        for b in &self.blocks {
            y = b.forward(tape, y)?;
        }
        Ok(y)
    }
}

/// One training example: pilot inputs and both label sequences, each of
/// length `L`, stacked as `[Re; Im]` of the column-major vectorized channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub inputs: Vec<Vec<f64>>,
    pub sub_labels: Vec<Vec<f64>>,
    pub full_labels: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    /// Time-interpolation MSE `ℒ_t`.
    pub time: f64,
    /// Antenna-extrapolation MSE `ℒ_a`.
    pub antenna: f64,
    /// `ℒ_t + γ·ℒ_a`.
    pub total: f64,
}

#[derive(Debug)]
pub struct Estimator {
    dims: Dims,
    config: ModelConfig,
    solver: Box<dyn OdeSolver>,
    pub dynamics: DynamicsNet,
    pub gru: GruCell,
    pub decoder: Vec<DenseLayer>,
    pub extra: ExtraNet,
}

impl Estimator {
    pub const DECODER_LAYERS: usize = 6;

    /// Builds the network and registers its freshly initialized parameters.
    pub fn new(dims: Dims, config: &ModelConfig, rng: &mut impl Rng) -> Result<(Self, ParamStore)> {
        if config.steps_per_block == 0 {
            return Err(Error::Config("model.steps_per_block must be at least 1".into()));
        }
        if !config.rk_step.is_finite() {
            return Err(Error::Config("model.rk_step must be finite".into()));
        }
        let solver = solver_by_name(&config.solver)?;
        let mut store = ParamStore::new();
        let dynamics = DynamicsNet::new(&mut store, GROUP_DYNAMICS, dims.hidden, rng)?;
        let gru = GruCell::new(&mut store, dims.hidden, dims.sub_len(), rng)?;
        let mut decoder = Vec::with_capacity(Self::DECODER_LAYERS);
        for i in 0..Self::DECODER_LAYERS {
            let in_dim = if i == 0 { dims.hidden } else { dims.decoder_width };
            let out_dim = if i + 1 == Self::DECODER_LAYERS {
                dims.sub_len()
            } else {
                dims.decoder_width
            };
            decoder.push(DenseLayer::new(
                &mut store,
                GROUP_DECODER,
                &format!("dec{i}"),
                in_dim,
                out_dim,
                Activation::Tanh,
                rng,
            )?);
        }
        let extra = ExtraNet::new(&mut store, &dims, config.rk_step, rng)?;
        Ok((
            Self {
                dims,
                config: config.clone(),
                solver,
                dynamics,
                gru,
                decoder,
                extra,
            },
            store,
        ))
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn solver(&self) -> &dyn OdeSolver {
        self.solver.as_ref()
    }

    /// Swaps the inter-block integrator, keeping all parameters.
    pub fn set_solver(&mut self, solver: Box<dyn OdeSolver>) {
        self.config.solver = solver.name().to_string();
        self.solver = solver;
    }

    pub fn gru_step(&self, tape: &mut Tape<'_>, u_prev: Var, x: Var) -> Result<Var> {
        self.gru.step(tape, u_prev, x)
    }

    /// ODE-RNN over the frame. Returns one decoded sub-sampled channel per block.
    pub fn interpolate_sequence(&self, tape: &mut Tape<'_>, inputs: &[Vec<f64>]) -> Result<Vec<Var>> {
        let mut u = tape.input_vec(&vec![0.0; self.dims.hidden]);
        let f = |t: &mut Tape<'_>, v: Var| self.dynamics.forward(t, v);
        let mut out = Vec::with_capacity(inputs.len());
        for (i, x) in inputs.iter().enumerate() {
            if x.len() != self.dims.sub_len() {
                return Err(shape_err!(
                    "block {} input has {} values, expected {}",
                    i + 1,
                    x.len(),
                    self.dims.sub_len()
                ));
            }
            let (t_prev, t_now) = (i as f64, (i + 1) as f64);
            let gap = (t_now - t_prev) as usize;
            let steps = (self.config.steps_per_block * gap).max(1);
            let evolved = ode_solve(self.solver.as_ref(), tape, &f, u, t_prev, t_now, steps)?;
            let xv = tape.input_vec(x);
            u = self.gru.step(tape, evolved, xv)?;
            out.push(forward_chain(&self.decoder, tape, u)?);
        }
        Ok(out)
    }

    pub fn extrapolate(&self, tape: &mut Tape<'_>, sub: Var) -> Result<Var> {
        let n = tape.value(sub).len();
        if n != self.dims.sub_len() {
            return Err(shape_err!("extrapolator fed {n} values, expected {}", self.dims.sub_len()));
        }
        self.extra.forward(tape, sub)
    }

    /// Full pipeline on one frame: `(sub-sampled estimates, full estimates)`.
    pub fn forward(&self, tape: &mut Tape<'_>, inputs: &[Vec<f64>]) -> Result<(Vec<Var>, Vec<Var>)> {
        let sub = self.interpolate_sequence(tape, inputs)?;
        let full = sub
            .iter()
            .map(|&s| self.extrapolate(tape, s))
            .collect::<Result<Vec<_>>>()?;
        Ok((sub, full))
    }

    /// Predicted full channels for a frame, as plain vectors.
    pub fn predict(&self, store: &ParamStore, inputs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let mut tape = Tape::new(store);
        let (sub, full) = self.forward(&mut tape, inputs)?;
        let read = |vs: &[Var]| vs.iter().map(|&v| tape.value(v).to_vec()).collect::<Vec<_>>();
        Ok((read(&sub), read(&full)))
    }

    /// Records one sample's share of the batch loss on `tape`.
    fn sample_loss(
        &self,
        tape: &mut Tape<'_>,
        sample: &TrainingSample,
        batch_size: usize,
        gamma: f64,
    ) -> Result<(Var, LossParts)> {
        let l = sample.inputs.len();
        if sample.sub_labels.len() != l || sample.full_labels.len() != l || l == 0 {
            return Err(shape_err!("sample sequences have mismatched or zero length"));
        }
        let (sub, full) = self.forward(tape, &sample.inputs)?;
        let mut err_t: Option<Var> = None;
        let mut err_a: Option<Var> = None;
        let fold = |tape: &mut Tape<'_>, acc: Option<Var>, term: Var| -> Result<Var> {
            match acc {
                None => Ok(term),
                Some(a) => tape.add(a, term),
            }
        };
        for n in 0..l {
            let et = tape.sum_sq_diff(sub[n], &sample.sub_labels[n])?;
            err_t = Some(fold(tape, err_t, et)?);
            let ea = tape.sum_sq_diff(full[n], &sample.full_labels[n])?;
            err_a = Some(fold(tape, err_a, ea)?);
        }
        let d = &self.dims;
        let norm_t = 1.0 / (batch_size * d.bs_antennas * d.selected * l) as f64;
        let norm_a = 1.0 / (batch_size * d.bs_antennas * d.ris_elements * l) as f64;
        let lt = tape.scale(err_t.expect("l > 0"), norm_t);
        let la = tape.scale(err_a.expect("l > 0"), norm_a);
        let total = tape.axpy(lt, la, gamma)?;
        let parts = LossParts {
            time: tape.value(lt)[0],
            antenna: tape.value(la)[0],
            total: tape.value(total)[0],
        };
        Ok((total, parts))
    }

    /// Batch losses without gradients.
    pub fn loss(&self, store: &ParamStore, batch: &[&TrainingSample], gamma: f64) -> Result<LossParts> {
        let mut acc = LossParts::default();
        for s in batch {
            let mut tape = Tape::new(store);
            let (_, p) = self.sample_loss(&mut tape, s, batch.len(), gamma)?;
            acc = add_parts(acc, p);
        }
        Ok(acc)
    }

    /// Batch losses and `∂ℒ_s/∂ω`. Each sample gets a private tape. With
    /// `parallel` the chunks run on the rayon pool; the result is
    /// bit-identical to the serial path.
    pub fn loss_and_grad(
        &self,
        store: &ParamStore,
        batch: &[&TrainingSample],
        gamma: f64,
        parallel: bool,
    ) -> Result<(LossParts, GradBuffer)> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let chunk = |samples: &[&TrainingSample]| -> Result<(LossParts, GradBuffer)> {
            let mut grads = GradBuffer::zeros_like(store);
            let mut parts = LossParts::default();
            for s in samples {
                let mut tape = Tape::new(store);
                let (loss, p) = self.sample_loss(&mut tape, s, batch.len(), gamma)?;
                tape.backward(loss, &mut grads)?;
                parts = add_parts(parts, p);
            }
            Ok((parts, grads))
        };
        let partials: Vec<Result<(LossParts, GradBuffer)>> = if parallel {
            batch.par_chunks(GRAD_CHUNK).map(chunk).collect()
        } else {
            batch.chunks(GRAD_CHUNK).map(chunk).collect()
        };
        let mut iter = partials.into_iter();
        let (mut parts, mut grads) = iter.next().expect("non-empty batch")?;
        for r in iter {
            let (p, g) = r?;
            parts = add_parts(parts, p);
            grads.accumulate(&g)?;
        }
        Ok((parts, grads))
    }
}

fn add_parts(a: LossParts, b: LossParts) -> LossParts {
    LossParts {
        time: a.time + b.time,
        antenna: a.antenna + b.antenna,
        total: a.total + b.total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::Frozen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(seed: u64) -> (Estimator, ParamStore) {
        let cfg = ModelConfig::default();
        let dims = Dims::new(1, 4, 2, &cfg);
        Estimator::new(dims, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn random_sample(rng: &mut ChaCha8Rng, dims: &Dims, l: usize) -> TrainingSample {
        let mut v = |n: usize| (0..n).map(|_| rng.random_range(-0.9..0.9)).collect::<Vec<f64>>();
        TrainingSample {
            inputs: (0..l).map(|_| v(dims.sub_len())).collect(),
            sub_labels: (0..l).map(|_| v(dims.sub_len())).collect(),
            full_labels: (0..l).map(|_| v(dims.full_len())).collect(),
        }
    }

    fn zero_all(store: &mut ParamStore) {
        let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
        for id in ids {
            store.tensor_mut(id).data_mut().fill(0.0);
        }
    }

    #[test]
    fn layer_counts() {
        let (est, store) = tiny(0);
        assert_eq!(est.dynamics.layers().len(), 3);
        assert_eq!(est.gru.layers().len(), 6);
        assert_eq!(est.decoder.len(), 6);
        let stages: usize = est.extra.blocks.iter().map(|b| b.stages().len()).sum();
        assert_eq!(stages, 8);
        assert_eq!(
            store.groups(),
            vec![GROUP_DYNAMICS, GROUP_RNN, GROUP_DECODER, GROUP_EXTRA]
        );
    }

    #[test]
    fn zero_gru_halves_state() {
        let (est, mut store) = tiny(1);
        zero_all(&mut store);
        let mut tape = Tape::new(&store);
        let u = tape.input_vec(&[0.8, -0.4, 0.2, 1.0]);
        let x = tape.input_vec(&[0.3, 0.3, -0.3, 0.1]);
        let out = est.gru_step(&mut tape, u, x).unwrap();
        assert_eq!(tape.value(out), &[0.4, -0.2, 0.1, 0.5]);
    }

    /// Elementwise GRU reference straight from the gate equations.
    fn gru_reference(est: &Estimator, store: &ParamStore, u: &[f64], x: &[f64]) -> Vec<f64> {
        let dense = |l: &DenseLayer, v: &[f64]| -> Vec<f64> {
            let w = store.tensor(l.weight).data();
            let b = store.tensor(l.bias).data();
            (0..l.out_dim())
                .map(|o| {
                    let mut acc = b[o];
                    for i in 0..l.in_dim() {
                        acc += w[o * l.in_dim() + i] * v[i];
                    }
                    match l.activation {
                        Activation::Tanh => acc.tanh(),
                        Activation::Sigmoid => 1.0 / (1.0 + (-acc).exp()),
                        Activation::Identity => acc,
                    }
                })
                .collect()
        };
        let layers = est.gru.layers();
        let cat: Vec<f64> = u.iter().chain(x).copied().collect();
        let r = dense(layers[1], &dense(layers[0], &cat));
        let z = dense(layers[3], &dense(layers[2], &cat));
        let ru: Vec<f64> = r.iter().zip(u).map(|(a, b)| a * b).chain(x.iter().copied()).collect();
        let c = dense(layers[5], &dense(layers[4], &ru));
        (0..u.len()).map(|i| (1.0 - z[i]) * u[i] + z[i] * c[i]).collect()
    }

    #[test]
    fn gru_matches_reference_and_stays_in_hull() {
        let (est, store) = tiny(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let u: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut tape = Tape::new(&store);
            let (uv, xv) = (tape.input_vec(&u), tape.input_vec(&x));
            let out = est.gru_step(&mut tape, uv, xv).unwrap();
            let got = tape.value(out);
            let want = gru_reference(&est, &store, &u, &x);
            for i in 0..4 {
                assert!((got[i] - want[i]).abs() < 1e-14);
                assert!(got[i].abs() <= u[i].abs().max(1.0) + 1e-15);
            }
        }
    }

    #[test]
    fn single_block_zero_params_decodes_zero() {
        let (est, mut store) = tiny(4);
        zero_all(&mut store);
        let mut tape = Tape::new(&store);
        let out = est.interpolate_sequence(&mut tape, &[vec![0.5; 4]]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(tape.value(out[0]), &[0.0; 4]);
    }

    #[test]
    fn one_output_per_block() {
        let (est, store) = tiny(5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = random_sample(&mut rng, est.dims(), 7);
        let (sub, full) = est.predict(&store, &s.inputs).unwrap();
        assert_eq!(sub.len(), 7);
        assert_eq!(full.len(), 7);
        assert!(full.iter().all(|f| f.len() == 8));
    }

    #[test]
    fn solver_is_in_the_path() {
        let (mut est, store) = tiny(7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_sample(&mut rng, est.dims(), 5);
        let (with_ode, _) = est.predict(&store, &s.inputs).unwrap();
        est.set_solver(Box::new(Frozen));
        let (without, _) = est.predict(&store, &s.inputs).unwrap();
        assert_ne!(with_ode, without);
        // first block starts from u(0) = 0 where tanh dynamics may still move it;
        // later blocks must differ
        assert_ne!(with_ode[4], without[4]);
    }

    #[test]
    fn identity_extrapolation_at_full_rate() {
        let cfg = ModelConfig::default();
        let dims = Dims::new(1, 4, 4, &cfg);
        let (est, mut store) = Estimator::new(dims, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let n = dims.sub_len();
        assert_eq!(n, dims.full_len());
        let w = store.tensor_mut(est.extra.lift.weight).data_mut();
        w.fill(0.0);
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        for b in &est.extra.blocks {
            for s in b.stages() {
                store.tensor_mut(s.weight).data_mut().fill(0.0);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| i as f64 * 0.1 - 0.3).collect();
        let mut tape = Tape::new(&store);
        let xv = tape.input_vec(&x);
        let y = est.extrapolate(&mut tape, xv).unwrap();
        assert_eq!(tape.value(y), x.as_slice());
    }

    #[test]
    fn output_width_for_every_rate() {
        let cfg = ModelConfig::default();
        for n_s in [32, 16, 8, 4] {
            let dims = Dims::new(2, 64, n_s, &cfg);
            let (est, store) = Estimator::new(dims, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let mut tape = Tape::new(&store);
            let x = tape.input_vec(&vec![0.1; dims.sub_len()]);
            let y = est.extrapolate(&mut tape, x).unwrap();
            assert_eq!(tape.value(y).len(), 2 * 2 * 64);
        }
    }

    #[test]
    fn extrapolation_is_deterministic() {
        let (est, store) = tiny(10);
        let x = [0.2, -0.1, 0.4, 0.0];
        let run = || {
            let mut tape = Tape::new(&store);
            let xv = tape.input_vec(&x);
            let y = est.extrapolate(&mut tape, xv).unwrap();
            tape.value(y).to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn extrapolate_rejects_wrong_width() {
        let (est, store) = tiny(10);
        let mut tape = Tape::new(&store);
        let xv = tape.input_vec(&[0.0; 3]);
        assert!(matches!(est.extrapolate(&mut tape, xv), Err(Error::Shape(_))));
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let (est, store) = tiny(11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut s = random_sample(&mut rng, est.dims(), 3);
        let (sub, full) = est.predict(&store, &s.inputs).unwrap();
        s.sub_labels = sub;
        s.full_labels = full;
        let p = est.loss(&store, &[&s], 1.0).unwrap();
        assert_eq!((p.time, p.antenna, p.total), (0.0, 0.0, 0.0));
    }

    #[test]
    fn loss_matches_hand_sum() {
        let (est, store) = tiny(13);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let s = random_sample(&mut rng, est.dims(), 3);
        let (sub, full) = est.predict(&store, &s.inputs).unwrap();
        let sq = |a: &[Vec<f64>], b: &[Vec<f64>]| -> f64 {
            a.iter()
                .zip(b)
                .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)))
                .sum()
        };
        // M_b=1, M=1, N_s=2, N=4, L=3
        let lt = sq(&sub, &s.sub_labels) / (1.0 * 1.0 * 2.0 * 3.0);
        let la = sq(&full, &s.full_labels) / (1.0 * 1.0 * 4.0 * 3.0);
        let p = est.loss(&store, &[&s], 1.0).unwrap();
        assert!((p.time - lt).abs() < 1e-14);
        assert!((p.antenna - la).abs() < 1e-14);
        assert_eq!(p.total, p.time + p.antenna);
        let p2 = est.loss(&store, &[&s], 0.25).unwrap();
        assert!((p2.total - (lt + 0.25 * la)).abs() < 1e-14);
    }

    #[test]
    fn loss_is_symmetric_in_batch_order() {
        let (est, store) = tiny(15);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let samples: Vec<_> = (0..5).map(|_| random_sample(&mut rng, est.dims(), 3)).collect();
        let fwd: Vec<&TrainingSample> = samples.iter().collect();
        let rev: Vec<&TrainingSample> = samples.iter().rev().collect();
        let a = est.loss(&store, &fwd, 1.0).unwrap();
        let b = est.loss(&store, &rev, 1.0).unwrap();
        assert!((a.total - b.total).abs() < 1e-15 * a.total.max(1.0) * 10.0);
    }

    #[test]
    fn parallel_gradient_is_bit_identical() {
        let (est, store) = tiny(17);
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let samples: Vec<_> = (0..11).map(|_| random_sample(&mut rng, est.dims(), 3)).collect();
        let batch: Vec<&TrainingSample> = samples.iter().collect();
        let (pa, ga) = est.loss_and_grad(&store, &batch, 1.0, false).unwrap();
        let (pb, gb) = est.loss_and_grad(&store, &batch, 1.0, true).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(ga, gb);
        let pc = est.loss(&store, &batch, 1.0).unwrap();
        assert!((pa.total - pc.total).abs() < 1e-14);
    }

    #[test]
    fn unknown_solver_rejected() {
        let cfg = ModelConfig {
            solver: "adams".into(),
            ..ModelConfig::default()
        };
        let dims = Dims::new(1, 4, 2, &cfg);
        assert!(matches!(
            Estimator::new(dims, &cfg, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::Config(_))
        ));
    }
}
