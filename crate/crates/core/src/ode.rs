//! Fixed-step integration of learned dynamics, and the RK-patterned residual
//! block used by the extrapolation network.
//!
//! Integration schemes implement [`OdeSolver`] and are looked up by name
//! through [`solver_by_name`]; the estimator config selects one at runtime.

use std::fmt;

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::nn::{forward_chain, Activation, DenseLayer};
use crate::tensor::ParamStore;

/// Right-hand side `dξ/dt = f(ξ)` built on a tape.
pub type Dynamics<'a, 'p> = dyn Fn(&mut Tape<'p>, Var) -> Result<Var> + 'a;

/// One explicit step of size `h` for autonomous dynamics.
pub trait OdeSolver: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn step<'p>(&self, tape: &mut Tape<'p>, f: &Dynamics<'_, 'p>, state: Var, h: f64) -> Result<Var>;
}

/// Classic fourth-order Runge–Kutta.
#[derive(Debug, Default, Clone, Copy)]
pub struct Rk4;

impl OdeSolver for Rk4 {
    fn name(&self) -> &'static str {
        "rk4"
    }

    fn step<'p>(&self, tape: &mut Tape<'p>, f: &Dynamics<'_, 'p>, x: Var, h: f64) -> Result<Var> {
        rk4_pattern(tape, x, h, |tape, _, input| f(tape, input))
    }
}

/// Forward Euler.
#[derive(Debug, Default, Clone, Copy)]
pub struct Euler;

impl OdeSolver for Euler {
    fn name(&self) -> &'static str {
        "euler"
    }

    fn step<'p>(&self, tape: &mut Tape<'p>, f: &Dynamics<'_, 'p>, x: Var, h: f64) -> Result<Var> {
        let k = f(tape, x)?;
        tape.axpy(x, k, h)
    }
}

/// Explicit midpoint (second order).
#[derive(Debug, Default, Clone, Copy)]
pub struct Midpoint;

impl OdeSolver for Midpoint {
    fn name(&self) -> &'static str {
        "midpoint"
    }

    fn step<'p>(&self, tape: &mut Tape<'p>, f: &Dynamics<'_, 'p>, x: Var, h: f64) -> Result<Var> {
        let k1 = f(tape, x)?;
        let mid = tape.axpy(x, k1, 0.5 * h)?;
        let k2 = f(tape, mid)?;
        tape.axpy(x, k2, h)
    }
}

/// Holds the state fixed. Turns the ODE-RNN into a plain GRU recurrence.
#[derive(Debug, Default, Clone, Copy)]
pub struct Frozen;

impl OdeSolver for Frozen {
    fn name(&self) -> &'static str {
        "none"
    }

    fn step<'p>(&self, _: &mut Tape<'p>, _: &Dynamics<'_, 'p>, x: Var, _: f64) -> Result<Var> {
        Ok(x)
    }
}

type SolverCtor = fn() -> Box<dyn OdeSolver>;

static SOLVERS: &[(&str, SolverCtor)] = &[
    ("rk4", || Box::new(Rk4)),
    ("euler", || Box::new(Euler)),
    ("midpoint", || Box::new(Midpoint)),
    ("none", || Box::new(Frozen)),
];

pub fn solver_names() -> impl Iterator<Item = &'static str> {
    SOLVERS.iter().map(|(n, _)| *n)
}

pub fn solver_by_name(name: &str) -> Result<Box<dyn OdeSolver>> {
    SOLVERS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, ctor)| ctor())
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown ODE solver {name:?}; known: {}",
                solver_names().collect::<Vec<_>>().join(", ")
            ))
        })
}

/// `x + (h/6)(k₁ + 2k₂ + 2k₃ + k₄)` where stage `i` evaluates `stage_fn(i, ·)`.
fn rk4_pattern<'p>(
    tape: &mut Tape<'p>,
    x: Var,
    h: f64,
    stage_fn: impl Fn(&mut Tape<'p>, usize, Var) -> Result<Var>,
) -> Result<Var> {
    let k1 = stage_fn(tape, 0, x)?;
    let x2 = tape.axpy(x, k1, 0.5 * h)?;
    let k2 = stage_fn(tape, 1, x2)?;
    let x3 = tape.axpy(x, k2, 0.5 * h)?;
    let k3 = stage_fn(tape, 2, x3)?;
    let x4 = tape.axpy(x, k3, h)?;
    let k4 = stage_fn(tape, 3, x4)?;
    let acc = tape.axpy(x, k1, h / 6.0)?;
    let acc = tape.axpy(acc, k2, h / 3.0)?;
    let acc = tape.axpy(acc, k3, h / 3.0)?;
    tape.axpy(acc, k4, h / 6.0)
}

/// Integrates `dξ/dt = f(ξ)` from `t_start` to `t_end` in `steps` uniform
/// steps. Every intermediate state is checked for finiteness.
pub fn ode_solve<'p>(
    solver: &dyn OdeSolver,
    tape: &mut Tape<'p>,
    f: &Dynamics<'_, 'p>,
    initial: Var,
    t_start: f64,
    t_end: f64,
    steps: usize,
) -> Result<Var> {
    if steps == 0 {
        return Err(Error::Contract("ode_solve needs at least one step".into()));
    }
    if !(t_end >= t_start) {
        return Err(Error::Contract(format!(
            "ode_solve interval [{t_start}, {t_end}] runs backwards"
        )));
    }
    let h = (t_end - t_start) / steps as f64;
    if h == 0.0 {
        return Ok(initial);
    }
    let mut state = initial;
    for i in 0..steps {
        state = solver.step(tape, f, state, h)?;
        if tape.value(state).iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!(
                "non-finite ODE state after step {} of {steps}",
                i + 1
            )));
        }
    }
    Ok(state)
}

/// Weight scale for layers whose output feeds a residual update: the learned
/// vector field's last layer and every stage of an RK residual block. Both
/// maps then start close to the identity.
pub const SMALL_INIT_GAIN: f64 = 0.1;

/// Learned dynamics: three width-preserving tanh layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsNet {
    layers: Vec<DenseLayer>,
}

impl DynamicsNet {
    pub const LAYERS: usize = 3;

    pub fn new(store: &mut ParamStore, group: &str, dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let layers = (0..Self::LAYERS)
            .map(|i| DenseLayer::new(store, group, &format!("dyn{i}"), dim, dim, Activation::Tanh, rng))
            .collect::<Result<Vec<DenseLayer>>>()?;
        layers[Self::LAYERS - 1].scale_weights(store, SMALL_INIT_GAIN);
        Ok(Self { layers })
    }

    pub fn dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        forward_chain(&self.layers, tape, x)
    }
}

/// Residual block whose four stage networks are combined with RK4 weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RkResidualBlock {
    stages: Vec<DenseLayer>,
    pub step: f64,
}

impl RkResidualBlock {
    pub fn new(
        store: &mut ParamStore,
        group: &str,
        name: &str,
        dim: usize,
        step: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let stages = (0..4)
            .map(|i| {
                DenseLayer::new(store, group, &format!("{name}.stage{i}"), dim, dim, Activation::Tanh, rng)
            })
            .collect::<Result<Vec<DenseLayer>>>()?;
        for st in &stages {
            st.scale_weights(store, SMALL_INIT_GAIN);
        }
        Ok(Self { stages, step })
    }

    pub fn dim(&self) -> usize {
        self.stages[0].in_dim()
    }

    pub fn stages(&self) -> &[DenseLayer] {
        &self.stages
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let n = tape.value(x).len();
        if n != self.dim() {
            return Err(shape_err!("RK block of width {} fed {n} values", self.dim()));
        }
        rk4_pattern(tape, x, self.step, |tape, i, input| {
            self.stages[i].forward(tape, input)
        })
    }
}
