//! Dense layers on the tape.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{shape_err, Result};
use crate::tensor::{ParamId, ParamStore, RealTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape<'_>, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Identity => x,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
    in_dim: usize,
    out_dim: usize,
}

impl DenseLayer {
    /// Registers `{name}.weight` (`[out, in]`) and `{name}.bias` in `group`.
    /// Weights are (semi-)orthogonal, biases zero.
    pub fn new(
        store: &mut ParamStore,
        group: &str,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(shape_err!("dense layer {group}/{name} with a zero dimension"));
        }
        let w = orthogonal(out_dim, in_dim, rng);
        let weight = store.register(
            group,
            &format!("{name}.weight"),
            RealTensor::new(vec![out_dim, in_dim], w)?,
        )?;
        let bias = store.register(group, &format!("{name}.bias"), RealTensor::zeros(vec![out_dim]))?;
        Ok(Self {
            weight,
            bias,
            activation,
            in_dim,
            out_dim,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Multiplies the stored weights by `factor`.
    pub fn scale_weights(&self, store: &mut ParamStore, factor: f64) {
        for w in store.tensor_mut(self.weight).data_mut() {
            *w *= factor;
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let n = tape.value(x).len();
        if n != self.in_dim {
            return Err(shape_err!("layer expects {} inputs, got {n}", self.in_dim));
        }
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let y = tape.affine(w, b, x)?;
        Ok(self.activation.apply(tape, y))
    }
}

/// Row-major `rows × cols` matrix with orthonormal rows (`rows ≤ cols`) or
/// orthonormal columns, from the sign-corrected QR factor of a Gaussian draw.
fn orthogonal(rows: usize, cols: usize, rng: &mut impl Rng) -> Vec<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    let q = if rows >= cols { q } else { q.transpose() };
    (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .map(|(i, j)| q[(i, j)])
        .collect()
}

/// Runs `x` through `layers` in order.
pub fn forward_chain(layers: &[DenseLayer], tape: &mut Tape<'_>, mut x: Var) -> Result<Var> {
    for layer in layers {
        x = layer.forward(tape, x)?;
    }
    Ok(x)
}
