//! Dynamic reverse-mode differentiation over vector-valued nodes.
//!
//! A [`Tape`] is built fresh for every forward pass. Parameters are read
//! in place from the borrowed [`ParamStore`]; each parameter gets at most one
//! leaf node per tape so repeated uses accumulate into a single gradient.
//! [`Tape::backward`] consumes the tape and adds `∂loss/∂param` into a
//! [`GradBuffer`].

use crate::error::{shape_err, Error, Result};
use crate::tensor::{GradBuffer, ParamId, ParamStore, RealTensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    /// `w · x + b` with `w` of shape `[out, in]`.
    Affine { w: Var, b: Var, x: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// `a + c·b`
    Axpy { a: Var, b: Var, c: f64 },
    Tanh(Var),
    Sigmoid(Var),
    OneMinus(Var),
    Concat(Var, Var),
    /// `Σ (a − target)²`
    SumSqDiff { a: Var, target: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    // empty for parameter leaves, whose values live in the store
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.tensor(id).data(),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    fn size(&self, v: Var) -> usize {
        self.value(v).len()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { shape, value, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; receives no gradient outside the tape.
    pub fn input(&mut self, tensor: RealTensor) -> Var {
        let shape = tensor.shape().to_vec();
        self.push(shape, tensor.data().to_vec(), Op::Input)
    }

    pub fn input_vec(&mut self, values: &[f64]) -> Var {
        self.push(vec![values.len()], values.to_vec(), Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.index()] {
            return v;
        }
        let shape = self.params.tensor(id).shape().to_vec();
        let v = self.push(shape, Vec::new(), Op::Param(id));
        self.param_nodes[id.index()] = Some(v);
        v
    }

    pub fn affine(&mut self, w: Var, b: Var, x: Var) -> Result<Var> {
        let (out, inn) = match self.shape(w) {
            [o, i] => (*o, *i),
            s => return Err(shape_err!("affine weight must be 2-D, got {s:?}")),
        };
        if self.size(x) != inn {
            return Err(shape_err!("affine expects input of {inn}, got {}", self.size(x)));
        }
        if self.size(b) != out {
            return Err(shape_err!("affine expects bias of {out}, got {}", self.size(b)));
        }
        let wv = self.value(w);
        let xv = self.value(x);
        let bv = self.value(b);
        let y: Vec<f64> = (0..out)
            .map(|o| {
                let row = &wv[o * inn..(o + 1) * inn];
                bv[o] + row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Ok(self.push(vec![out], y, Op::Affine { w, b, x }))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        what: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        if self.size(a) != self.size(b) {
            return Err(shape_err!(
                "{what} of {} and {} elements",
                self.size(a),
                self.size(b)
            ));
        }
        let y: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, y, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn axpy(&mut self, a: Var, b: Var, c: f64) -> Result<Var> {
        self.binary(a, b, "axpy", |x, y| x + c * y, Op::Axpy { a, b, c })
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let y: Vec<f64> = self.value(a).iter().map(|x| f(*x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, y, op)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.unary(a, |x| 1.0 - x, Op::OneMinus(a))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let mut y = self.value(a).to_vec();
        y.extend_from_slice(self.value(b));
        let n = y.len();
        self.push(vec![n], y, Op::Concat(a, b))
    }

    /// Scalar `Σ (a − target)²`.
    pub fn sum_sq_diff(&mut self, a: Var, target: &[f64]) -> Result<Var> {
        if self.size(a) != target.len() {
            return Err(shape_err!(
                "prediction of {} against target of {}",
                self.size(a),
                target.len()
            ));
        }
        let s = self
            .value(a)
            .iter()
            .zip(target)
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        Ok(self.push(
            vec![],
            vec![s],
            Op::SumSqDiff {
                a,
                target: target.to_vec(),
            },
        ))
    }

    /// Propagates `∂loss/∂·` back through the tape and adds parameter
    /// gradients into `grads`. Parameters the loss does not reach get nothing
    /// added, so a zeroed buffer stays zero for them.
    pub fn backward(self, loss: Var, grads: &mut GradBuffer) -> Result<()> {
        if self.size(loss) != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {} elements",
                self.size(loss)
            )));
        }
        grads.check_matches(self.params)?;

        let mut adj: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        adj.resize_with(self.nodes.len(), || None);
        adj[loss.0] = Some(vec![1.0]);

        fn acc<'a>(adj: &'a mut [Option<Vec<f64>>], v: Var, n: usize) -> &'a mut [f64] {
            adj[v.0].get_or_insert_with(|| vec![0.0; n])
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    for (d, s) in grads.get_mut(*id).iter_mut().zip(&g) {
                        *d += s;
                    }
                }
                Op::Affine { w, b, x } => {
                    let inn = self.size(*x);
                    let out = g.len();
                    let wv = self.value(*w);
                    let xv = self.value(*x);
                    {
                        let gx = acc(&mut adj, *x, inn);
                        for (o, go) in g.iter().enumerate() {
                            if *go == 0.0 {
                                continue;
                            }
                            let row = &wv[o * inn..(o + 1) * inn];
                            for (d, wij) in gx.iter_mut().zip(row) {
                                *d += go * wij;
                            }
                        }
                    }
                    {
                        let gw = acc(&mut adj, *w, out * inn);
                        for (o, go) in g.iter().enumerate() {
                            let row = &mut gw[o * inn..(o + 1) * inn];
                            for (d, xi) in row.iter_mut().zip(xv) {
                                *d += go * xi;
                            }
                        }
                    }
                    let gb = acc(&mut adj, *b, out);
                    for (d, s) in gb.iter_mut().zip(&g) {
                        *d += s;
                    }
                }
                Op::Add(a, b) => {
                    add_into(acc(&mut adj, *a, g.len()), &g, 1.0);
                    add_into(acc(&mut adj, *b, g.len()), &g, 1.0);
                }
                Op::Sub(a, b) => {
                    add_into(acc(&mut adj, *a, g.len()), &g, 1.0);
                    add_into(acc(&mut adj, *b, g.len()), &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = acc(&mut adj, *a, g.len());
                    for ((d, s), y) in ga.iter_mut().zip(&g).zip(bv) {
                        *d += s * y;
                    }
                    let gb = acc(&mut adj, *b, g.len());
                    for ((d, s), x) in gb.iter_mut().zip(&g).zip(av) {
                        *d += s * x;
                    }
                }
                Op::Scale(a, c) => add_into(acc(&mut adj, *a, g.len()), &g, *c),
                Op::Axpy { a, b, c } => {
                    add_into(acc(&mut adj, *a, g.len()), &g, 1.0);
                    add_into(acc(&mut adj, *b, g.len()), &g, *c);
                }
                Op::Tanh(a) => {
                    let ga = acc(&mut adj, *a, g.len());
                    for ((d, s), y) in ga.iter_mut().zip(&g).zip(&node.value) {
                        *d += s * (1.0 - y * y);
                    }
                }
                Op::Sigmoid(a) => {
                    let ga = acc(&mut adj, *a, g.len());
                    for ((d, s), y) in ga.iter_mut().zip(&g).zip(&node.value) {
                        *d += s * y * (1.0 - y);
                    }
                }
                Op::OneMinus(a) => add_into(acc(&mut adj, *a, g.len()), &g, -1.0),
                Op::Concat(a, b) => {
                    let na = self.size(*a);
                    let nb = self.size(*b);
                    add_into(acc(&mut adj, *a, na), &g[..na], 1.0);
                    add_into(acc(&mut adj, *b, nb), &g[na..], 1.0);
                }
                Op::SumSqDiff { a, target } => {
                    let n = target.len();
                    let av = self.value(*a);
                    let ga = acc(&mut adj, *a, n);
                    for ((d, p), t) in ga.iter_mut().zip(av).zip(target) {
                        *d += 2.0 * g[0] * (p - t);
                    }
                }
            }
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64], c: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * s;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
