//! Dense complex matrices for the channel model and the pilot estimator.
//!
//! Storage is row-major. Column vectors are `n × 1` matrices.

use num_complex::Complex64;
use std::ops::{Index, IndexMut};

use crate::error::{shape_err, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn column_vector(entries: Vec<Complex64>) -> Self {
        Self {
            rows: entries.len(),
            cols: 1,
            data: entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != rhs.rows {
            return Err(shape_err!(
                "cannot multiply {}x{} by {}x{}",
                self.rows,
                self.cols,
                rhs.rows,
                rhs.cols
            ));
        }
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, s: Complex64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip_with(rhs, |a, b| a - b)
    }

    fn zip_with(
        &self,
        rhs: &ComplexMatrix,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<ComplexMatrix> {
        if self.shape() != rhs.shape() {
            return Err(shape_err!(
                "elementwise op on {:?} and {:?}",
                self.shape(),
                rhs.shape()
            ));
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    /// Kronecker product `self ⊗ rhs`.
    pub fn kron(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.rows * rhs.rows, self.cols * rhs.cols, |r, c| {
            self[(r / rhs.rows, c / rhs.cols)] * rhs[(r % rhs.rows, c % rhs.cols)]
        })
    }

    pub fn column(&self, c: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.rows, 1, |r, _| self[(r, c)])
    }

    /// Sub-matrix made of the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<ComplexMatrix> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.cols) {
            return Err(shape_err!("column {bad} out of range for {} columns", self.cols));
        }
        Ok(ComplexMatrix::from_fn(self.rows, cols.len(), |r, c| {
            self[(r, cols[c])]
        }))
    }

    /// `self · diag(d)`, i.e. column `k` scaled by `d[k]`.
    pub fn mul_diag(&self, d: &[Complex64]) -> Result<ComplexMatrix> {
        if d.len() != self.cols {
            return Err(shape_err!(
                "diagonal of length {} for {} columns",
                d.len(),
                self.cols
            ));
        }
        Ok(ComplexMatrix::from_fn(self.rows, self.cols, |r, c| {
            self[(r, c)] * d[c]
        }))
    }

    /// Column-major stacking (`vec(·)`).
    pub fn vectorize(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.push(self[(r, c)]);
            }
        }
        out
    }

    /// Inverse of [`vectorize`](Self::vectorize).
    pub fn from_vectorized(rows: usize, cols: usize, v: &[Complex64]) -> Result<ComplexMatrix> {
        if v.len() != rows * cols {
            return Err(shape_err!("{} entries for a {rows}x{cols} matrix", v.len()));
        }
        Ok(ComplexMatrix::from_fn(rows, cols, |r, c| v[c * rows + r]))
    }

    pub fn max_abs_diff(&self, rhs: &ComplexMatrix) -> f64 {
        assert_eq!(self.shape(), rhs.shape());
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Interleave a complex vector into `[Re; Im]` halves.
pub fn stack_re_im(v: &[Complex64]) -> Vec<f64> {
    v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)).collect()
}

/// Inverse of [`stack_re_im`].
pub fn unstack_re_im(x: &[f64]) -> Result<Vec<Complex64>> {
    if x.len() % 2 != 0 {
        return Err(shape_err!("stacked vector has odd length {}", x.len()));
    }
    let half = x.len() / 2;
    Ok((0..half).map(|i| Complex64::new(x[i], x[half + i])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn identity_is_left_neutral() {
        let a = ComplexMatrix::from_fn(2, 3, |r, k| c(r as f64, k as f64 - 1.0));
        assert_eq!(ComplexMatrix::identity(2).matmul(&a).unwrap(), a);
    }

    #[test]
    fn permutation_swaps_rows() {
        let p = ComplexMatrix::from_row_major(2, 2, vec![c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
            .unwrap();
        let v = ComplexMatrix::column_vector(vec![c(1.5, -2.0), c(0.25, 3.0)]);
        let out = p.matmul(&v).unwrap();
        assert_eq!(out.as_slice(), &[c(0.25, 3.0), c(1.5, -2.0)]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 3, 4);
        let b = random_matrix(&mut rng, 4, 2);
        let got = a.matmul(&b).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut acc = c(0.0, 0.0);
                for k in 0..4 {
                    acc += a[(i, k)] * b[(k, j)];
                }
                assert!((got[(i, j)] - acc).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = ComplexMatrix::zeros(2, 3);
        let b = ComplexMatrix::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(crate::Error::Shape(_))));
    }

    #[test]
    fn vectorize_is_column_major() {
        let a = ComplexMatrix::from_fn(2, 2, |r, k| c((r * 10 + k) as f64, 0.0));
        let v: Vec<f64> = a.vectorize().iter().map(|z| z.re).collect();
        assert_eq!(v, vec![0.0, 10.0, 1.0, 11.0]);
        assert_eq!(ComplexMatrix::from_vectorized(2, 2, &a.vectorize()).unwrap(), a);
    }

    #[test]
    fn frobenius_zero_only_for_zero() {
        assert_eq!(ComplexMatrix::zeros(3, 2).frobenius_norm(), 0.0);
        let mut m = ComplexMatrix::zeros(3, 2);
        m[(2, 1)] = c(0.0, -1e-3);
        assert!(m.frobenius_norm() > 0.0);
    }

    proptest! {
        #[test]
        fn adjoint_of_product(seed in any::<u64>(), m in 1usize..5, k in 1usize..5, n in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, m, k);
            let b = random_matrix(&mut rng, k, n);
            let lhs = a.matmul(&b).unwrap().adjoint();
            let rhs = b.adjoint().matmul(&a.adjoint()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
            prop_assert_eq!(a.adjoint().adjoint(), a);
        }

        #[test]
        fn stacking_round_trips(v in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 0..20)) {
            let z: Vec<Complex64> = v.iter().map(|&(re, im)| c(re, im)).collect();
            prop_assert_eq!(unstack_re_im(&stack_re_im(&z)).unwrap(), z);
        }
    }
}
