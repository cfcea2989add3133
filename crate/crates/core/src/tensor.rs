//! Dense row-major linear algebra and elementwise activations.
//!
//! Everything here is deterministic: inner products are accumulated strictly
//! left to right so repeated runs produce bit-identical results.

use std::fmt;
use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Dense column vector of `f64`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vector(Vec<f64>);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    #[default]
    Sigmoid,
    Tanh,
    ReLU,
    Identity,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size, size);
        for i in 0..size {
            m.data[i * size + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        matmul(self, other)
    }

    /// `out += self · x`, without shape checks. Callers guarantee the shapes.
    pub(crate) fn gemv_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            *o += acc;
        }
    }

    /// `out += selfᵀ · y`, without shape checks.
    pub(crate) fn gemv_t_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        if self.cols == 0 {
            return;
        }
        for (row, &yr) in self.data.chunks_exact(self.cols).zip(y) {
            if yr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * yr;
            }
        }
    }

    /// `self += a ⊗ b` (rank-one update).
    pub(crate) fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        if self.cols == 0 {
            return;
        }
        for (row, &ar) in self.data.chunks_exact_mut(self.cols).zip(a) {
            if ar == 0.0 {
                continue;
            }
            for (m, bv) in row.iter_mut().zip(b) {
                *m += ar * bv;
            }
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl From<&[f64]> for Vector {
    fn from(v: &[f64]) -> Self {
        Self(v.to_vec())
    }
}

impl Deref for Vector {
    type Target = Vec<f64>;

    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

/// Standard matrix product with the inner index summed left to right.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!("matmul {a} · {b}")));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for r in 0..a.rows {
        for c in 0..b.cols {
            let mut acc = 0.0;
            for k in 0..a.cols {
                acc += a.get(r, k) * b.get(k, c);
            }
            out.set(r, c, acc);
        }
    }
    Ok(out)
}

/// Computes `w·x + u·h + b`, the pre-activation shared by every LSTM gate.
pub fn affine_combine(w: &Matrix, x: &[f64], u: &Matrix, h: &[f64], b: &[f64]) -> Result<Vector> {
    if w.cols != x.len() || u.cols != h.len() || w.rows != b.len() || u.rows != b.len() {
        return Err(Error::Shape(format!(
            "affine_combine W {w}, x {}, U {u}, h {}, b {}",
            x.len(),
            h.len(),
            b.len()
        )));
    }
    let mut wx = vec![0.0; b.len()];
    w.gemv_acc(x, &mut wx);
    let mut uh = vec![0.0; b.len()];
    u.gemv_acc(h, &mut uh);
    Ok(Vector(
        wx.iter()
            .zip(&uh)
            .zip(b)
            .map(|((a, c), bias)| a + c + bias)
            .collect(),
    ))
}

impl ActivationKind {
    #[inline]
    pub fn eval(self, z: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => sigmoid(z),
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::ReLU => z.max(0.0),
            ActivationKind::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            ActivationKind::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            ActivationKind::ReLU => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::ReLU => "relu",
            ActivationKind::Identity => "identity",
        }
    }
}

impl std::str::FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Self::Sigmoid),
            "tanh" => Ok(Self::Tanh),
            "relu" => Ok(Self::ReLU),
            "identity" | "linear" => Ok(Self::Identity),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    // split on sign so exp never overflows
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn activation_apply(v: &[f64], kind: ActivationKind) -> Vector {
    Vector(v.iter().map(|&z| kind.eval(z)).collect())
}

pub fn activation_derivative(kind: ActivationKind, pre: &[f64]) -> Vector {
    Vector(pre.iter().map(|&z| kind.derivative(z)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const ALL: [ActivationKind; 4] = [
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::ReLU,
        ActivationKind::Identity,
    ];

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Matrix::identity(2), &a).unwrap(), a);
        let b = Matrix::from_rows(&[vec![5.0], vec![6.0]]).unwrap();
        let p = matmul(&a, &b).unwrap();
        assert_eq!(p.as_slice(), &[17.0, 39.0]);
        let z = matmul(&Matrix::zeros(3, 2), &a).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_error_names_both() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3 · 2x3"), "{msg}");
    }

    #[test]
    fn affine_cases() {
        let out = affine_combine(
            &Matrix::zeros(2, 3),
            &[1.0, 2.0, 3.0],
            &Matrix::zeros(2, 2),
            &[5.0, 6.0],
            &[1.0, 2.0],
        )
        .unwrap();
        assert_eq!(&out[..], &[1.0, 2.0]);
        let out = affine_combine(&Matrix::identity(1), &[3.0], &Matrix::identity(1), &[4.0], &[-7.0]).unwrap();
        assert_eq!(&out[..], &[0.0]);
        let out = affine_combine(&Matrix::zeros(0, 2), &[1.0, 1.0], &Matrix::zeros(0, 0), &[], &[]).unwrap();
        assert!(out.is_empty());
        assert!(affine_combine(&Matrix::zeros(2, 2), &[1.0], &Matrix::zeros(2, 2), &[0.0; 2], &[0.0; 2]).is_err());
    }

    #[test]
    fn activation_values() {
        assert_eq!(activation_apply(&[0.0], ActivationKind::Sigmoid)[0], 0.5);
        assert_eq!(activation_apply(&[0.0], ActivationKind::Tanh)[0], 0.0);
        assert_eq!(activation_apply(&[-2.0], ActivationKind::ReLU)[0], 0.0);
        assert_eq!(activation_apply(&[-2.0], ActivationKind::Identity)[0], -2.0);
        assert_eq!(ActivationKind::Sigmoid.eval(-1000.0), 0.0);
        assert_eq!(ActivationKind::Sigmoid.eval(1000.0), 1.0);
    }

    #[test]
    fn sigmoid_derivative_at_zero_matches_fd() {
        let d = activation_derivative(ActivationKind::Sigmoid, &[0.0])[0];
        assert_eq!(d, 0.25);
        let eps = 1e-6;
        let fd = (ActivationKind::Sigmoid.eval(eps) - ActivationKind::Sigmoid.eval(-eps)) / (2.0 * eps);
        assert!((d - fd).abs() < 1e-8);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let eps = 1e-6;
        for kind in ALL {
            for _ in 0..1000 {
                let z: f64 = rng.gen_range(-5.0..5.0);
                if kind == ActivationKind::ReLU && z.abs() < 2.0 * eps {
                    continue;
                }
                let fd = (kind.eval(z + eps) - kind.eval(z - eps)) / (2.0 * eps);
                let an = kind.derivative(z);
                let rel = (an - fd).abs() / (an.abs() + fd.abs()).max(1e-8);
                assert!(rel < 1e-6, "{kind} at {z}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn matmul_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (p, q, r, s) = (
                rng.gen_range(1..=16),
                rng.gen_range(1..=16),
                rng.gen_range(1..=16),
                rng.gen_range(1..=16),
            );
            let a = random_matrix(&mut rng, p, q);
            let b = random_matrix(&mut rng, q, r);
            let c = random_matrix(&mut rng, r, s);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            assert!(left.max_abs_diff(&right) < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn matmul_is_pure(seed in any::<u64>(), n in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, n, n + 1);
            let b = random_matrix(&mut rng, n + 1, n);
            let x = matmul(&a, &b).unwrap();
            let y = matmul(&a, &b).unwrap();
            prop_assert!(x.as_slice().iter().zip(y.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }

        #[test]
        fn gemv_matches_matmul(seed in any::<u64>(), r in 1usize..10, c in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, r, c);
            let x = random_matrix(&mut rng, c, 1);
            let mut out = vec![0.0; r];
            a.gemv_acc(x.as_slice(), &mut out);
            let reference = matmul(&a, &x).unwrap();
            prop_assert_eq!(&out[..], reference.as_slice());
        }
    }
}
