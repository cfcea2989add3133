//! Double-double arithmetic (~106-bit significand) and a scalar-generic
//! LSTM forward pass.
//!
//! Only the finite-difference gradient oracle uses this. Central differences
//! at a step of 1e-5 lose about five digits to cancellation, which in plain
//! `f64` leaves ~1e-11 of noise; evaluating the loss in double-double removes
//! that floor so the comparison measures the analytic gradient, not rounding.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::lstm::{Gate, LstmNetwork};
use crate::tensor::ActivationKind;

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct DoubleF64 {
    pub hi: f64,
    pub lo: f64,
}

const LN2: DoubleF64 = DoubleF64 {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleF64 {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };
    pub const ONE: Self = Self { hi: 1.0, lo: 0.0 };

    pub fn new(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn scale_pow2(self, k: i32) -> Self {
        let f = 2f64.powi(k);
        Self {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Self::new(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Self::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = self - LN2 * Self::new(k);
        // exp(r) = exp(r / 1024)^1024; Taylor series on the tiny argument.
        let s = r.scale_pow2(-10);
        let mut term = s;
        let mut sum = s;
        for i in 2..=12 {
            term = term * s / Self::new(i as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        // (1 + e)² − 1 = 2e + e², kept in expm1 form to avoid losing digits
        for _ in 0..10 {
            sum = sum.scale_pow2(1) + sum * sum;
        }
        (sum + Self::ONE).scale_pow2(k as i32)
    }

    pub fn tanh(self) -> Self {
        if self.hi.abs() > 40.0 {
            return Self::new(self.hi.signum());
        }
        let e = (self.scale_pow2(1)).exp();
        (e - Self::ONE) / (e + Self::ONE)
    }

    pub fn sigmoid(self) -> Self {
        if self.hi >= 0.0 {
            Self::ONE / (Self::ONE + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::ONE + e)
        }
    }
}

impl Add for DoubleF64 {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Self::renorm(s, e + f)
    }
}

impl Neg for DoubleF64 {
    type Output = Self;

    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DoubleF64 {
    type Output = Self;

    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Mul for DoubleF64 {
    type Output = Self;

    fn mul(self, o: Self) -> Self {
        let (p, e) = two_prod(self.hi, o.hi);
        Self::renorm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for DoubleF64 {
    type Output = Self;

    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self - o * Self::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Self::new(q2);
        let q3 = r.hi / o.hi;
        let (q1, q2) = quick_two_sum(q1, q2);
        Self { hi: q1, lo: q2 } + Self::new(q3)
    }
}

/// Scalar type the oracle forward pass is generic over.
pub(crate) trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + PartialOrd
{
    fn of(v: f64) -> Self;
    fn tanh(self) -> Self;
    fn sigmoid(self) -> Self;
}

impl Real for f64 {
    fn of(v: f64) -> Self {
        v
    }

    fn tanh(self) -> Self {
        f64::tanh(self)
    }

    fn sigmoid(self) -> Self {
        ActivationKind::Sigmoid.eval(self)
    }
}

impl Real for DoubleF64 {
    fn of(v: f64) -> Self {
        Self::new(v)
    }

    fn tanh(self) -> Self {
        DoubleF64::tanh(self)
    }

    fn sigmoid(self) -> Self {
        DoubleF64::sigmoid(self)
    }
}

fn activate<T: Real>(kind: ActivationKind, z: T) -> T {
    match kind {
        ActivationKind::Sigmoid => z.sigmoid(),
        ActivationKind::Tanh => z.tanh(),
        ActivationKind::ReLU => {
            if z > T::of(0.0) {
                z
            } else {
                T::of(0.0)
            }
        }
        ActivationKind::Identity => z,
    }
}

/// Straight-line forward pass written independently of [`crate::lstm`].
///
/// `override_param` replaces the parameter at flat index `.0` (serialization
/// order) with the value `.1`, so perturbed parameters can carry more
/// precision than `f64`.
pub(crate) fn forward_generic<T: Real>(
    net: &LstmNetwork,
    seq: &[Vec<f64>],
    override_param: Option<(usize, T)>,
) -> Vec<T> {
    let mut offset = 0usize;
    let param = |offset: usize, v: f64| -> T {
        match override_param {
            Some((idx, val)) if idx == offset => val,
            _ => T::of(v),
        }
    };
    let mut inputs: Vec<Vec<T>> = seq.iter().map(|x| x.iter().map(|&v| T::of(v)).collect()).collect();
    for layer in &net.layers {
        let (d, hd) = (layer.input_dim, layer.hidden_dim);
        let w_base = offset;
        let u_base = w_base + 4 * hd * d;
        let b_base = u_base + 4 * hd * hd;
        offset = b_base + 4 * hd;
        let mut h = vec![T::of(0.0); hd];
        let mut c = vec![T::of(0.0); hd];
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in &inputs {
            let mut gates: [Vec<T>; 4] = std::array::from_fn(|_| vec![T::of(0.0); hd]);
            for (g, gate_out) in gates.iter_mut().enumerate() {
                for (r, out) in gate_out.iter_mut().enumerate() {
                    let bi = b_base + g * hd + r;
                    let mut z = param(bi, layer.b[g][r]);
                    for (col, &xv) in x.iter().enumerate() {
                        let wi = w_base + g * hd * d + r * d + col;
                        z = z + param(wi, layer.w[g].get(r, col)) * xv;
                    }
                    for (col, &hv) in h.iter().enumerate() {
                        let ui = u_base + g * hd * hd + r * hd + col;
                        z = z + param(ui, layer.u[g].get(r, col)) * hv;
                    }
                    let kind = if g == Gate::Candidate as usize {
                        ActivationKind::Tanh
                    } else {
                        layer.gate_activation
                    };
                    *out = activate(kind, z);
                }
            }
            let [f, i, k, o] = &gates;
            for r in 0..hd {
                c[r] = f[r] * c[r] + i[r] * k[r];
                h[r] = o[r] * c[r].tanh();
            }
            outputs.push(h.clone());
        }
        inputs = outputs;
    }
    let top = inputs.last().expect("nonempty sequence");
    let (n, hd) = net.head_weights.shape();
    let hw_base = offset;
    let hb_base = hw_base + n * hd;
    (0..n)
        .map(|r| {
            let mut z = param(hb_base + r, net.head_bias[r]);
            for (col, &hv) in top.iter().enumerate() {
                z = z + param(hw_base + r * hd + col, net.head_weights.get(r, col)) * hv;
            }
            activate(net.head_activation, z)
        })
        .collect()
}
