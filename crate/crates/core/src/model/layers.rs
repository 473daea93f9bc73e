//! Position-wise building blocks with their reverse-mode rules.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::scalar::Scalar;

pub const LN_EPS: f64 = 1e-5;

/// Affine map `x W + b`, `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<S> {
    pub w: Array2<S>,
    pub b: Array1<S>,
}

impl<S: Scalar> Linear<S> {
    /// Weights uniform on `(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            w: Array2::from_shape_simple_fn((fan_in, fan_out), || S::of(rng.random_range(-bound..bound))),
            b: Array1::zeros(fan_out),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.ncols()
    }

    pub fn forward(&self, x: ArrayView2<'_, S>) -> Array2<S> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<'_, S>, dy: ArrayView2<'_, S>, grad: &mut Linear<S>) -> Array2<S> {
        ndarray::linalg::general_mat_mul(S::one(), &x.t(), &dy, S::one(), &mut grad.w);
        grad.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }

    /// Single-vector forward into a preallocated buffer, accumulating rows of
    /// `W` so the inner loop runs over contiguous memory.
    pub fn forward_into(&self, x: &[S], out: &mut [S]) {
        out.copy_from_slice(self.b.as_slice().expect("bias is contiguous"));
        for (xi, row) in x.iter().zip(self.w.rows()) {
            let row = row.to_slice().expect("weights are row-major");
            for (o, &wij) in out.iter_mut().zip(row) {
                *o += *xi * wij;
            }
        }
    }
}

/// Per-position normalization over the feature axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<S> {
    pub gamma: Array1<S>,
    pub beta: Array1<S>,
}

/// Saved statistics for the backward pass.
#[derive(Debug, Clone)]
pub struct LnTape<S> {
    pub xhat: Array2<S>,
    pub inv_std: Array1<S>,
}

impl<S: Scalar> LayerNorm<S> {
    pub fn new(d: usize) -> Self {
        Self {
            gamma: Array1::ones(d),
            beta: Array1::zeros(d),
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            gamma: Array1::zeros(d),
            beta: Array1::zeros(d),
        }
    }

    pub fn forward(&self, x: ArrayView2<'_, S>) -> (Array2<S>, LnTape<S>) {
        let (t_len, d) = x.dim();
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let gamma = self.gamma.as_slice().expect("contiguous");
        let beta = self.beta.as_slice().expect("contiguous");
        let eps = S::of(LN_EPS);
        let df = S::of_usize(d);
        let mut xhat = Array2::zeros((t_len, d));
        let mut y = Array2::zeros((t_len, d));
        let mut inv_std = Array1::zeros(t_len);
        let xh = xhat.as_slice_mut().expect("fresh array");
        let ys = y.as_slice_mut().expect("fresh array");
        for t in 0..t_len {
            let row = &xs[t * d..(t + 1) * d];
            let mean = row.iter().fold(S::zero(), |a, &v| a + v) / df;
            let var = row.iter().fold(S::zero(), |a, &v| a + (v - mean) * (v - mean)) / df;
            let is = S::one() / (var + eps).sqrt();
            inv_std[t] = is;
            let out = &mut xh[t * d..(t + 1) * d];
            let yo = &mut ys[t * d..(t + 1) * d];
            for c in 0..d {
                let z = (row[c] - mean) * is;
                out[c] = z;
                yo[c] = z * gamma[c] + beta[c];
            }
        }
        (y, LnTape { xhat, inv_std })
    }

    pub fn backward(&self, tape: &LnTape<S>, dy: ArrayView2<'_, S>, grad: &mut LayerNorm<S>) -> Array2<S> {
        let (t_len, d) = dy.dim();
        let dy = dy.as_standard_layout();
        let gs = dy.as_slice().expect("standard layout");
        let xh = tape.xhat.as_slice().expect("contiguous");
        let gamma = self.gamma.as_slice().expect("contiguous");
        let dgamma = grad.gamma.as_slice_mut().expect("contiguous");
        let dbeta = grad.beta.as_slice_mut().expect("contiguous");
        let df = S::of_usize(d);
        let mut dx = Array2::zeros((t_len, d));
        let dxs = dx.as_slice_mut().expect("fresh array");
        for t in 0..t_len {
            let g = &gs[t * d..(t + 1) * d];
            let z = &xh[t * d..(t + 1) * d];
            let mut mean_g = S::zero();
            let mut mean_gx = S::zero();
            for c in 0..d {
                dgamma[c] += g[c] * z[c];
                dbeta[c] += g[c];
                let gc = g[c] * gamma[c];
                mean_g += gc;
                mean_gx += gc * z[c];
            }
            mean_g /= df;
            mean_gx /= df;
            let is = tape.inv_std[t];
            let out = &mut dxs[t * d..(t + 1) * d];
            for c in 0..d {
                out[c] = is * (g[c] * gamma[c] - mean_g - z[c] * mean_gx);
            }
        }
        dx
    }

    pub fn forward_into(&self, x: &[S], out: &mut [S]) {
        let df = S::of_usize(x.len());
        let mean = x.iter().copied().sum::<S>() / df;
        let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / df;
        let is = S::one() / (var + S::of(LN_EPS)).sqrt();
        for (((o, &v), &g), &b) in out.iter_mut().zip(x).zip(&self.gamma).zip(&self.beta) {
            *o = (v - mean) * is * g + b;
        }
    }
}

/// Exact GELU, `x * Phi(x)`.
#[inline]
pub fn gelu<S: Scalar>(x: S) -> S {
    let half = S::of(0.5);
    half * x * (S::one() + (x * S::FRAC_1_SQRT_2()).erf())
}

/// `(gelu(x), gelu'(x))` sharing one `erf`.
#[inline]
pub fn gelu_with_grad<S: Scalar>(x: S) -> (S, S) {
    let half = S::of(0.5);
    let cdf = half * (S::one() + (x * S::FRAC_1_SQRT_2()).erf());
    let pdf = (-half * x * x).exp() * S::FRAC_2_SQRT_PI() * S::FRAC_1_SQRT_2() * half;
    (x * cdf, cdf + x * pdf)
}

/// Elementwise GELU and its derivative.
pub fn gelu_pair<S: Scalar>(x: &Array2<S>) -> (Array2<S>, Array2<S>) {
    let mut act = Array2::zeros(x.raw_dim());
    let mut grad = Array2::zeros(x.raw_dim());
    ndarray::Zip::from(&mut act).and(&mut grad).and(x).for_each(|a, g, &v| {
        (*a, *g) = gelu_with_grad(v);
    });
    (act, grad)
}

#[inline]
pub fn gelu_grad<S: Scalar>(x: S) -> S {
    let half = S::of(0.5);
    let cdf = half * (S::one() + (x * S::FRAC_1_SQRT_2()).erf());
    let pdf = (-half * x * x).exp() * S::FRAC_2_SQRT_PI() * S::FRAC_1_SQRT_2() * half;
    cdf + x * pdf
}
