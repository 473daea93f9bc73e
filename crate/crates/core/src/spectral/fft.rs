//! Radix-2 complex FFT, the packed real FFT built on it, and FFT-based
//! linear convolution.

use num_complex::Complex;

use crate::scalar::Scalar;

/// Which algorithm produced a transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformPath {
    /// Power-of-two radix-2 FFT.
    Fast,
    /// O(n^2) direct summation for lengths that are not a power of two.
    Direct,
}

/// Precomputed twiddles and bit-reversal permutation for one power-of-two length.
#[derive(Debug, Clone)]
pub struct FftPlan<S> {
    n: usize,
    twiddles: Vec<Complex<S>>,
    rev: Vec<usize>,
}

impl<S: Scalar> FftPlan<S> {
    /// Panics unless `n` is a power of two.
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "FFT length {n} is not a power of two");
        let bits = n.trailing_zeros();
        let rev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| {
                let ang = -S::TAU() * S::of_usize(k) / S::of_usize(n);
                Complex::new(ang.cos(), ang.sin())
            })
            .collect();
        Self { n, twiddles, rev }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform, `X_k = sum_i x_i exp(-j 2 pi k i / n)`.
    pub fn forward(&self, buf: &mut [Complex<S>]) {
        assert_eq!(buf.len(), self.n);
        for i in 0..self.n {
            let j = self.rev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= self.n {
            let half = len / 2;
            let stride = self.n / len;
            for block in buf.chunks_exact_mut(len) {
                let (lo, hi) = block.split_at_mut(half);
                for (j, (a, b)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                    let t = *b * self.twiddles[j * stride];
                    *b = *a - t;
                    *a += t;
                }
            }
            len <<= 1;
        }
    }

    /// In-place inverse transform including the `1/n` factor.
    pub fn inverse(&self, buf: &mut [Complex<S>]) {
        for v in buf.iter_mut() {
            *v = v.conj();
        }
        self.forward(buf);
        let scale = S::one() / S::of_usize(self.n);
        for v in buf.iter_mut() {
            *v = v.conj() * scale;
        }
    }
}

fn direct_dft<S: Scalar>(x: &[S], bins: usize) -> Vec<Complex<S>> {
    let n = x.len();
    (0..bins)
        .map(|k| {
            let mut acc = Complex::new(S::zero(), S::zero());
            for (i, &xi) in x.iter().enumerate() {
                // reduce k*i mod n first so the phase stays small
                let ang = -S::TAU() * S::of_usize((k * i) % n) / S::of_usize(n);
                acc += Complex::new(ang.cos(), ang.sin()) * xi;
            }
            acc
        })
        .collect()
}

/// Real FFT: returns the `1 + n/2` non-redundant bins of a real signal.
///
/// Power-of-two lengths use a half-length complex FFT on the even/odd packed
/// signal; other lengths fall back to direct summation.
pub fn rfft<S: Scalar>(x: &[S]) -> (Vec<Complex<S>>, TransformPath) {
    let n = x.len();
    let bins = n / 2 + 1;
    if n == 0 {
        return (Vec::new(), TransformPath::Direct);
    }
    if !n.is_power_of_two() {
        return (direct_dft(x, bins), TransformPath::Direct);
    }
    if n == 1 {
        return (vec![Complex::new(x[0], S::zero())], TransformPath::Fast);
    }
    let half = n / 2;
    let mut z: Vec<Complex<S>> = x.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect();
    FftPlan::new(half).forward(&mut z);

    let two = S::one() + S::one();
    let mut out = Vec::with_capacity(bins);
    for k in 0..=half {
        let zk = z[k % half];
        let zc = z[(half - k) % half].conj();
        let even = (zk + zc) / two;
        // (zk - zc) / 2j
        let d = zk - zc;
        let odd = Complex::new(d.im, -d.re) / two;
        let ang = -S::TAU() * S::of_usize(k) / S::of_usize(n);
        out.push(even + Complex::new(ang.cos(), ang.sin()) * odd);
    }
    (out, TransformPath::Fast)
}

/// Inverse of [`rfft`] for a signal of length `n`.
///
/// Imaginary parts of the DC and (even `n`) Nyquist bins are ignored.
pub fn irfft<S: Scalar>(bins: &[Complex<S>], n: usize) -> (Vec<S>, TransformPath) {
    assert_eq!(bins.len(), n / 2 + 1, "irfft expects 1 + n/2 bins");
    if n == 0 {
        return (Vec::new(), TransformPath::Direct);
    }
    if !n.is_power_of_two() {
        let nf = S::of_usize(n);
        let out = (0..n)
            .map(|i| {
                let mut acc = bins[0].re;
                for k in 1..n {
                    let b = if k < bins.len() { bins[k] } else { bins[n - k].conj() };
                    let ang = S::TAU() * S::of_usize((k * i) % n) / nf;
                    acc += (b * Complex::new(ang.cos(), ang.sin())).re;
                }
                acc / nf
            })
            .collect();
        return (out, TransformPath::Direct);
    }
    if n == 1 {
        return (vec![bins[0].re], TransformPath::Fast);
    }
    let half = n / 2;
    let two = S::one() + S::one();
    let mut z: Vec<Complex<S>> = (0..half)
        .map(|k| {
            let xk = bins[k];
            let xc = bins[half - k].conj();
            let even = (xk + xc) / two;
            let ang = S::TAU() * S::of_usize(k) / S::of_usize(n);
            let odd = (xk - xc) * Complex::new(ang.cos(), ang.sin()) / two;
            // even + j*odd
            even + Complex::new(-odd.im, odd.re)
        })
        .collect();
    FftPlan::new(half).inverse(&mut z);
    let mut out = Vec::with_capacity(n);
    for v in z {
        out.push(v.re);
        out.push(v.im);
    }
    (out, TransformPath::Fast)
}

/// Linear convolution `out[t] = sum_i a[i] * b[t - i]` of length `p + q - 1`,
/// computed with a zero-padded power-of-two FFT.
pub fn fft_linear_convolve<S: Scalar>(a: &[Complex<S>], b: &[Complex<S>]) -> Vec<Complex<S>> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let len = out_len.next_power_of_two();
    let plan = FftPlan::new(len);
    let zero = Complex::new(S::zero(), S::zero());
    let mut fa = a.to_vec();
    fa.resize(len, zero);
    let mut fb = b.to_vec();
    fb.resize(len, zero);
    plan.forward(&mut fa);
    plan.forward(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    plan.inverse(&mut fa);
    fa.truncate(out_len);
    fa
}

/// Real-valued linear convolution via the packed real FFT.
pub fn real_linear_convolve<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let len = out_len.next_power_of_two().max(2);
    let mut pa = a.to_vec();
    pa.resize(len, S::zero());
    let mut pb = b.to_vec();
    pb.resize(len, S::zero());
    let (mut fa, _) = rfft(&pa);
    let (fb, _) = rfft(&pb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    let (mut out, _) = irfft(&fa, len);
    out.truncate(out_len);
    out
}
