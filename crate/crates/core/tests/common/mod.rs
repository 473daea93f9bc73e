//! Brute-force reference implementations shared by the integration tests.
//! None of these call into the crate's transform code.
#![allow(dead_code)]

use ndarray::Array2;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type C = Complex<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_seq(rng: &mut impl Rng, t: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((t, d), |_| rng.random_range(-1.0..1.0))
}

pub fn cis(theta: f64) -> C {
    C::new(theta.cos(), theta.sin())
}

/// Double summation DFT over the window rows, oldest row first.
pub fn brute_dft(window: &Array2<f64>, m: usize) -> Array2<C> {
    let (n, d) = window.dim();
    Array2::from_shape_fn((m, d), |(k, c)| {
        (0..n)
            .map(|i| cis(-2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64) * window[[i, c]])
            .sum()
    })
}

/// Direct inverse DFT of a full spectrum at one position.
pub fn brute_idft_at(z: &Array2<C>, p: usize) -> Vec<C> {
    let (n, d) = z.dim();
    (0..d)
        .map(|c| {
            (0..n)
                .map(|k| z[[k, c]] * cis(2.0 * std::f64::consts::PI * (k * p) as f64 / n as f64))
                .sum::<C>()
                / n as f64
        })
        .collect()
}

pub fn brute_convolve(a: &[C], b: &[C]) -> Vec<C> {
    let mut out = vec![C::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Causal spectral convolution evaluated straight from its definition with
/// brute-force transforms: window, truncated DFT, mode mixing, conjugate
/// extension, inverse DFT at the newest position, real part.
pub fn brute_csc(x: &Array2<f64>, w: &Array2<C>, n: usize) -> Array2<f64> {
    let (t_len, d) = x.dim();
    let m = w.nrows();
    let mut y = Array2::zeros((t_len, d));
    for t in 0..t_len {
        let window = Array2::from_shape_fn((n, d), |(i, c)| {
            let s = t as isize - (n as isize - 1) + i as isize;
            if s < 0 { 0.0 } else { x[[s as usize, c]] }
        });
        let xh = brute_dft(&window, m);
        let yh = w.dot(&xh);
        let mut z = Array2::from_elem((n, d), C::new(0.0, 0.0));
        for k in 0..n {
            for c in 0..d {
                z[[k, c]] = if k < m {
                    yh[[k, c]]
                } else if k + m > n {
                    yh[[n - k, c]].conj()
                } else {
                    C::new(0.0, 0.0)
                };
            }
        }
        let out = brute_idft_at(&z, n - 1);
        for c in 0..d {
            y[[t, c]] = out[c].re;
        }
    }
    y
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
