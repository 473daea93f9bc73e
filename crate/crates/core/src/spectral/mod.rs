//! Windowed DFT kernels under the relative-position convention: inside a
//! window of length `n` the oldest sample sits at index 0 and the newest at
//! index `n - 1`.

mod fft;

pub use fft::{fft_linear_convolve, irfft, real_linear_convolve, rfft, FftPlan, TransformPath};
pub use num_complex::Complex;

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{invalid, shape, Result};
use crate::scalar::Scalar;

/// Largest admissible mode count for window length `n`.
pub fn max_modes(n: usize) -> usize {
    1 + n / 2
}

/// The `m` lowest DFT modes of a length-`n` window, one column per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeMatrix<S> {
    /// `m x d`
    pub modes: Array2<Complex<S>>,
    pub n: usize,
}

impl<S: Scalar> ModeMatrix<S> {
    pub fn zeros(n: usize, m: usize, d: usize) -> Self {
        Self {
            modes: Array2::from_elem((m, d), Complex::new(S::zero(), S::zero())),
            n,
        }
    }

    pub fn m(&self) -> usize {
        self.modes.nrows()
    }

    pub fn d(&self) -> usize {
        self.modes.ncols()
    }
}

fn check_modes(n: usize, m: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("window length must be positive"));
    }
    if m == 0 || m > max_modes(n) {
        return Err(invalid(format!("mode count {m} outside [1, {}] for n = {n}", max_modes(n))));
    }
    Ok(())
}

/// DFT of an `n x d` window, keeping modes `0..m`.
///
/// `modes[k] = sum_i window[i] * exp(-j 2 pi k i / n)`; power-of-two windows
/// go through [`rfft`], other lengths are summed directly.
pub fn dft_window<S: Scalar>(window: ArrayView2<'_, S>, m: usize) -> Result<ModeMatrix<S>> {
    let (n, d) = window.dim();
    check_modes(n, m)?;
    if d == 0 {
        return Err(invalid("window has no channels"));
    }
    let mut out = ModeMatrix::zeros(n, m, d);
    let mut col = vec![S::zero(); n];
    for c in 0..d {
        for (dst, &v) in col.iter_mut().zip(window.column(c)) {
            *dst = v;
        }
        let (bins, _) = rfft(&col);
        for k in 0..m {
            out.modes[[k, c]] = bins[k];
        }
    }
    Ok(out)
}

/// Rebuild a full `n`-bin spectrum from retained modes using conjugate
/// symmetry. Bin `k < m` keeps `y_k`; bins `n-m+1 <= k < n` get
/// `conj(y_{n-k})` unless already set by the first rule (the Nyquist bin when
/// `n` is even and `m = n/2 + 1`); every other bin is zero.
pub fn conjugate_extend<S: Scalar>(y: &ModeMatrix<S>) -> Array2<Complex<S>> {
    let (n, m, d) = (y.n, y.m(), y.d());
    let mut z = Array2::from_elem((n, d), Complex::new(S::zero(), S::zero()));
    for k in 0..n {
        if k < m {
            z.row_mut(k).assign(&y.modes.row(k));
        } else if k + m > n {
            for c in 0..d {
                z[[k, c]] = y.modes[[n - k, c]].conj();
            }
        }
    }
    z
}

/// Inverse DFT of a full `n x d` spectrum evaluated at one position.
pub fn idft_at<S: Scalar>(z: ArrayView2<'_, Complex<S>>, position: usize) -> Result<Array1<Complex<S>>> {
    let (n, d) = z.dim();
    if position >= n {
        return Err(invalid(format!("position {position} out of range for n = {n}")));
    }
    let nf = S::of_usize(n);
    let mut out = Array1::from_elem(d, Complex::new(S::zero(), S::zero()));
    for k in 0..n {
        let ang = S::TAU() * S::of_usize((k * position) % n) / nf;
        let tw = Complex::new(ang.cos(), ang.sin());
        for c in 0..d {
            out[c] += z[[k, c]] * tw;
        }
    }
    Ok(out.mapv(|v| v / nf))
}

/// Conjugate-folding weight of mode `k` in an `n`-point real spectrum:
/// 1 for DC and the Nyquist bin, 2 for interior modes.
pub fn fold_weight(k: usize, n: usize) -> usize {
    if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
        1
    } else {
        2
    }
}

pub(crate) fn require_cols<S>(x: ArrayView2<'_, S>, d: usize) -> Result<()> {
    if x.ncols() != d {
        return Err(shape(format!("{d} channels"), format!("{} channels", x.ncols())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn constant_window_is_dc_only() {
        let w = array![[2.5], [2.5], [2.5], [2.5]];
        let y = dft_window(w.view(), 2).unwrap();
        assert!((y.modes[[0, 0]] - c(10.0, 0.0)).norm() < 1e-14);
        assert!(y.modes[[1, 0]].norm() < 1e-14);
    }

    #[test]
    fn impulse_at_newest_position() {
        let w = array![[0.0], [0.0], [0.0], [1.0]];
        let y = dft_window(w.view(), 3).unwrap();
        let want = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)];
        for (k, wk) in want.iter().enumerate() {
            assert!((y.modes[[k, 0]] - wk).norm() < 1e-14, "mode {k}");
        }
        // m = 4 exceeds 1 + n/2 for n = 4
        assert!(dft_window(w.view(), 4).is_err());
    }

    #[test]
    fn rejects_bad_mode_counts() {
        let w = Array2::<f64>::zeros((4, 2));
        assert!(dft_window(w.view(), 0).is_err());
        assert!(dft_window(w.view(), 3).is_ok());
    }

    #[test]
    fn extension_case_structure() {
        let ys = [c(1.0, 0.5), c(2.0, -1.0), c(3.0, 0.25)];
        let y = ModeMatrix {
            modes: Array2::from_shape_vec((3, 1), ys.to_vec()).unwrap(),
            n: 8,
        };
        let z = conjugate_extend(&y);
        let zero = c(0.0, 0.0);
        let want = [ys[0], ys[1], ys[2], zero, zero, zero, ys[2].conj(), ys[1].conj()];
        for k in 0..8 {
            assert_eq!(z[[k, 0]], want[k], "bin {k}");
        }
    }

    #[test]
    fn extension_dc_only_and_nyquist_precedence() {
        let y = ModeMatrix {
            modes: array![[c(5.0, 0.0)]],
            n: 4,
        };
        let z = conjugate_extend(&y);
        assert_eq!(z.column(0).to_vec(), vec![c(5.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);

        let y = ModeMatrix {
            modes: array![[c(1.0, 0.0)], [c(0.0, 1.0)], [c(2.0, 0.0)]],
            n: 4,
        };
        let z = conjugate_extend(&y);
        assert_eq!(z.column(0).to_vec(), vec![c(1.0, 0.0), c(0.0, 1.0), c(2.0, 0.0), c(0.0, -1.0)]);
    }

    #[test]
    fn idft_dc_and_range() {
        let mut z = Array2::from_elem((6, 1), c(0.0, 0.0));
        z[[0, 0]] = c(3.0, 0.0);
        for p in 0..6 {
            let v = idft_at(z.view(), p).unwrap();
            assert!((v[0] - c(0.5, 0.0)).norm() < 1e-15);
        }
        assert!(idft_at(z.view(), 6).is_err());
    }

    #[test]
    fn fold_weights() {
        assert_eq!(fold_weight(0, 8), 1);
        assert_eq!(fold_weight(3, 8), 2);
        assert_eq!(fold_weight(4, 8), 1);
        assert_eq!(fold_weight(3, 7), 2);
    }
}
