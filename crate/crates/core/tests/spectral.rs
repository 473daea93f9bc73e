mod common;

use common::*;
use fcnet::spectral::{
    conjugate_extend, dft_window, fft_linear_convolve, fold_weight, idft_at, irfft, rfft, ModeMatrix,
    TransformPath,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

#[test]
fn dft_matches_double_summation() {
    let mut r = rng(7);
    let x = random_seq(&mut r, 8, 3);
    let got = dft_window(x.view(), 5).unwrap();
    let want = brute_dft(&x, 5);
    for (g, w) in got.modes.iter().zip(want.iter()) {
        assert!((g - w).norm() < 1e-12);
    }
    // non power-of-two window goes through the direct path
    let x = random_seq(&mut r, 12, 2);
    let got = dft_window(x.view(), 7).unwrap();
    let want = brute_dft(&x, 7);
    for (g, w) in got.modes.iter().zip(want.iter()) {
        assert!((g - w).norm() < 1e-12);
    }
}

#[test]
fn rfft_matches_direct_dft_for_powers_of_two() {
    let mut r = rng(11);
    let mut n = 1;
    while n <= 1024 {
        let x = random_seq(&mut r, n, 1);
        let (bins, path) = rfft(x.column(0).to_vec().as_slice());
        assert_eq!(path, TransformPath::Fast);
        let want = brute_dft(&x, n / 2 + 1);
        let scale = want.iter().map(|v| v.norm()).fold(1.0, f64::max);
        for (g, w) in bins.iter().zip(want.iter()) {
            assert!((g - w).norm() / scale < 1e-10, "n = {n}");
        }
        n *= 2;
    }
}

#[test]
fn irfft_roundtrip() {
    let mut r = rng(3);
    for n in [2usize, 4, 16, 64, 256, 10, 15] {
        let x = random_seq(&mut r, n, 1).column(0).to_vec();
        let (bins, _) = rfft(&x);
        let (back, _) = irfft(&bins, n);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12, "n = {n}");
        }
    }
}

#[test]
fn random_conjugate_symmetric_spectrum_inverts_to_real() {
    let mut r = rng(5);
    let n = 8;
    let half = random_seq(&mut r, 5, 2);
    let half_im = random_seq(&mut r, 5, 2);
    let mut z = Array2::from_elem((n, 1), C::new(0.0, 0.0));
    for k in 0..=n / 2 {
        let mut v = C::new(half[[k, 0]], half_im[[k, 0]]);
        if k == 0 || k == n / 2 {
            v.im = 0.0;
        }
        z[[k, 0]] = v;
        if k != 0 && k != n / 2 {
            z[[n - k, 0]] = v.conj();
        }
    }
    for p in 0..n {
        let got = idft_at(z.view(), p).unwrap();
        let want = brute_idft_at(&z, p);
        assert!(got[0].im.abs() < 1e-12);
        assert!((got[0] - want[0]).norm() < 1e-12);
    }
}

#[test]
fn conjugate_extension_of_real_preserving_mixing() {
    // Real diagonal mixing keeps the extended spectrum conjugate symmetric,
    // so the reconstruction stays real even with the Nyquist overlap.
    let mut r = rng(9);
    let n = 4;
    let x = random_seq(&mut r, n, 1);
    let xh = dft_window(x.view(), 3).unwrap();
    let gains = [0.5, -2.0, 1.5];
    let mut y = xh.clone();
    for k in 0..3 {
        y.modes[[k, 0]] *= gains[k];
    }
    let z = conjugate_extend(&y);
    assert_eq!(z[[2, 0]], y.modes[[2, 0]]);
    for p in 0..n {
        assert!(idft_at(z.view(), p).unwrap()[0].im.abs() < 1e-12);
    }
}

#[test]
fn convolution_matches_nested_loops() {
    let mut r = rng(13);
    let a: Vec<C> = (0..13).map(|_| C::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect();
    let b: Vec<C> = (0..27).map(|_| C::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect();
    let got = fft_linear_convolve(&a, &b);
    let want = brute_convolve(&a, &b);
    assert_eq!(got.len(), 39);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).norm() < 1e-9);
    }
}

#[test]
fn convolution_exhaustive_small_sizes() {
    let mut r = rng(17);
    for p in 1..=64 {
        for q in (1..=64).step_by(7) {
            let a: Vec<C> = (0..p).map(|_| C::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect();
            let b: Vec<C> = (0..q).map(|_| C::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect();
            let got = fft_linear_convolve(&a, &b);
            let want = brute_convolve(&a, &b);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).norm() < 1e-9, "p = {p}, q = {q}");
            }
        }
    }
}

use rand::Rng;

fn window_strategy() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, n),
        )
    })
}

proptest! {
    #[test]
    fn full_band_roundtrip((n, x, _) in window_strategy()) {
        let w = Array2::from_shape_vec((n, 1), x.clone()).unwrap();
        let modes = dft_window(w.view(), n / 2 + 1).unwrap();
        let z = conjugate_extend(&modes);
        for (p, &xp) in x.iter().enumerate() {
            let v = idft_at(z.view(), p).unwrap()[0];
            prop_assert!(v.im.abs() < 1e-10);
            prop_assert!((v.re - xp).abs() < 1e-10);
        }
    }

    #[test]
    fn dft_is_linear((n, x, y) in window_strategy(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let m = n / 2 + 1;
        let xw = Array2::from_shape_vec((n, 1), x).unwrap();
        let yw = Array2::from_shape_vec((n, 1), y).unwrap();
        let combo = &xw * a + &yw * b;
        let lhs = dft_window(combo.view(), m).unwrap();
        let fx = dft_window(xw.view(), m).unwrap();
        let fy = dft_window(yw.view(), m).unwrap();
        for k in 0..m {
            let rhs = fx.modes[[k, 0]] * a + fy.modes[[k, 0]] * b;
            prop_assert!((lhs.modes[[k, 0]] - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn parseval_with_folding((n, x, _) in window_strategy()) {
        let w = Array2::from_shape_vec((n, 1), x.clone()).unwrap();
        let m = n / 2 + 1;
        let modes = dft_window(w.view(), m).unwrap();
        let spec: f64 = (0..m).map(|k| fold_weight(k, n) as f64 * modes.modes[[k, 0]].norm_sqr()).sum();
        let energy: f64 = n as f64 * x.iter().map(|v| v * v).sum::<f64>();
        prop_assert!((spec - energy).abs() <= 1e-8 * energy.max(1e-300));
    }
}

#[test]
fn mode_matrix_dimensions() {
    let z: ModeMatrix<f64> = ModeMatrix::zeros(16, 5, 3);
    assert_eq!((z.m(), z.d(), z.n), (5, 3, 16));
    let _unused: Array1<f64> = Array1::zeros(1);
}
