mod common;

use common::*;
use fcnet::model::{load_checkpoint, save_checkpoint, Fcnet, FcnetConfig};
use ndarray::Array2;

fn cfg(n: usize, m: usize, layers: usize) -> FcnetConfig {
    FcnetConfig {
        d_s: 3,
        d_a: 2,
        d_h: 12,
        d_q: 7,
        layers,
        n,
        m,
        ffn_mult: 2,
    }
}

fn stream_all(model: &Fcnet<f64>, x: &Array2<f64>) -> Array2<f64> {
    let mut s = model.new_stream();
    let mut out = Array2::zeros((x.nrows(), model.config.d_a));
    for t in 0..x.nrows() {
        let y = model.forward_step(x.row(t).to_vec().as_slice(), &mut s).unwrap();
        out.row_mut(t).assign(&ndarray::ArrayView1::from(&y));
    }
    out
}

#[test]
fn first_token_agrees_with_parallel() {
    let model = Fcnet::<f64>::init(cfg(8, 3, 2), 1).unwrap();
    let x = random_seq(&mut rng(1), 1, 3);
    let par = model.forward_parallel(x.view()).unwrap();
    assert!(max_abs_diff(&par, &stream_all(&model, &x)) < 1e-10);
}

#[test]
fn full_stack_dual_form() {
    let mut r = rng(2);
    for (seed, &(n, m, layers)) in [(8, 3, 2), (16, 9, 3), (4, 3, 4), (64, 10, 2)].iter().enumerate() {
        let model = Fcnet::<f64>::init(cfg(n, m, layers), seed as u64).unwrap();
        for t_len in [2 * n, 5 * n] {
            let x = random_seq(&mut r, t_len, 3);
            let par = model.forward_parallel(x.view()).unwrap();
            let st = stream_all(&model, &x);
            let gap = max_abs_diff(&par, &st);
            assert!(gap < 1e-8, "n={n} m={m} L={layers} T={t_len}: {gap:e}");
        }
    }
}

#[test]
fn stack_causality_and_locality() {
    let n = 8;
    let model = Fcnet::<f64>::init(cfg(n, 4, 3), 3).unwrap();
    let mut r = rng(3);
    let x = random_seq(&mut r, 40, 3);
    let base = model.forward_parallel(x.view()).unwrap();
    for j in [0usize, 7, 20, 39] {
        let mut xp = x.clone();
        xp[[j, 0]] += 1.0;
        let y = model.forward_parallel(xp.view()).unwrap();
        for t in 0..40 {
            let changed = (0..2).any(|c| (y[[t, c]] - base[[t, c]]).abs() > 1e-12);
            if t < j {
                assert!(!changed, "future input {j} leaked into output {t}");
            }
        }
    }
    // swapping rows i < j leaves earlier outputs alone
    let mut xs = x.clone();
    for c in 0..3 {
        xs.swap([10, c], [25, c]);
    }
    let y = model.forward_parallel(xs.view()).unwrap();
    for t in 0..10 {
        for c in 0..2 {
            assert!((y[[t, c]] - base[[t, c]]).abs() < 1e-12);
        }
    }
}

/// With several stacked layers each window covers `n` samples of the layer
/// below, so the stack's receptive field grows to `L (n - 1) + 1`. Inputs
/// older than that can no longer influence the output.
#[test]
fn stack_receptive_field() {
    let (n, layers) = (4, 3);
    let model = Fcnet::<f64>::init(cfg(n, 3, layers), 4).unwrap();
    let x = random_seq(&mut rng(4), 30, 3);
    let base = model.forward_parallel(x.view()).unwrap();
    let j = 5;
    let mut xp = x.clone();
    xp[[j, 1]] -= 0.8;
    let y = model.forward_parallel(xp.view()).unwrap();
    let reach = layers * (n - 1);
    let mut beyond_one_window = 0.0f64;
    for t in j..30 {
        let gap = (0..2).map(|c| (y[[t, c]] - base[[t, c]]).abs()).fold(0.0, f64::max);
        if t > j + reach {
            assert!(gap < 1e-12, "t={t} still sees input {j}");
        } else if t >= j + n {
            beyond_one_window = beyond_one_window.max(gap);
        }
    }
    assert!(beyond_one_window > 1e-8, "stacked layers should see past a single window");
    // a single layer forgets after exactly n steps
    let single = Fcnet::<f64>::init(cfg(n, 3, 1), 4).unwrap();
    let base = single.forward_parallel(x.view()).unwrap();
    let y = single.forward_parallel(xp.view()).unwrap();
    for t in j + n..30 {
        for c in 0..2 {
            assert!((y[[t, c]] - base[[t, c]]).abs() < 1e-12);
        }
    }
}

#[test]
fn reset_and_interleaved_streams() {
    let model = Fcnet::<f64>::init(cfg(8, 4, 2), 5).unwrap();
    let mut r = rng(5);
    let a = random_seq(&mut r, 20, 3);
    let b = random_seq(&mut r, 20, 3);
    let solo_a = stream_all(&model, &a);
    let solo_b = stream_all(&model, &b);

    let (mut sa, mut sb) = (model.new_stream(), model.new_stream());
    for t in 0..20 {
        let ya = model.forward_step(a.row(t).to_vec().as_slice(), &mut sa).unwrap();
        let yb = model.forward_step(b.row(t).to_vec().as_slice(), &mut sb).unwrap();
        for c in 0..2 {
            assert_eq!(ya[c], solo_a[[t, c]]);
            assert_eq!(yb[c], solo_b[[t, c]]);
        }
    }

    sa.reset();
    sa.reset();
    assert_eq!(sa.steps(), 0);
    for t in 0..20 {
        let ya = model.forward_step(a.row(t).to_vec().as_slice(), &mut sa).unwrap();
        for c in 0..2 {
            assert_eq!(ya[c], solo_a[[t, c]]);
        }
    }
    sa.reset();
    model.forward_step(&[0.0; 3], &mut sa).unwrap();
    // the first layer sees LN(P(0)) = LN(0) = beta = 0
    assert!(sa.caches()[0].spectrum.modes.iter().all(|z| z.norm() == 0.0));
}

#[test]
fn position_wise_parts_commute_with_permutation() {
    let model = Fcnet::<f64>::init(cfg(8, 3, 2), 6).unwrap();
    let enc = &model.params.encoder;
    let x = random_seq(&mut rng(6), 9, 3);
    let y = enc.forward(x.view());
    let perm = [3usize, 0, 8, 1, 2, 7, 6, 5, 4];
    let xp = Array2::from_shape_fn(x.dim(), |(t, c)| x[[perm[t], c]]);
    let yp = enc.forward(xp.view());
    let layer = &model.params.layers[0];
    let (ln, _) = layer.ln1.forward(y.view());
    let (lnp, _) = layer.ln1.forward(yp.view());
    for t in 0..9 {
        for c in 0..12 {
            assert!((yp[[t, c]] - y[[perm[t], c]]).abs() < 1e-14);
            assert!((lnp[[t, c]] - ln[[perm[t], c]]).abs() < 1e-14);
        }
    }
}

#[test]
fn checkpoint_preserves_behavior() {
    let model = Fcnet::<f64>::init(cfg(16, 6, 2), 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let back: Fcnet<f64> = load_checkpoint(&path).unwrap();
    assert_eq!(back, model);
    let x = random_seq(&mut rng(7), 24, 3);
    let a = model.forward_parallel(x.view()).unwrap();
    let b = back.forward_parallel(x.view()).unwrap();
    assert!(a.iter().zip(b.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn table_config_parameter_count() {
    // d_h = 256, four layers, n = 64, m = 10 with a 48-dim state and 12-dim
    // action, roughly the size of a legged-robot observation/action pair
    let cfg = FcnetConfig::new(48, 12);
    let model = Fcnet::<f64>::init(cfg, 0).unwrap();
    let count = model.num_params();
    println!("parameters at d_h=256, L=4, n=64, m=10, ffn_mult=2: {count}");
    // encoder 48*256+256; per layer two LayerNorms 2*512, CSC 2*10*10 and
    // FFN 256*512+512+512*256+256; decoder 256*128+128 and 128*12+12
    let per_layer = 2 * 512 + 2 * 10 * 10 + (256 * 512 + 512) + (512 * 256 + 256);
    let expect = (48 * 256 + 256) + 4 * per_layer + (256 * 128 + 128) + (128 * 12 + 12);
    assert_eq!(count, expect);
    assert_eq!(expect, 1_103_532);
}
