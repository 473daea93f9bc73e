//! Self-check suite: the three CSC execution paths against each other, the
//! parallel and streaming model stacks against each other, and analytic
//! gradients against central differences.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::csc::{
    forward_direct, forward_parallel, forward_step_into, suggest_modes, CscConfig, CscStreamCache, CscWeights,
};
use crate::error::Result;
use crate::model::{Fcnet, FcnetConfig};
use crate::training::{grad_check, Batch, GradCheck};

/// Tolerance between the CSC execution paths.
pub const CSC_TOL: f64 = 1e-9;
/// Tolerance between parallel and streaming model stacks.
pub const STACK_TOL: f64 = 1e-8;
/// Relative tolerance for the finite-difference check.
pub const GRAD_TOL: f64 = 1e-5;
/// Finite-difference step.
pub const GRAD_STEP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub csc_configs: usize,
    /// Largest gap between any two CSC paths.
    pub csc_max: f64,
    pub stack_configs: usize,
    pub stack_max: f64,
    pub grad: GradCheck,
}

impl VerifyReport {
    /// Largest dual-form gap over both suites.
    pub fn dual_form_max(&self) -> f64 {
        self.csc_max.max(self.stack_max)
    }

    pub fn passed(&self) -> bool {
        self.csc_max <= CSC_TOL && self.stack_max <= STACK_TOL && self.grad.max_rel_err < GRAD_TOL
    }
}

fn random_seq(rng: &mut impl Rng, t: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((t, d), |_| rng.random_range(-1.0..1.0))
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn csc_stream(x: &Array2<f64>, w: &CscWeights<f64>, cfg: &CscConfig) -> Result<Array2<f64>> {
    let mut cache = CscStreamCache::new(cfg);
    let mut out = Array2::zeros(x.dim());
    let mut row = vec![0.0; cfg.d];
    for t in 0..x.nrows() {
        forward_step_into(&x.row(t).to_vec(), w, &mut cache, cfg, &mut row)?;
        out.row_mut(t).assign(&ndarray::ArrayView1::from(&row));
    }
    Ok(out)
}

fn model_stream(model: &Fcnet<f64>, x: &Array2<f64>) -> Result<Array2<f64>> {
    let mut state = model.new_stream();
    let mut out = Array2::zeros((x.nrows(), model.config.d_a));
    let mut row = vec![0.0; model.config.d_a];
    for t in 0..x.nrows() {
        model.forward_step_into(&x.row(t).to_vec(), &mut state, &mut row)?;
        out.row_mut(t).assign(&ndarray::ArrayView1::from(&row));
    }
    Ok(out)
}

/// Mode counts exercised for context `n`: one, the heuristic, the maximum
/// and two random values in between.
fn mode_choices(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let max = n / 2 + 1;
    vec![1, suggest_modes(n), max, rng.random_range(1..=max), rng.random_range(1..=max)]
}

/// Runs the CSC sweep over `n in {4, 8, 16, 64}`, `d in {4, 32}`,
/// `T in {1, n, 3n}` and five mode counts each (120 configurations).
/// Returns `(configs, max gap)`.
pub fn csc_suite(seed: u64) -> Result<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut count, mut worst) = (0, 0.0f64);
    for n in [4, 8, 16, 64] {
        for d in [4, 32] {
            for t_len in [1, n, 3 * n] {
                for m in mode_choices(n, &mut rng) {
                    let cfg = CscConfig::new(n, m, d)?;
                    let mut w = CscWeights::random(m, &mut rng);
                    w.refresh_folded(n);
                    let x = random_seq(&mut rng, t_len, d);
                    let direct = forward_direct(x.view(), &w, &cfg)?;
                    let parallel = forward_parallel(x.view(), &w, &cfg)?;
                    let stream = csc_stream(&x, &w, &cfg)?;
                    worst = worst
                        .max(max_abs_diff(&direct, &parallel))
                        .max(max_abs_diff(&direct, &stream))
                        .max(max_abs_diff(&parallel, &stream));
                    count += 1;
                }
            }
        }
    }
    Ok((count, worst))
}

/// Full models with `L in 2..=4` over several contexts and widths.
pub fn stack_suite(seed: u64) -> Result<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut count, mut worst) = (0, 0.0f64);
    for layers in 2..=4 {
        for n in [4, 8, 16, 64] {
            let d_h = if n % 8 == 0 { 32 } else { 4 };
            let cfg = FcnetConfig {
                d_s: 3,
                d_a: 2,
                d_h,
                d_q: d_h,
                layers,
                n,
                m: suggest_modes(n),
                ffn_mult: 2,
            };
            let model = Fcnet::<f64>::init(cfg, rng.random())?;
            let x = random_seq(&mut rng, 3 * n, cfg.d_s);
            let parallel = model.forward_parallel(x.view())?;
            let stream = model_stream(&model, &x)?;
            worst = worst.max(max_abs_diff(&parallel, &stream));
            count += 1;
        }
    }
    Ok((count, worst))
}

/// Finite-difference check on a tiny model (`d_h = 4`, `L = 2`, `n = 4`,
/// `m = 3`).
pub fn gradient_suite(seed: u64) -> Result<GradCheck> {
    let cfg = FcnetConfig {
        d_s: 2,
        d_a: 1,
        d_h: 4,
        d_q: 3,
        layers: 2,
        n: 4,
        m: 3,
        ffn_mult: 2,
    };
    let model = Fcnet::<f64>::init(cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let (b, t) = (2, 6);
    let states = Array3::from_shape_fn((b, t, cfg.d_s), |_| rng.random_range(-1.0..1.0));
    let targets = Array3::from_shape_fn((b, t, cfg.d_a), |_| rng.random_range(-1.0..1.0));
    grad_check(&model, &Batch::new(states, targets)?, GRAD_STEP)
}

pub fn run(seed: u64) -> Result<VerifyReport> {
    let (csc_configs, csc_max) = csc_suite(seed)?;
    let (stack_configs, stack_max) = stack_suite(seed.wrapping_add(1))?;
    let grad = gradient_suite(seed.wrapping_add(2))?;
    Ok(VerifyReport {
        csc_configs,
        csc_max,
        stack_configs,
        stack_max,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_gradient_suite_passes() {
        let g = gradient_suite(5).unwrap();
        assert!(g.max_rel_err < GRAD_TOL, "{g:?}");
        assert!(g.coords > 100);
    }

    #[test]
    fn mode_choices_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for n in [4, 8, 16, 64] {
            assert!(mode_choices(n, &mut rng).iter().all(|&m| (1..=n / 2 + 1).contains(&m)));
        }
    }
}
