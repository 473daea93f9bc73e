use crate::model::FcnetParams;
use crate::scalar::Scalar;

/// Linear warmup from 0 to `base_lr` over the first `floor(warmup_frac *
/// total)` steps, then half-cosine decay to 0 at `total`.
pub fn lr_schedule(step: usize, total: usize, base_lr: f64, warmup_frac: f64) -> f64 {
    let warmup = (warmup_frac * total as f64).floor() as usize;
    let step = step.min(total);
    if step < warmup {
        return base_lr * step as f64 / warmup as f64;
    }
    let span = total.saturating_sub(warmup).max(1);
    let progress = (step - warmup) as f64 / span as f64;
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, applied as `p -= lr * wd * p`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            weight_decay: 1e-4,
        }
    }
}

/// Adam moments, one buffer per parameter tensor in
/// [`FcnetParams::tensors`] order.
#[derive(Debug, Clone)]
pub struct OptimState<S> {
    pub config: AdamConfig,
    pub first: Vec<Vec<S>>,
    pub second: Vec<Vec<S>>,
    pub step: u64,
}

impl<S: Scalar> OptimState<S> {
    pub fn new(params: &FcnetParams<S>, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<S>> = params.tensors().iter().map(|(_, t)| vec![S::zero(); t.len()]).collect();
        Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. The caller must refresh the folded CSC
/// kernels afterwards if it streams with these parameters.
pub fn adam_step<S: Scalar>(params: &mut FcnetParams<S>, grads: &FcnetParams<S>, state: &mut OptimState<S>, lr: f64) {
    state.step += 1;
    let cfg = state.config;
    let b1 = S::of(cfg.beta1);
    let b2 = S::of(cfg.beta2);
    let one = S::one();
    let corr1 = one - S::of(cfg.beta1.powi(state.step as i32));
    let corr2 = one - S::of(cfg.beta2.powi(state.step as i32));
    let lr_s = S::of(lr);
    let eps = S::of(cfg.eps);
    let decay = S::of(lr * cfg.weight_decay);
    let grads = grads.tensors();
    for (((p, (_, g)), m1), m2) in params
        .tensors_mut()
        .into_iter()
        .zip(grads)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        for i in 0..p.len() {
            let gi = g[i];
            m1[i] = b1 * m1[i] + (one - b1) * gi;
            m2[i] = b2 * m2[i] + (one - b2) * gi * gi;
            let m_hat = m1[i] / corr1;
            let v_hat = m2[i] / corr2;
            p[i] = p[i] - decay * p[i] - lr_s * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Fcnet, FcnetConfig};

    fn tiny() -> Fcnet<f64> {
        let cfg = FcnetConfig {
            d_s: 2,
            d_a: 1,
            d_h: 4,
            d_q: 3,
            layers: 1,
            n: 4,
            m: 2,
            ffn_mult: 1,
        };
        Fcnet::init(cfg, 2).unwrap()
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(lr_schedule(0, 100, 5e-3, 0.2), 0.0);
        assert!((lr_schedule(20, 100, 5e-3, 0.2) - 5e-3).abs() < 1e-15);
        assert!(lr_schedule(100, 100, 5e-3, 0.2).abs() < 1e-15);
        assert!((lr_schedule(10, 100, 5e-3, 0.2) - 2.5e-3).abs() < 1e-15);
        assert!((lr_schedule(60, 100, 1.0, 0.2) - 0.5).abs() < 1e-12);
        assert_eq!(lr_schedule(0, 10, 1.0, 0.0), 1.0);
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let model = tiny();
        let mut params = model.params.clone();
        let grads = FcnetParams::zeros(&model.config);
        let mut state = OptimState::new(&params, AdamConfig { weight_decay: 0.0, ..Default::default() });
        adam_step(&mut params, &grads, &mut state, 1e-2);
        for ((_, a), (_, b)) in params.tensors().iter().zip(model.params.tensors()) {
            assert_eq!(*a, b);
        }
    }

    #[test]
    fn first_step_is_sign_like() {
        let model = tiny();
        let mut params = model.params.clone();
        let mut grads = FcnetParams::zeros(&model.config);
        for (i, t) in grads.tensors_mut().into_iter().enumerate() {
            for (j, v) in t.iter_mut().enumerate() {
                *v = 0.3 * ((i + j) % 5) as f64 - 0.6;
            }
        }
        let cfg = AdamConfig { weight_decay: 0.0, ..Default::default() };
        let mut state = OptimState::new(&params, cfg);
        let lr = 1e-3;
        adam_step(&mut params, &grads, &mut state, lr);
        for (((_, p1), (_, p0)), (_, g)) in params.tensors().iter().zip(model.params.tensors()).zip(grads.tensors()) {
            for ((a, b), g) in p1.iter().zip(p0).zip(g) {
                let want = -lr * g / (g.abs() + cfg.eps);
                assert!(((a - b) - want).abs() < 1e-15);
            }
        }
        // deterministic
        let mut again = model.params.clone();
        let mut state2 = OptimState::new(&again, cfg);
        adam_step(&mut again, &grads, &mut state2, lr);
        assert_eq!(again, params);
    }
}
