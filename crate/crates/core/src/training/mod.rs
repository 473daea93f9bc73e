//! Imitation training: MSE over windows, full reverse-mode gradients, Adam
//! with warmup and cosine decay.
//!
//! Batched gradients are computed in fixed chunks of [`GRAD_CHUNK`] samples.
//! Chunks may run on different threads, but each chunk accumulates its
//! samples in order and the chunk results are summed in chunk order, so the
//! result does not depend on the thread count.

mod optim;

pub use optim::{adam_step, lr_schedule, AdamConfig, OptimState};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array3, ArrayView2, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::WindowSet;
use crate::error::{invalid, shape, Error, Result};
use crate::model::{Fcnet, FcnetConfig, FcnetParams};
use crate::scalar::Scalar;

pub const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Batch<S> {
    /// `B x T x d_s`.
    pub states: Array3<S>,
    /// `B x T x d_a`.
    pub targets: Array3<S>,
}

impl<S: Scalar> Batch<S> {
    pub fn new(states: Array3<S>, targets: Array3<S>) -> Result<Self> {
        let (b, t, _) = states.dim();
        let (b2, t2, _) = targets.dim();
        if (b, t) != (b2, t2) {
            return Err(shape(format!("targets with {b}x{t} leading dims"), format!("{b2}x{t2}")));
        }
        if !states.iter().chain(targets.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("batch"));
        }
        Ok(Self { states, targets })
    }

    /// Windows `idx` of `set`, converted to `S`.
    pub fn from_windows(set: &WindowSet, idx: &[usize]) -> Self {
        Self {
            states: set.tokens.select(Axis(0), idx).mapv(S::of),
            targets: set.targets.select(Axis(0), idx).mapv(S::of),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len_of(Axis(0))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn elements(&self) -> usize {
        self.targets.len()
    }
}

/// Mean of squared differences over every element.
pub fn mse_loss<S: Scalar>(pred: ArrayView3<'_, S>, target: ArrayView3<'_, S>) -> Result<S> {
    if pred.dim() != target.dim() {
        return Err(shape(format!("{:?}", target.dim()), format!("{:?}", pred.dim())));
    }
    if pred.is_empty() {
        return Err(invalid("empty prediction"));
    }
    let sum = pred.iter().zip(target.iter()).fold(S::zero(), |acc, (&p, &t)| acc + (p - t) * (p - t));
    Ok(sum / S::of_usize(pred.len()))
}

fn sum_sq<S: Scalar>(pred: ArrayView2<'_, S>, target: ArrayView2<'_, S>) -> S {
    pred.iter().zip(target.iter()).fold(S::zero(), |acc, (&p, &t)| acc + (p - t) * (p - t))
}

fn check_batch<S: Scalar>(batch: &Batch<S>, model: &Fcnet<S>) -> Result<()> {
    let (_, _, d_s) = batch.states.dim();
    let (_, _, d_a) = batch.targets.dim();
    if d_s != model.config.d_s || d_a != model.config.d_a {
        return Err(shape(
            format!("d_s={} d_a={}", model.config.d_s, model.config.d_a),
            format!("d_s={d_s} d_a={d_a}"),
        ));
    }
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

/// Batch MSE without gradients.
pub fn evaluate<S: Scalar>(model: &Fcnet<S>, batch: &Batch<S>) -> Result<S> {
    check_batch(batch, model)?;
    let partial: Vec<Result<S>> = (0..batch.len())
        .collect::<Vec<_>>()
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            chunk.iter().try_fold(S::zero(), |acc, &b| {
                let pred = model.forward_parallel(batch.states.index_axis(Axis(0), b))?;
                Ok(acc + sum_sq(pred.view(), batch.targets.index_axis(Axis(0), b)))
            })
        })
        .collect();
    let mut total = S::zero();
    for p in partial {
        total += p?;
    }
    Ok(total / S::of_usize(batch.elements()))
}

/// Loss and its gradient with respect to every parameter, scaled by
/// `loss_scale` (the returned loss is unscaled).
pub fn backward_scaled<S: Scalar>(model: &Fcnet<S>, batch: &Batch<S>, loss_scale: S) -> Result<(S, FcnetParams<S>)> {
    check_batch(batch, model)?;
    let norm = S::of_usize(batch.elements());
    let adjoint = S::of(2.0) * loss_scale / norm;
    let partial: Vec<Result<(S, FcnetParams<S>)>> = (0..batch.len())
        .collect::<Vec<_>>()
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grads = FcnetParams::zeros(&model.config);
            let mut loss = S::zero();
            for &b in chunk {
                let tape = model.forward_tape(batch.states.index_axis(Axis(0), b))?;
                let target = batch.targets.index_axis(Axis(0), b);
                loss += sum_sq(tape.output.view(), target);
                let d_out = (&tape.output - &target).mapv(|v| v * adjoint);
                model.backward_tape(&tape, d_out.view(), &mut grads)?;
            }
            Ok((loss, grads))
        })
        .collect();
    let mut iter = partial.into_iter();
    let (mut loss, mut grads) = iter.next().expect("non-empty batch")?;
    for p in iter {
        let (l, g) = p?;
        loss += l;
        grads.add_scaled(&g, S::one());
    }
    Ok((loss / norm, grads))
}

/// Gradient of `mse_loss(forward_parallel(states), targets)`.
pub fn backward_full<S: Scalar>(model: &Fcnet<S>, batch: &Batch<S>) -> Result<(S, FcnetParams<S>)> {
    backward_scaled(model, batch, S::one())
}

/// Largest disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// `name[index]` of the worst coordinate.
    pub worst: String,
    pub coords: usize,
}

/// Coordinates whose gradients are both smaller than this are compared
/// absolutely instead of relatively.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

/// Central differences with step `h` on every parameter coordinate.
/// Relative error is `|a - b| / max(|a|, |b|, GRAD_CHECK_FLOOR)`.
pub fn grad_check(model: &Fcnet<f64>, batch: &Batch<f64>, h: f64) -> Result<GradCheck> {
    let (_, grads) = backward_full(model, batch)?;
    let analytic: Vec<(String, Vec<f64>)> = grads.tensors().into_iter().map(|(n, t)| (n, t.to_vec())).collect();
    let mut probe = model.clone();
    let mut report = GradCheck {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst: String::new(),
        coords: 0,
    };
    let loss_at = |m: &Fcnet<f64>| evaluate(m, batch);
    for (ti, (name, want)) in analytic.iter().enumerate() {
        for (i, &a) in want.iter().enumerate() {
            let orig = probe.params.tensors_mut()[ti][i];
            probe.params.tensors_mut()[ti][i] = orig + h;
            probe.params.refresh_folded(probe.config.n);
            let up = loss_at(&probe)?;
            probe.params.tensors_mut()[ti][i] = orig - h;
            probe.params.refresh_folded(probe.config.n);
            let down = loss_at(&probe)?;
            probe.params.tensors_mut()[ti][i] = orig;
            let fd = (up - down) / (2.0 * h);
            let abs = (fd - a).abs();
            let rel = abs / a.abs().max(fd.abs()).max(GRAD_CHECK_FLOOR);
            report.coords += 1;
            report.max_abs_err = report.max_abs_err.max(abs);
            if rel > report.max_rel_err || report.worst.is_empty() {
                report.max_rel_err = rel.max(report.max_rel_err);
                report.worst = format!("{name}[{i}]");
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_frac: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Global-norm gradient clipping, off by default.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    /// Adam at `5e-3` with 20% linear warmup, cosine decay, weight decay
    /// `1e-4`, 50 epochs of batch 128.
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            base_lr: 5e-3,
            warmup_frac: 0.2,
            weight_decay: 1e-4,
            seed: 0,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("epochs and batch_size must be positive"));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(invalid("warmup_frac must lie in [0, 1)"));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(invalid("base_lr must be positive and weight_decay non-negative"));
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return Err(invalid("grad_clip must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Sample-weighted mean of the minibatch losses seen during the epoch.
    pub train_loss: f64,
    /// Full validation MSE after the epoch, if there is a validation set.
    pub val_loss: Option<f64>,
    /// Learning rate of the last update in the epoch.
    pub lr: f64,
}

pub const LOSS_CSV_HEADER: &str = "epoch,train_loss,val_loss,lr";

pub fn loss_csv(curve: &[EpochLog]) -> String {
    let mut out = String::from(LOSS_CSV_HEADER);
    out.push('\n');
    for e in curve {
        let val = e.val_loss.map(|v| format!("{v:e}")).unwrap_or_default();
        let _ = writeln!(out, "{},{:e},{},{:e}", e.epoch, e.train_loss, val, e.lr);
    }
    out
}

pub fn write_loss_csv(path: impl AsRef<Path>, curve: &[EpochLog]) -> Result<()> {
    fs::write(path, loss_csv(curve))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub model: Fcnet<S>,
    pub curve: Vec<EpochLog>,
}

fn global_norm<S: Scalar>(g: &FcnetParams<S>) -> f64 {
    g.tensors().iter().flat_map(|(_, t)| t.iter()).map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt()
}

/// Trains a fresh model initialised from `cfg.seed`.
pub fn train<S: Scalar>(train_set: &WindowSet, val_set: &WindowSet, model_cfg: FcnetConfig, cfg: &TrainConfig) -> Result<TrainOutcome<S>> {
    train_observed(train_set, val_set, model_cfg, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_observed<S: Scalar>(
    train_set: &WindowSet,
    val_set: &WindowSet,
    model_cfg: FcnetConfig,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (_, t, d_in) = train_set.tokens.dim();
    if d_in != model_cfg.d_s || train_set.targets.dim().2 != model_cfg.d_a {
        return Err(shape(
            format!("tokens of width {} and targets of width {}", model_cfg.d_s, model_cfg.d_a),
            format!("{d_in} and {}", train_set.targets.dim().2),
        ));
    }
    if t == 0 {
        return Err(invalid("windows are empty"));
    }
    let mut model = Fcnet::<S>::init(model_cfg, cfg.seed)?;
    let mut optim = OptimState::new(
        &model.params,
        AdamConfig {
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
    );
    let val_batch = (!val_set.is_empty()).then(|| Batch::<S>::from_windows(val_set, &(0..val_set.len()).collect::<Vec<_>>()));
    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total = cfg.epochs * steps_per_epoch;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_f00d);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        let mut lr = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch = Batch::<S>::from_windows(train_set, idx);
            let (loss, mut grads) = backward_full(&model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            weighted += loss.as_f64() * idx.len() as f64;
            if let Some(clip) = cfg.grad_clip {
                let norm = global_norm(&grads);
                if norm > clip {
                    let scale = S::of(clip / norm);
                    for t in grads.tensors_mut() {
                        t.iter_mut().for_each(|v| *v *= scale);
                    }
                }
            }
            lr = lr_schedule(step, total, cfg.base_lr, cfg.warmup_frac);
            adam_step(&mut model.params, &grads, &mut optim, lr);
            model.params.refresh_folded(model_cfg.n);
            step += 1;
        }
        let val_loss = match &val_batch {
            Some(b) => Some(evaluate(&model, b)?.as_f64()),
            None => None,
        };
        let log = EpochLog {
            epoch,
            train_loss: weighted / train_set.len() as f64,
            val_loss,
            lr,
        };
        observe(&log);
        curve.push(log);
    }
    Ok(TrainOutcome { model, curve })
}
