//! End-to-end imitation runs: normalize, window, split, train, evaluate.

use crate::config::{Precision, RunConfig};
use crate::data::{fit_norm, imitation_corpus, split_windows, window_dataset, NormStats, Trajectory, WindowSet};
use crate::error::{Error, Result};
use crate::model::{Fcnet, FcnetConfig};
use crate::training::{evaluate, train_observed, Batch, EpochLog, TrainOutcome};

/// Windows ready for training, with the statistics that produced them.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub stats: NormStats,
    pub train: WindowSet,
    pub val: WindowSet,
    pub model: FcnetConfig,
}

/// The mass-spring corpus described by `cfg`, seeded by `cfg.train.seed`.
pub fn corpus(cfg: &RunConfig) -> Result<Vec<Trajectory>> {
    imitation_corpus(cfg.trajectories, cfg.traj_len, cfg.train.seed)
}

/// Fits normalization on all trajectories, windows them and applies the
/// hash split.
pub fn prepare(trajs: &[Trajectory], cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let stats = fit_norm(trajs)?;
    let windows = window_dataset(trajs, cfg.n, cfg.stride(), cfg.layout, &stats)?;
    let (train, val) = split_windows(trajs, &windows);
    let d_in = cfg.layout.token_dim(stats.d_s(), stats.d_a());
    Ok(Prepared {
        model: cfg.model_config(d_in, stats.d_a()),
        stats,
        train,
        val,
    })
}

/// Trains at `cfg.precision`; the returned model is always `f64`.
pub fn fit(prepared: &Prepared, cfg: &RunConfig, observe: impl FnMut(&EpochLog)) -> Result<TrainOutcome<f64>> {
    let (train, val) = (&prepared.train, &prepared.val);
    match cfg.precision {
        Precision::F64 => train_observed(train, val, prepared.model, &cfg.train, observe),
        Precision::F32 => {
            let out = train_observed::<f32>(train, val, prepared.model, &cfg.train, observe)?;
            Ok(TrainOutcome {
                model: out.model.cast(),
                curve: out.curve,
            })
        }
    }
}

/// Mean squared error of `model` over every window, in normalized units.
pub fn window_mse(model: &Fcnet<f64>, windows: &WindowSet) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let idx: Vec<usize> = (0..windows.len()).collect();
    evaluate(model, &Batch::from_windows(windows, &idx))
}
