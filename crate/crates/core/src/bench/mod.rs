//! Benchmarks and profiling: per-step latency of FCNet against a
//! sliding-window attention baseline, parallel-forward cost against
//! sequence length, and the mode-energy spectrum of trajectories.

mod attention;
mod spectrum;

pub use attention::{AttnBaseline, AttnLayer, AttnStream};
pub use spectrum::{spectrum_report, ChannelSpectrum, SpectrumReport, SPECTRUM_CSV_HEADER, SPECTRUM_N};

pub use crate::csc::suggest_modes;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::model::{Fcnet, FcnetConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyConfig {
    pub contexts: Vec<usize>,
    pub layers: usize,
    pub d_h: usize,
    pub d_s: usize,
    pub d_a: usize,
    /// Untimed steps after the context has been filled.
    pub warmup: usize,
    /// Timed steps.
    pub samples: usize,
    pub seed: u64,
    pub include_attention: bool,
}

impl Default for LatencyConfig {
    /// `n` in {64, 2048}, four layers of width 256, 500 warm-up steps and
    /// 1000 samples.
    fn default() -> Self {
        Self {
            contexts: vec![64, 2048],
            layers: 4,
            d_h: 256,
            d_s: 32,
            d_a: 8,
            warmup: 500,
            samples: 1000,
            seed: 0,
            include_attention: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRow {
    pub model: String,
    pub n: usize,
    pub layers: usize,
    pub d_h: usize,
    pub mean_s: f64,
    pub p99_s: f64,
    pub samples: usize,
}

pub const LATENCY_CSV_HEADER: &str = "model,n,layers,d_h,mean_s,p99_s,samples";

pub fn latency_csv(rows: &[LatencyRow]) -> String {
    let mut out = String::from(LATENCY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{:e},{:e},{}", r.model, r.n, r.layers, r.d_h, r.mean_s, r.p99_s, r.samples);
    }
    out
}

pub fn write_latency_csv(path: impl AsRef<Path>, rows: &[LatencyRow]) -> Result<()> {
    fs::write(path, latency_csv(rows))?;
    Ok(())
}

/// Mean and 99th percentile (nearest rank) in seconds.
pub fn summarize(times: &[Duration]) -> (f64, f64) {
    let mut secs: Vec<f64> = times.iter().map(Duration::as_secs_f64).collect();
    secs.sort_by(f64::total_cmp);
    let mean = secs.iter().sum::<f64>() / secs.len().max(1) as f64;
    let rank = ((0.99 * secs.len() as f64).ceil() as usize).clamp(1, secs.len().max(1));
    (mean, secs.get(rank - 1).copied().unwrap_or(0.0))
}

/// Runs `step` over a token pool: `prefill` + `warmup` untimed calls, then
/// `samples` individually timed calls.
fn time_steps(pool: &Array2<f64>, prefill: usize, warmup: usize, samples: usize, mut step: impl FnMut(&[f64]) -> Result<()>) -> Result<Vec<Duration>> {
    let rows = pool.nrows();
    let token = |i: usize| pool.row(i % rows).to_slice().expect("row-major").to_vec();
    let tokens: Vec<Vec<f64>> = (0..rows).map(token).collect();
    for i in 0..prefill + warmup {
        step(&tokens[i % rows])?;
    }
    let mut times = Vec::with_capacity(samples);
    for i in 0..samples {
        let tok = &tokens[i % rows];
        let start = Instant::now();
        step(tok)?;
        times.push(start.elapsed());
    }
    Ok(times)
}

/// Per-step streaming latency for FCNet (`m = suggest_modes(n)`) and,
/// optionally, the attention baseline, at every context length. Each stream
/// is first fed `n` tokens so caches are full before warm-up and timing.
pub fn bench_latency(cfg: &LatencyConfig) -> Result<Vec<LatencyRow>> {
    if cfg.samples == 0 || cfg.contexts.is_empty() {
        return Err(invalid("need at least one context length and one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pool = Array2::from_shape_fn((257, cfg.d_s), |_| rng.random_range(-1.0..1.0));
    let mut rows = Vec::new();
    for &n in &cfg.contexts {
        let model_cfg = FcnetConfig {
            d_h: cfg.d_h,
            layers: cfg.layers,
            ..FcnetConfig::new(cfg.d_s, cfg.d_a).with_context(n)
        };
        let row = |model: &str, times: &[Duration]| {
            let (mean_s, p99_s) = summarize(times);
            LatencyRow {
                model: model.into(),
                n,
                layers: cfg.layers,
                d_h: cfg.d_h,
                mean_s,
                p99_s,
                samples: times.len(),
            }
        };
        let fcnet = Fcnet::<f64>::init(model_cfg, cfg.seed)?;
        let mut state = fcnet.new_stream();
        let mut out = vec![0.0; cfg.d_a];
        let times = time_steps(&pool, n, cfg.warmup, cfg.samples, |x| fcnet.forward_step_into(x, &mut state, &mut out))?;
        rows.push(row("fcnet", &times));
        if cfg.include_attention {
            let attn = AttnBaseline::<f64>::init(model_cfg, cfg.seed)?;
            let mut state = attn.new_stream();
            let times = time_steps(&pool, n, cfg.warmup, cfg.samples, |x| attn.forward_step_into(x, &mut state, &mut out))?;
            rows.push(row("attention", &times));
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParallelTiming {
    pub t_len: usize,
    /// Median wall time of one full-sequence forward pass, seconds.
    pub median_s: f64,
    pub reps: usize,
}

/// Median wall time of [`Fcnet::forward_parallel`] per sequence length,
/// after one untimed pass.
pub fn bench_parallel(model_cfg: FcnetConfig, lengths: &[usize], reps: usize, seed: u64) -> Result<Vec<ParallelTiming>> {
    if reps == 0 {
        return Err(invalid("reps must be positive"));
    }
    let model = Fcnet::<f64>::init(model_cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    lengths
        .iter()
        .map(|&t_len| {
            let x = Array2::from_shape_fn((t_len, model_cfg.d_s), |_| rng.random_range(-1.0..1.0));
            model.forward_parallel(x.view())?;
            let mut times = Vec::with_capacity(reps);
            for _ in 0..reps {
                let start = Instant::now();
                std::hint::black_box(model.forward_parallel(x.view())?);
                times.push(start.elapsed().as_secs_f64());
            }
            times.sort_by(f64::total_cmp);
            Ok(ParallelTiming {
                t_len,
                median_s: times[reps / 2],
                reps,
            })
        })
        .collect()
}
