//! `key = value` run configuration.
//!
//! ```text
//! # model
//! d_h = 128
//! n = 64          # m follows suggest_modes(n) unless set
//! epochs = 50
//! ```
//!
//! Blank lines and `#` comments are ignored; unknown or repeated keys are
//! errors.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::csc::suggest_modes;
use crate::data::TokenLayout;
use crate::error::{Error, Result};
use crate::model::FcnetConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub d_h: usize,
    pub d_q: usize,
    pub layers: usize,
    pub n: usize,
    /// `None` means `suggest_modes(n)`.
    pub m: Option<usize>,
    pub ffn_mult: usize,
    pub train: TrainConfig,
    /// Trajectories generated for the toy imitation task.
    pub trajectories: usize,
    /// Steps per generated trajectory.
    pub traj_len: usize,
    /// Window stride; `None` means `n`.
    pub stride: Option<usize>,
    pub layout: TokenLayout,
    /// Scalar used while training; checkpoints are always `f64`.
    pub precision: Precision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Default for RunConfig {
    /// The toy imitation setup: `d_h = 128`, four layers, `n = 64`,
    /// 1000 trajectories of 64 steps, the default [`TrainConfig`], and
    /// single-precision training.
    fn default() -> Self {
        Self {
            d_h: 128,
            d_q: 128,
            layers: 4,
            n: 64,
            m: None,
            ffn_mult: 2,
            train: TrainConfig::default(),
            trajectories: 1000,
            traj_len: 64,
            stride: None,
            layout: TokenLayout::StateOnly,
            precision: Precision::F32,
        }
    }
}

pub const KEYS: &[&str] = &[
    "d_h",
    "d_q",
    "layers",
    "n",
    "m",
    "ffn_mult",
    "epochs",
    "batch_size",
    "base_lr",
    "warmup_frac",
    "weight_decay",
    "seed",
    "grad_clip",
    "trajectories",
    "traj_len",
    "stride",
    "layout",
    "rtg_scale",
    "precision",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| Error::Parse(format!("{key} = {value}: {e}")))
}

impl RunConfig {
    pub fn modes(&self) -> usize {
        self.m.unwrap_or_else(|| suggest_modes(self.n))
    }

    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.n)
    }

    pub fn model_config(&self, d_s: usize, d_a: usize) -> FcnetConfig {
        FcnetConfig {
            d_s,
            d_a,
            d_h: self.d_h,
            d_q: self.d_q,
            layers: self.layers,
            n: self.n,
            m: self.modes(),
            ffn_mult: self.ffn_mult,
        }
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "d_h" => self.d_h = num(key, value)?,
            "d_q" => self.d_q = num(key, value)?,
            "layers" => self.layers = num(key, value)?,
            "n" => self.n = num(key, value)?,
            "m" => self.m = Some(num(key, value)?),
            "ffn_mult" => self.ffn_mult = num(key, value)?,
            "epochs" => self.train.epochs = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "base_lr" => self.train.base_lr = num(key, value)?,
            "warmup_frac" => self.train.warmup_frac = num(key, value)?,
            "weight_decay" => self.train.weight_decay = num(key, value)?,
            "seed" => self.train.seed = num(key, value)?,
            "grad_clip" => {
                self.train.grad_clip = match value {
                    "none" => None,
                    v => Some(num(key, v)?),
                }
            }
            "trajectories" => self.trajectories = num(key, value)?,
            "traj_len" => self.traj_len = num(key, value)?,
            "stride" => self.stride = Some(num(key, value)?),
            "layout" => {
                self.layout = match value {
                    "state_only" => TokenLayout::StateOnly,
                    "rtg_action_state" => TokenLayout::RtgActionState {
                        rtg_scale: match self.layout {
                            TokenLayout::RtgActionState { rtg_scale } => rtg_scale,
                            TokenLayout::StateOnly => 1.0,
                        },
                    },
                    other => return Err(Error::Parse(format!("unknown layout {other:?}"))),
                }
            }
            "rtg_scale" => {
                self.layout = TokenLayout::RtgActionState {
                    rtg_scale: num(key, value)?,
                }
            }
            "precision" => {
                self.precision = match value {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    other => return Err(Error::Parse(format!("unknown precision {other:?}"))),
                }
            }
            other => return Err(Error::Parse(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every assignment in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Parse(format!("line {}: {key} set twice", i + 1)));
            }
            self.set(key, value).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Checks the model shape and training settings.
    pub fn validate(&self) -> Result<()> {
        self.model_config(1, 1).validate()?;
        self.train.validate()?;
        if self.trajectories == 0 || self.traj_len == 0 || self.stride() == 0 {
            return Err(Error::InvalidArgument("trajectories, traj_len and stride must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let cfg = RunConfig::parse("# header\n\nd_h = 32  # narrow\nn=16\nbase_lr = 1e-3\ngrad_clip = 1.5\nlayout = rtg_action_state\nrtg_scale = 100\n").unwrap();
        assert_eq!(cfg.d_h, 32);
        assert_eq!(cfg.modes(), suggest_modes(16));
        assert_eq!(cfg.train.base_lr, 1e-3);
        assert_eq!(cfg.train.grad_clip, Some(1.5));
        assert_eq!(cfg.layout, TokenLayout::RtgActionState { rtg_scale: 100.0 });
        assert_eq!(cfg.stride(), 16);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn defaults_are_the_imitation_setup() {
        let cfg = RunConfig::default();
        let m = cfg.model_config(3, 1);
        assert_eq!((m.n, m.m, m.d_h, m.layers), (64, 10, 128, 4));
        assert_eq!(cfg.train.epochs, 50);
    }

    #[test]
    fn rejects_bad_lines() {
        for bad in ["d_h 32", "nope = 1", "d_h = x", "d_h = 1\nd_h = 2", "layout = other"] {
            assert!(matches!(RunConfig::parse(bad), Err(Error::Parse(_))), "{bad}");
        }
        assert!(RunConfig::parse("m = 40").unwrap().validate().is_err());
        assert!(KEYS
            .iter()
            .all(|k| RunConfig::default().set(k, "1").is_ok() || ["layout", "precision"].contains(k)));
        assert_eq!(RunConfig::parse("precision = f64").unwrap().precision, Precision::F64);
    }
}
