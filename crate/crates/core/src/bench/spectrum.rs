//! Energy distribution over DFT modes, averaged over sliding windows.

use std::fmt::Write as _;

use ndarray::ArrayView2;

use crate::error::{invalid, Result};
use crate::spectral::{fold_weight, max_modes, rfft};

/// Default window length for spectrum profiling.
pub const SPECTRUM_N: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpectrum {
    /// Share of energy per mode `0..=n/2`, in percent; sums to 100.
    pub density_pct: Vec<f64>,
    pub cumulative_pct: Vec<f64>,
    /// Cumulative share of the lowest `highlight` modes.
    pub coverage_pct: f64,
    /// Largest single-mode share.
    pub peak_pct: f64,
    pub peak_mode: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub n: usize,
    pub highlight: usize,
    pub windows: usize,
    pub channels: Vec<ChannelSpectrum>,
}

pub const SPECTRUM_CSV_HEADER: &str = "mode,density_pct,cumulative_pct";

impl ChannelSpectrum {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SPECTRUM_CSV_HEADER);
        out.push('\n');
        for (k, (d, c)) in self.density_pct.iter().zip(&self.cumulative_pct).enumerate() {
            let _ = writeln!(out, "{k},{d:.12},{c:.12}");
        }
        out
    }
}

/// Averages the folded power `w_k |X_k|^2` (`w_k = 2` for interior modes)
/// over every length-`n` window taken `stride` steps apart, per channel,
/// and normalizes it to percentages.
pub fn spectrum_report(x: ArrayView2<'_, f64>, n: usize, highlight: usize, stride: usize) -> Result<SpectrumReport> {
    let (t_len, d) = x.dim();
    if n < 2 || stride == 0 {
        return Err(invalid("window length must be at least 2 and stride positive"));
    }
    if t_len < n {
        return Err(invalid(format!("signal has {t_len} steps, shorter than the window n={n}")));
    }
    let modes = max_modes(n);
    if highlight == 0 || highlight > modes {
        return Err(invalid(format!("highlight must lie in 1..={modes}")));
    }
    let starts: Vec<usize> = (0..=t_len - n).step_by(stride).collect();
    let mut channels = Vec::with_capacity(d);
    let mut buf = vec![0.0; n];
    for c in 0..d {
        let mut power = vec![0.0; modes];
        for &s in &starts {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = x[[s + i, c]];
            }
            let (bins, _) = rfft(&buf);
            for (k, p) in power.iter_mut().enumerate() {
                *p += fold_weight(k, n) as f64 * bins[k].norm_sqr();
            }
        }
        let total: f64 = power.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(invalid(format!("channel {c} has no finite energy")));
        }
        let density_pct: Vec<f64> = power.iter().map(|p| 100.0 * p / total).collect();
        let cumulative_pct: Vec<f64> = density_pct
            .iter()
            .scan(0.0, |acc, &v| {
                *acc += v;
                Some(*acc)
            })
            .collect();
        let (peak_mode, peak_pct) = density_pct
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::MIN), |best, (k, v)| if v > best.1 { (k, v) } else { best });
        channels.push(ChannelSpectrum {
            coverage_pct: cumulative_pct[highlight - 1],
            density_pct,
            cumulative_pct,
            peak_pct,
            peak_mode,
        });
    }
    Ok(SpectrumReport {
        n,
        highlight,
        windows: starts.len(),
        channels,
    })
}
