//! Trajectories, normalization and windowing. Everything here is `f64`;
//! windows are converted to the model scalar at the training boundary.

mod format;
mod gen;

pub use format::{parse, read_trajectories, serialize, write_trajectories};
pub use gen::{gen_accel_rotor, gen_harmonic, gen_masspring_imitation, imitation_corpus, Harmonic, MassSpring, RefSignal, Rotor};

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};

use crate::error::{invalid, shape, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `T x d_s`.
    pub states: Array2<f64>,
    /// `T x d_a`; `d_a` may be zero.
    pub actions: Array2<f64>,
    pub dt: f64,
    /// Per-step rewards, needed only by the return-to-go token layout.
    pub rewards: Option<Array1<f64>>,
    pub meta: BTreeMap<String, String>,
}

impl Trajectory {
    pub fn new(states: Array2<f64>, actions: Array2<f64>, dt: f64) -> Result<Self> {
        if states.nrows() == 0 {
            return Err(invalid("trajectory must have at least one step"));
        }
        if states.nrows() != actions.nrows() {
            return Err(shape(format!("{} action rows", states.nrows()), format!("{}", actions.nrows())));
        }
        if !states.iter().chain(actions.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("trajectory"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt must be positive"));
        }
        Ok(Self {
            states,
            actions,
            dt,
            rewards: None,
            meta: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d_s(&self) -> usize {
        self.states.ncols()
    }

    pub fn d_a(&self) -> usize {
        self.actions.ncols()
    }

    /// Suffix sums of the rewards.
    pub fn returns_to_go(&self) -> Option<Array1<f64>> {
        let r = self.rewards.as_ref()?;
        let mut out = Array1::zeros(r.len());
        let mut acc = 0.0;
        for t in (0..r.len()).rev() {
            acc += r[t];
            out[t] = acc;
        }
        Some(out)
    }
}

pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension z-score statistics for states and actions.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub state_mean: Array1<f64>,
    pub state_std: Array1<f64>,
    pub action_mean: Array1<f64>,
    pub action_std: Array1<f64>,
}

fn column_stats<'a>(blocks: impl Iterator<Item = ArrayView2<'a, f64>>, d: usize) -> (Array1<f64>, Array1<f64>) {
    let mut count = 0usize;
    let mut mean = Array1::<f64>::zeros(d);
    let mut m2 = Array1::<f64>::zeros(d);
    // Welford, row by row.
    for block in blocks {
        for row in block.rows() {
            count += 1;
            for j in 0..d {
                let delta = row[j] - mean[j];
                mean[j] += delta / count as f64;
                m2[j] += delta * (row[j] - mean[j]);
            }
        }
    }
    let std = m2.mapv(|v| (v / count as f64).sqrt().max(STD_FLOOR));
    (mean, std)
}

pub fn fit_norm(trajs: &[Trajectory]) -> Result<NormStats> {
    let first = trajs.first().ok_or(Error::EmptyDataset)?;
    let (d_s, d_a) = (first.d_s(), first.d_a());
    check_dims(trajs, d_s, d_a)?;
    let (state_mean, state_std) = column_stats(trajs.iter().map(|t| t.states.view()), d_s);
    let (action_mean, action_std) = column_stats(trajs.iter().map(|t| t.actions.view()), d_a);
    Ok(NormStats {
        state_mean,
        state_std,
        action_mean,
        action_std,
    })
}

fn check_dims(trajs: &[Trajectory], d_s: usize, d_a: usize) -> Result<()> {
    for t in trajs {
        if t.d_s() != d_s || t.d_a() != d_a {
            return Err(shape(format!("d_s={d_s} d_a={d_a}"), format!("d_s={} d_a={}", t.d_s(), t.d_a())));
        }
    }
    Ok(())
}

impl NormStats {
    pub fn d_s(&self) -> usize {
        self.state_mean.len()
    }

    pub fn d_a(&self) -> usize {
        self.action_mean.len()
    }

    pub fn apply_states(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.state_mean) / &self.state_std
    }

    pub fn apply_actions(&self, a: ArrayView2<'_, f64>) -> Array2<f64> {
        (&a - &self.action_mean) / &self.action_std
    }

    pub fn invert_states(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        &z * &self.state_std + &self.state_mean
    }

    pub fn invert_actions(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        &z * &self.action_std + &self.action_mean
    }

    /// Four `name = v v ...` lines, values in `{:.16e}`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, v) in self.fields() {
            let vals: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
            out.push_str(&format!("{name} = {}\n", vals.join(" ")));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut found: BTreeMap<String, Array1<f64>> = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (name, vals) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("norm stats line {line:?}")))?;
            let vals = vals
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| Error::Parse(format!("{name}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            found.insert(name.trim().to_string(), Array1::from(vals));
        }
        let mut take = |name: &str| found.remove(name).ok_or_else(|| Error::Parse(format!("norm stats missing {name}")));
        let stats = NormStats {
            state_mean: take("state_mean")?,
            state_std: take("state_std")?,
            action_mean: take("action_mean")?,
            action_std: take("action_std")?,
        };
        if stats.state_std.len() != stats.d_s() || stats.action_std.len() != stats.d_a() {
            return Err(Error::Parse("norm stats lengths disagree".into()));
        }
        if stats.fields().iter().any(|(_, v)| v.iter().any(|x| !x.is_finite()))
            || stats.state_std.iter().chain(&stats.action_std).any(|&s| s <= 0.0)
        {
            return Err(Error::Parse("norm stats must be finite with positive std".into()));
        }
        Ok(stats)
    }

    fn fields(&self) -> [(&'static str, &Array1<f64>); 4] {
        [
            ("state_mean", &self.state_mean),
            ("state_std", &self.state_std),
            ("action_mean", &self.action_mean),
            ("action_std", &self.action_std),
        ]
    }

    /// Normalized copy of a trajectory (meta and rewards carried over).
    pub fn apply(&self, traj: &Trajectory) -> Result<Trajectory> {
        check_dims(std::slice::from_ref(traj), self.d_s(), self.d_a())?;
        Ok(Trajectory {
            states: self.apply_states(traj.states.view()),
            actions: self.apply_actions(traj.actions.view()),
            ..traj.clone()
        })
    }

    pub fn invert(&self, traj: &Trajectory) -> Result<Trajectory> {
        check_dims(std::slice::from_ref(traj), self.d_s(), self.d_a())?;
        Ok(Trajectory {
            states: self.invert_states(traj.states.view()),
            actions: self.invert_actions(traj.actions.view()),
            ..traj.clone()
        })
    }
}

/// How a step becomes an input token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TokenLayout {
    /// Token = normalized state.
    StateOnly,
    /// Token = `[previous normalized action, return-to-go / rtg_scale,
    /// normalized state]`; the previous action at step 0 is zero. A scaled
    /// return of 1.0 marks expert behaviour.
    RtgActionState { rtg_scale: f64 },
}

impl TokenLayout {
    pub fn token_dim(&self, d_s: usize, d_a: usize) -> usize {
        match self {
            TokenLayout::StateOnly => d_s,
            TokenLayout::RtgActionState { .. } => d_a + 1 + d_s,
        }
    }
}

/// Windows of fixed length `n` ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    /// `N x n x d_in`.
    pub tokens: Array3<f64>,
    /// `N x n x d_a`.
    pub targets: Array3<f64>,
    /// Index into the source trajectory list for each window.
    pub source: Vec<usize>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    /// The windows whose source satisfies `keep`, in order.
    pub fn filter(&self, keep: impl Fn(usize) -> bool) -> WindowSet {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.source[i])).collect();
        WindowSet {
            tokens: self.tokens.select(Axis(0), &idx),
            targets: self.targets.select(Axis(0), &idx),
            source: idx.iter().map(|&i| self.source[i]).collect(),
        }
    }
}

/// Window start positions for a trajectory of length `len`: every
/// `stride` steps while a full window fits, plus one final window flush
/// with the end. A trajectory shorter than `n` yields a single window that
/// starts before step 0 (negative offset, front-padded with zeros).
pub fn window_starts(len: usize, n: usize, stride: usize) -> Vec<isize> {
    if len <= n {
        return vec![len as isize - n as isize];
    }
    let mut starts: Vec<isize> = (0..=len - n).step_by(stride).map(|s| s as isize).collect();
    if *starts.last().unwrap() as usize + n < len {
        starts.push((len - n) as isize);
    }
    starts
}

pub fn window_dataset(trajs: &[Trajectory], n: usize, stride: usize, layout: TokenLayout, stats: &NormStats) -> Result<WindowSet> {
    if n == 0 || stride == 0 {
        return Err(invalid("window length and stride must be positive"));
    }
    if trajs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (d_s, d_a) = (stats.d_s(), stats.d_a());
    check_dims(trajs, d_s, d_a)?;
    let d_in = layout.token_dim(d_s, d_a);
    let plan: Vec<(usize, isize)> = trajs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| window_starts(t.len(), n, stride).into_iter().map(move |s| (i, s)))
        .collect();
    let mut tokens = Array3::zeros((plan.len(), n, d_in));
    let mut targets = Array3::zeros((plan.len(), n, d_a));
    let mut cache: Option<(usize, Array2<f64>, Array2<f64>)> = None;
    for (w, &(i, start)) in plan.iter().enumerate() {
        if cache.as_ref().map(|c| c.0) != Some(i) {
            let traj = &trajs[i];
            let states = stats.apply_states(traj.states.view());
            let actions = stats.apply_actions(traj.actions.view());
            let full = match layout {
                TokenLayout::StateOnly => states,
                TokenLayout::RtgActionState { rtg_scale } => {
                    let rtg = traj.returns_to_go().ok_or_else(|| invalid("return-to-go layout needs rewards"))?;
                    let mut tok = Array2::zeros((traj.len(), d_in));
                    for t in 0..traj.len() {
                        if t > 0 {
                            tok.slice_mut(s![t, ..d_a]).assign(&actions.row(t - 1));
                        }
                        tok[[t, d_a]] = rtg[t] / rtg_scale;
                        tok.slice_mut(s![t, d_a + 1..]).assign(&states.row(t));
                    }
                    tok
                }
            };
            cache = Some((i, full, actions));
        }
        let (_, full, actions) = cache.as_ref().unwrap();
        let lo = start.max(0) as usize;
        let pad = (lo as isize - start) as usize;
        let hi = (start + n as isize) as usize;
        tokens.slice_mut(s![w, pad.., ..]).assign(&full.slice(s![lo..hi, ..]));
        targets.slice_mut(s![w, pad.., ..]).assign(&actions.slice(s![lo..hi, ..]));
    }
    Ok(WindowSet {
        tokens,
        targets,
        source: plan.iter().map(|p| p.0).collect(),
    })
}

/// Identifier used for the validation split: the `id` meta entry when it
/// parses as an integer, otherwise the position in the list.
pub fn trajectory_id(traj: &Trajectory, index: usize) -> u64 {
    traj.meta.get("id").and_then(|s| s.parse().ok()).unwrap_or(index as u64)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// True for the roughly 10% of ids routed to validation.
pub fn is_validation(id: u64) -> bool {
    splitmix64(id).is_multiple_of(10)
}

/// Splits windows by the validation hash of their source trajectory.
pub fn split_windows(trajs: &[Trajectory], windows: &WindowSet) -> (WindowSet, WindowSet) {
    let val = |i: usize| is_validation(trajectory_id(&trajs[i], i));
    (windows.filter(|i| !val(i)), windows.filter(val))
}
