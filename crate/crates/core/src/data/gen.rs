//! Synthetic trajectory generators. All are pure functions of their
//! parameters and seed.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Trajectory;
use crate::error::{invalid, Error, Result};

fn noise(std: f64, seed: u64) -> Result<impl FnMut() -> f64> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(invalid("noise_std must be finite and non-negative"));
    }
    let normal = Normal::new(0.0, std).map_err(|e| invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(move || if std == 0.0 { 0.0 } else { normal.sample(&mut rng) })
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(invalid("dt must be positive"))
    }
}

/// `x = A sin(ωt + φ)`, `v = Aω cos(ωt + φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Harmonic {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
    pub n_steps: usize,
    pub dt: f64,
    pub noise_std: f64,
    /// When set the action is a copy of the (noisy) position, otherwise the
    /// trajectory has no action channels.
    pub mirror_action: bool,
}

pub fn gen_harmonic(p: &Harmonic, seed: u64) -> Result<Trajectory> {
    check_dt(p.dt)?;
    let mut eps = noise(p.noise_std, seed)?;
    let mut states = Array2::zeros((p.n_steps, 2));
    for t in 0..p.n_steps {
        let arg = p.omega * t as f64 * p.dt + p.phase;
        states[[t, 0]] = p.amplitude * arg.sin() + eps();
        states[[t, 1]] = p.amplitude * p.omega * arg.cos() + eps();
    }
    let actions = if p.mirror_action {
        states.column(0).to_owned().insert_axis(ndarray::Axis(1))
    } else {
        Array2::zeros((p.n_steps, 0))
    };
    let mut traj = Trajectory::new(states, actions, p.dt)?;
    traj.meta.insert("generator".into(), "harmonic".into());
    Ok(traj)
}

/// Constant angular acceleration: `θ = θ0 + ω0 t + α t²/2`, `ω = ω0 + α t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotor {
    pub theta0: f64,
    pub omega0: f64,
    pub alpha: f64,
    pub n_steps: usize,
    pub dt: f64,
    pub noise_std: f64,
}

pub fn gen_accel_rotor(p: &Rotor, seed: u64) -> Result<Trajectory> {
    check_dt(p.dt)?;
    let mut eps = noise(p.noise_std, seed)?;
    let mut states = Array2::zeros((p.n_steps, 2));
    for i in 0..p.n_steps {
        let t = i as f64 * p.dt;
        states[[i, 0]] = p.theta0 + p.omega0 * t + 0.5 * p.alpha * t * t + eps();
        states[[i, 1]] = p.omega0 + p.alpha * t + eps();
    }
    let mut traj = Trajectory::new(states, Array2::zeros((p.n_steps, 0)), p.dt)?;
    traj.meta.insert("generator".into(), "accel_rotor".into());
    Ok(traj)
}

/// Reference position: a constant offset plus at most three sinusoids
/// `(amplitude, omega, phase)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RefSignal {
    pub offset: f64,
    pub sines: Vec<(f64, f64, f64)>,
}

impl RefSignal {
    pub const MAX_SINES: usize = 3;

    pub fn at(&self, t: f64) -> f64 {
        self.offset + self.sines.iter().map(|&(a, w, p)| a * (w * t + p).sin()).sum::<f64>()
    }

    pub fn velocity(&self, t: f64) -> f64 {
        self.sines.iter().map(|&(a, w, p)| a * w * (w * t + p).cos()).sum()
    }

    /// One to three low-frequency sinusoids with amplitudes in `[0.2, 1]`
    /// and angular frequencies in `[0.2, omega_max]`.
    pub fn random<R: Rng>(rng: &mut R, omega_max: f64) -> Self {
        let k = rng.random_range(1..=Self::MAX_SINES);
        let sines = (0..k)
            .map(|_| {
                (
                    rng.random_range(0.2..1.0),
                    rng.random_range(0.2..omega_max.max(0.2 + 1e-9)),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        Self { offset: 0.0, sines }
    }
}

/// Unit mass under an expert PD controller tracking `reference`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassSpring {
    pub kp: f64,
    pub kd: f64,
    pub reference: RefSignal,
    pub n_steps: usize,
    pub dt: f64,
    pub x0: f64,
    pub v0: f64,
    /// Std of a Gaussian force disturbance added after the control law.
    pub disturbance_std: f64,
}

impl MassSpring {
    /// Plant initialised on the reference, no disturbance.
    pub fn tracking(kp: f64, kd: f64, reference: RefSignal, n_steps: usize, dt: f64) -> Self {
        let (x0, v0) = (reference.at(0.0), reference.velocity(0.0));
        Self {
            kp,
            kd,
            reference,
            n_steps,
            dt,
            x0,
            v0,
            disturbance_std: 0.0,
        }
    }
}

/// Semi-implicit Euler: `v += u dt`, then `x += v dt`. State `[x, v, x_ref]`,
/// action `u = -kp (x - x_ref) - kd v`. Reward `-(x - x_ref)^2` per step.
pub fn gen_masspring_imitation(p: &MassSpring, seed: u64) -> Result<Trajectory> {
    check_dt(p.dt)?;
    if !(p.kp > 0.0 && p.kd > 0.0) {
        return Err(invalid("kp and kd must be positive"));
    }
    if p.reference.sines.len() > RefSignal::MAX_SINES {
        return Err(invalid("reference has more than three sinusoids"));
    }
    let mut eps = noise(p.disturbance_std, seed)?;
    let mut states = Array2::zeros((p.n_steps, 3));
    let mut actions = Array2::zeros((p.n_steps, 1));
    let mut rewards = Array1::zeros(p.n_steps);
    let (mut x, mut v) = (p.x0, p.v0);
    for i in 0..p.n_steps {
        let x_ref = p.reference.at(i as f64 * p.dt);
        let u = -p.kp * (x - x_ref) - p.kd * v;
        states[[i, 0]] = x;
        states[[i, 1]] = v;
        states[[i, 2]] = x_ref;
        actions[[i, 0]] = u;
        rewards[i] = -(x - x_ref) * (x - x_ref);
        v += (u + eps()) * p.dt;
        x += v * p.dt;
        if !(x.abs() <= 1e6) {
            return Err(Error::Unstable(format!("|x| exceeded 1e6 at step {i}")));
        }
    }
    let mut traj = Trajectory::new(states, actions, p.dt)?;
    traj.rewards = Some(rewards);
    traj.meta.insert("generator".into(), "masspring".into());
    traj.meta.insert("kp".into(), p.kp.to_string());
    traj.meta.insert("kd".into(), p.kd.to_string());
    Ok(traj)
}

/// The toy imitation corpus: `count` tracking trajectories with random
/// references, trajectory `i` tagged with id `i`.
pub fn imitation_corpus(count: usize, n_steps: usize, seed: u64) -> Result<Vec<Trajectory>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let reference = RefSignal::random(&mut rng, 2.0);
            let mut traj = gen_masspring_imitation(&MassSpring::tracking(20.0, 6.0, reference, n_steps, 0.05), 0)?;
            traj.meta.insert("id".into(), i.to_string());
            Ok(traj)
        })
        .collect()
}
