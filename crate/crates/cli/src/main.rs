//! `fcnet` command-line front end.
//!
//! Exit codes: 0 on success, 1 when a run or check fails, 2 on usage errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use fcnet::bench::{bench_latency, latency_csv, spectrum_report, LatencyConfig, SPECTRUM_N};
use fcnet::config::RunConfig;
use fcnet::data::{
    gen_accel_rotor, gen_harmonic, imitation_corpus, read_trajectories, window_dataset, write_trajectories, Harmonic,
    NormStats, Rotor, Trajectory,
};
use fcnet::model::{load_checkpoint, save_checkpoint};
use fcnet::training::write_loss_csv;
use fcnet::{pipeline, verify, Fcnet64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODEL_FILE: &str = "model.ckpt";
const NORM_FILE: &str = "norm.txt";
const LOSS_FILE: &str = "loss.csv";
const DATA_FILE: &str = "trajectories.fctraj";

#[derive(Parser)]
#[command(name = "fcnet", version, about = "Fourier controller network toolkit", arg_required_else_help = true)]
struct Cli {
    /// `key = value` run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for data generation, initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a trajectory file.
    GenData(GenData),
    /// Energy spectrum of one trajectory channel.
    Spectrum(Spectrum),
    /// Train on the mass-spring imitation task or a trajectory file.
    Train(Train),
    /// Evaluate a trained run.
    Eval(Eval),
    /// Per-step latency of the streaming paths.
    BenchLatency(BenchLatency),
    /// Dual-form and gradient self-checks.
    Verify,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Masspring,
    Harmonic,
    Rotor,
}

#[derive(Args)]
struct GenData {
    #[arg(long, value_enum, default_value = "masspring")]
    kind: Kind,
    /// Number of trajectories (default from config).
    #[arg(long)]
    count: Option<usize>,
    /// Steps per trajectory (default from config).
    #[arg(long)]
    len: Option<usize>,
}

#[derive(Args)]
struct Spectrum {
    /// Trajectory file; the harmonic generator is used when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Trajectory index within the file.
    #[arg(long, default_value_t = 0)]
    traj: usize,
    /// State channel.
    #[arg(long, default_value_t = 0)]
    channel: usize,
    /// Window length.
    #[arg(long, default_value_t = SPECTRUM_N)]
    n: usize,
    /// Modes counted in the coverage figure.
    #[arg(long, default_value_t = 10)]
    highlight: usize,
    /// Window stride (default `n / 4`).
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Args)]
struct Train {
    /// Trajectory file; the mass-spring corpus from the config when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Context length override.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct Eval {
    /// Directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Trajectory file; the config corpus validation split when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Fail (exit 1) when the MSE exceeds this.
    #[arg(long)]
    max_mse: Option<f64>,
}

#[derive(Args)]
struct BenchLatency {
    /// Context lengths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [64usize, 2048])]
    n: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, default_value_t = 256)]
    d_h: usize,
    #[arg(long, default_value_t = 500)]
    warmup: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Skip the attention baseline.
    #[arg(long)]
    no_attention: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            // Usage errors carry the full help text.
            let _ = e.print();
            eprintln!("\n{}", Cli::command().render_help());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<Option<&Path>> {
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(cli.out.as_deref())
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = run_config(&cli)?;
    let out = out_dir(&cli)?;
    match &cli.command {
        Command::GenData(args) => gen_data(args, &cfg, out),
        Command::Spectrum(args) => spectrum(args, &cfg, out),
        Command::Train(args) => {
            if let Some(n) = args.n {
                cfg.n = n;
            }
            if let Some(epochs) = args.epochs {
                cfg.train.epochs = epochs;
            }
            train(args, &cfg, out)
        }
        Command::Eval(args) => eval(args, &cfg),
        Command::BenchLatency(args) => latency(args, &cfg, out),
        Command::Verify => {
            let report = verify::run(cfg.train.seed)?;
            println!("csc paths: {} configs, max discrepancy {:.3e}", report.csc_configs, report.csc_max);
            println!("model stacks: {} configs, max discrepancy {:.3e}", report.stack_configs, report.stack_max);
            println!("max dual-form discrepancy {:.3e}", report.dual_form_max());
            println!(
                "gradients: {} coordinates, max relative error {:.3e} at {}",
                report.grad.coords, report.grad.max_rel_err, report.grad.worst
            );
            let ok = report.passed();
            println!("{}", if ok { "PASS" } else { "FAIL" });
            Ok(ok)
        }
    }
}

fn generate(kind: Kind, count: usize, len: usize, seed: u64) -> Result<Vec<Trajectory>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 0.05;
    let trajs = match kind {
        Kind::Masspring => imitation_corpus(count, len, seed)?,
        Kind::Harmonic => (0..count)
            .map(|i| {
                let p = Harmonic {
                    amplitude: rng.random_range(0.5..2.0),
                    omega: rng.random_range(0.2..3.0),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                    n_steps: len,
                    dt,
                    noise_std: 0.0,
                    mirror_action: true,
                };
                gen_harmonic(&p, seed.wrapping_add(i as u64))
            })
            .collect::<fcnet::Result<_>>()?,
        Kind::Rotor => (0..count)
            .map(|i| {
                let p = Rotor {
                    theta0: rng.random_range(-1.0..1.0),
                    omega0: rng.random_range(-1.0..1.0),
                    alpha: rng.random_range(-0.5..0.5),
                    n_steps: len,
                    dt,
                    noise_std: 0.0,
                };
                gen_accel_rotor(&p, seed.wrapping_add(i as u64))
            })
            .collect::<fcnet::Result<_>>()?,
    };
    Ok(trajs)
}

fn gen_data(args: &GenData, cfg: &RunConfig, out: Option<&Path>) -> Result<bool> {
    let trajs = generate(
        args.kind,
        args.count.unwrap_or(cfg.trajectories),
        args.len.unwrap_or(cfg.traj_len),
        cfg.train.seed,
    )?;
    let path = out.unwrap_or(Path::new(".")).join(DATA_FILE);
    write_trajectories(&path, &trajs)?;
    println!("wrote {} trajectories to {}", trajs.len(), path.display());
    Ok(true)
}

fn spectrum(args: &Spectrum, cfg: &RunConfig, out: Option<&Path>) -> Result<bool> {
    let trajs = match &args.input {
        Some(path) => read_trajectories(path).with_context(|| format!("reading {}", path.display()))?,
        None => generate(Kind::Harmonic, 1, 4 * args.n, cfg.train.seed)?,
    };
    let traj = trajs
        .get(args.traj)
        .with_context(|| format!("trajectory {} of {}", args.traj, trajs.len()))?;
    if args.channel >= traj.d_s() {
        bail!("channel {} out of range (d_s = {})", args.channel, traj.d_s());
    }
    let x = traj.states.slice(ndarray::s![.., args.channel..args.channel + 1]);
    let stride = args.stride.unwrap_or((args.n / 4).max(1));
    let report = spectrum_report(x, args.n, args.highlight, stride)?;
    let ch = &report.channels[0];
    let csv = ch.to_csv();
    match out {
        Some(dir) => {
            let path = dir.join("spectrum.csv");
            fs::write(&path, &csv)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    eprintln!(
        "{} windows; lowest {} modes hold {:.2}%; peak {:.2}% at mode {}",
        report.windows, args.highlight, ch.coverage_pct, ch.peak_pct, ch.peak_mode
    );
    Ok(true)
}

fn load_data(path: &Option<PathBuf>, cfg: &RunConfig) -> Result<Vec<Trajectory>> {
    match path {
        Some(p) => read_trajectories(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(pipeline::corpus(cfg)?),
    }
}

fn train(args: &Train, cfg: &RunConfig, out: Option<&Path>) -> Result<bool> {
    let trajs = load_data(&args.data, cfg)?;
    let prepared = pipeline::prepare(&trajs, cfg)?;
    eprintln!(
        "{} train / {} validation windows; n={} m={} d_h={} layers={}",
        prepared.train.len(),
        prepared.val.len(),
        prepared.model.n,
        prepared.model.m,
        prepared.model.d_h,
        prepared.model.layers
    );
    let outcome = pipeline::fit(&prepared, cfg, |e| {
        let val = e.val_loss.map_or("-".to_string(), |v| format!("{v:.3e}"));
        eprintln!("epoch {:>3}  train {:.3e}  val {val}  lr {:.2e}", e.epoch, e.train_loss, e.lr);
    })?;
    let dir = out.unwrap_or(Path::new("."));
    save_checkpoint(&outcome.model, dir.join(MODEL_FILE))?;
    fs::write(dir.join(NORM_FILE), prepared.stats.to_text())?;
    write_loss_csv(dir.join(LOSS_FILE), &outcome.curve)?;
    eprintln!("wrote {MODEL_FILE}, {NORM_FILE} and {LOSS_FILE} to {}", dir.display());
    if let Some(last) = outcome.curve.last() {
        println!("final train {:.6e} val {}", last.train_loss, last.val_loss.map_or("-".into(), |v| format!("{v:.6e}")));
    }
    Ok(true)
}

fn eval(args: &Eval, cfg: &RunConfig) -> Result<bool> {
    let model: Fcnet64 = load_checkpoint(args.run.join(MODEL_FILE))?;
    let stats = NormStats::from_text(&fs::read_to_string(args.run.join(NORM_FILE))?)?;
    let n = model.config.n;
    let windows = match &args.data {
        Some(_) => {
            let trajs = load_data(&args.data, cfg)?;
            window_dataset(&trajs, n, cfg.stride(), cfg.layout, &stats)?
        }
        None => {
            let trajs = pipeline::corpus(cfg)?;
            let all = window_dataset(&trajs, n, cfg.stride(), cfg.layout, &stats)?;
            fcnet::data::split_windows(&trajs, &all).1
        }
    };
    let mse = pipeline::window_mse(&model, &windows)?;
    println!("windows {} mse {:.6e}", windows.len(), mse);
    Ok(args.max_mse.is_none_or(|limit| mse <= limit))
}

fn latency(args: &BenchLatency, cfg: &RunConfig, out: Option<&Path>) -> Result<bool> {
    let bench = LatencyConfig {
        contexts: args.n.clone(),
        layers: args.layers,
        d_h: args.d_h,
        warmup: args.warmup,
        samples: args.samples,
        seed: cfg.train.seed,
        include_attention: !args.no_attention,
        ..LatencyConfig::default()
    };
    let rows = bench_latency(&bench)?;
    let csv = latency_csv(&rows);
    match out {
        Some(dir) => {
            let path = dir.join("latency.csv");
            fs::write(&path, &csv)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(true)
}
