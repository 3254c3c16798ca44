//! Command-line front end. The `sblab` binary parses [`Cli`] and calls [`run`];
//! every subcommand returns a JSON summary that the binary prints.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde_json::{json, Value};

use crate::bridge::BridgeNet;
use crate::chain::{self, Direction, ReferenceMean, StepMean, Trajectories};
use crate::checkpoint::{Checkpoint, Role};
use crate::config::RunConfig;
use crate::objectives::{self, ObjectiveKind};
use crate::oracle::{self, GaussianBridge};
use crate::rng;
use crate::schedule::GammaSchedule;
use crate::sgm_init::{self, Toward};
use crate::trainer::{InitMode, InitNets, RunMetrics, TrainState, Trainer};
use crate::{plot, Error, Result};

pub const THREADS_ENV: &str = "SBLAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sblab", version, about = "Schrödinger bridge training and checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit flow-matching models toward the data (and the prior).
    Pretrain(PretrainArgs),
    /// Run alternating bridge training.
    Train(TrainArgs),
    /// Score a forward/backward checkpoint pair.
    Eval(EvalArgs),
    /// Export chain trajectories as CSV.
    Sample(SampleArgs),
    /// Check the Gaussian oracles against each other.
    OracleCheck(OracleCheckArgs),
    /// Render a trajectory CSV or a run directory as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Run config (TOML, or JSON by extension).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Skip the model toward the prior.
    #[arg(long)]
    pub data_only: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_parser = parse_objective)]
    pub objective: Option<ObjectiveKind>,
    #[arg(long)]
    pub init_backward: Option<PathBuf>,
    #[arg(long)]
    pub init_forward: Option<PathBuf>,
    /// Continue from the checkpoints and metrics already in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Stop once this many half-epochs are complete.
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub forward: PathBuf,
    #[arg(long)]
    pub backward: PathBuf,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub times: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Bridge or pre-trained checkpoint. Without one the reference chain runs.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Direction of the reference chain.
    #[arg(long, value_parser = parse_direction, default_value = "forward")]
    pub direction: Direction,
    #[arg(short = 'n', long, default_value_t = 1000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV file to write; defaults to `trajectories.csv` in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleCheckArgs {
    #[arg(long, default_value_t = 2.0)]
    pub eps: f64,
    #[arg(long, default_value_t = 401)]
    pub grid: usize,
    /// Shift of the 1-D endpoints `N(a, 1)` and `N(-a, 1)`.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub a: f64,
    /// Random pinned configurations for the conditioning check.
    #[arg(long, default_value_t = 100)]
    pub pins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the report here.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    /// Trajectory CSV, or a run directory holding `metrics.csv`.
    pub input: PathBuf,
    /// SVG file or directory.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub title: Option<String>,
}

fn parse_objective(s: &str) -> std::result::Result<ObjectiveKind, String> {
    serde_json::from_value(Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown objective {s:?}; expected dsb, ipmm, iptm or ipfm"))
}

fn parse_direction(s: &str) -> std::result::Result<Direction, String> {
    serde_json::from_value(Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown direction {s:?}; expected forward or backward"))
}

/// Sizes the global worker pool from `SBLAB_THREADS` when it is set.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

pub fn run(cli: &Cli) -> Result<Value> {
    match &cli.command {
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sample(a) => cmd_sample(a),
        Command::OracleCheck(a) => cmd_oracle_check(a),
        Command::Plot(a) => cmd_plot(a),
    }
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut c = RunConfig::load(&args.config)?;
    if let Some(o) = &args.output {
        c.output_dir = o.clone();
    }
    Ok(c)
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v).expect("json serializes") + "\n")?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

pub fn cmd_pretrain(args: &PretrainArgs) -> Result<Value> {
    let mut cfg = load_config(&args.cfg)?;
    if let Some(s) = args.seed {
        cfg.pretrain.seed = s;
    }
    if let Some(s) = args.steps {
        cfg.pretrain.steps = s;
    }
    if args.data_only {
        cfg.pretrain.prior_model = false;
    }
    cfg.validate()?;
    let schedule = cfg.schedule()?;
    let hash = cfg.hash();
    fs::create_dir_all(&cfg.output_dir)?;
    let seed = cfg.pretrain.seed;
    let mut targets = vec![(Toward::Data, seed)];
    if cfg.pretrain.prior_model {
        targets.push((Toward::Prior, rng::derive_seed(seed, 1)));
    }
    let mut models = Vec::new();
    for (toward, s) in targets {
        let sgm = sgm_init::pretrain_flow_sgm(
            &cfg.data,
            &cfg.prior,
            toward,
            &schedule,
            &cfg.train.arch,
            &cfg.pretrain.budget(),
            s,
        )?;
        let loss = sgm_init::pretrain_loss(&sgm, &cfg.data, &cfg.prior, &schedule, 4096, rng::derive_seed(s, 2))?;
        let path = cfg.output_dir.join(format!("sgm_{}.sbck", toward.name()));
        Checkpoint::pretrained(&sgm, &schedule, s)?.save(&path)?;
        models.push(json!({
            "toward": toward.name(),
            "path": display(&path),
            "steps": cfg.pretrain.steps,
            "final_loss": loss,
            "seed": s,
        }));
    }
    let summary = json!({
        "config_hash": hash,
        "schedule_hash": schedule.hash_hex(),
        "models": models,
    });
    write_json(&cfg.output_dir.join("pretrain.json"), &summary)?;
    Ok(summary)
}

/// Loads an init or evaluation net for `direction`. Pre-trained models are
/// wrapped for `objective`; bridge checkpoints are used as stored, switched
/// to `objective`.
pub fn load_net(
    path: &Path,
    direction: Direction,
    objective: ObjectiveKind,
    schedule: &GammaSchedule,
) -> Result<BridgeNet> {
    let ck = Checkpoint::load(path)?;
    let stored = match &ck.role {
        Role::Plain => {
            return Err(Error::Config(format!(
                "{} holds a bare network with no schedule",
                path.display()
            )))
        }
        Role::Pretrained { schedule, .. } | Role::Bridge { schedule, .. } => schedule.hash(),
    };
    if stored != schedule.hash() {
        return Err(Error::Config(format!(
            "{} was written for a different schedule",
            path.display()
        )));
    }
    let net = match ck.role {
        Role::Pretrained { toward, .. } => {
            let (sgm, _) = ck.into_pretrained()?;
            match (direction, toward) {
                (Direction::Backward, Toward::Data) => sgm_init::wrap_backward_init(&sgm, schedule, objective)?,
                (Direction::Forward, Toward::Prior) => sgm_init::wrap_forward_init(&sgm, schedule, objective)?,
                _ => {
                    return Err(Error::Config(format!(
                        "{} flows toward the {} and cannot start the {direction} chain",
                        path.display(),
                        toward.name()
                    )))
                }
            }
        }
        _ => ck.into_bridge()?.with_objective(objective)?,
    };
    if net.direction != direction {
        return Err(Error::Config(format!("{} holds a {} net", path.display(), net.direction)));
    }
    Ok(net)
}

fn half_epoch_path(dir: &Path, h: usize) -> PathBuf {
    let tag = match crate::trainer::trained_direction(h) {
        Direction::Forward => "F",
        Direction::Backward => "B",
    };
    dir.join(format!("half_{h}_{tag}.sbck"))
}

fn write_metrics(dir: &Path, metrics: &RunMetrics, hash: &str) -> Result<()> {
    let mut buf = Vec::new();
    metrics.write_csv(&mut buf, hash)?;
    fs::write(dir.join("metrics.csv"), buf)?;
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<Value> {
    let mut cfg = load_config(&args.cfg)?;
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(o) = args.objective {
        cfg.train.objective = o;
    }
    if args.init_backward.is_some() {
        cfg.init.backward = args.init_backward.clone();
    }
    if args.init_forward.is_some() {
        cfg.init.forward = args.init_forward.clone();
    }
    if cfg.train.init == InitMode::Random {
        cfg.train.init = match (&cfg.init.backward, &cfg.init.forward) {
            (Some(_), Some(_)) => InitMode::Dual,
            (Some(_), None) => InitMode::BackwardOnly,
            (None, Some(_)) => {
                return Err(Error::Config("a forward init net needs a backward one too".into()));
            }
            (None, None) => InitMode::Random,
        };
    }
    cfg.validate()?;
    let schedule = cfg.schedule()?;
    let hash = cfg.hash();
    let dir = cfg.output_dir.clone();

    let objective = cfg.train.objective;
    let mut init = InitNets::default();
    if matches!(cfg.train.init, InitMode::BackwardOnly | InitMode::Dual) {
        let p = cfg.init.backward.as_ref().ok_or_else(|| Error::Config("init mode needs init.backward".into()))?;
        init.backward = Some(load_net(p, Direction::Backward, objective, &schedule)?);
    }
    if cfg.train.init == InitMode::Dual {
        let p = cfg.init.forward.as_ref().ok_or_else(|| Error::Config("init mode needs init.forward".into()))?;
        init.forward = Some(load_net(p, Direction::Forward, objective, &schedule)?);
    }

    let trainer = Trainer::new(cfg.train.clone(), &cfg.data, &cfg.prior, &schedule)
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut state = trainer.init_state(init)?;
    if args.resume {
        resume_state(&trainer, &mut state, &dir, &hash, objective)?;
    } else {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
        write_metrics(&dir, &state.metrics, &hash)?;
    }

    let total = trainer.total_half_epochs();
    let stop = args.stop_after.unwrap_or(total).min(total);
    let mut failure = None;
    while state.completed < stop {
        match trainer.run_half_epoch(&mut state) {
            Ok(m) => {
                let net = match m.trained {
                    Direction::Forward => &state.forward,
                    Direction::Backward => &state.backward,
                };
                Checkpoint::bridge(net, cfg.train.seed).save(&half_epoch_path(&dir, m.half_epoch))?;
                write_metrics(&dir, &state.metrics, &hash)?;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let status = match (&failure, state.completed == total) {
        (Some(_), _) => "diverged",
        (None, true) => "complete",
        (None, false) => "stopped",
    };
    let last = |parity: usize| {
        (1..=state.completed)
            .rev()
            .find(|h| h % 2 == parity)
            .map(|h| display(&half_epoch_path(&dir, h)))
    };
    let report = json!({
        "config_hash": hash,
        "status": status,
        "error": failure.as_ref().map(|e| e.to_string()),
        "completed_half_epochs": state.completed,
        "total_half_epochs": total,
        "final_avg_kl": state.metrics.final_avg_kl(),
        "oracle": trainer.oracle().is_some(),
        "forward_checkpoint": last(1),
        "backward_checkpoint": last(0),
    });
    write_json(&dir.join("report.json"), &report)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Replaces the fresh state with the one recorded in `dir`.
fn resume_state(
    trainer: &Trainer,
    state: &mut TrainState,
    dir: &Path,
    hash: &str,
    objective: ObjectiveKind,
) -> Result<()> {
    let (metrics, stored) = RunMetrics::read_csv(&read_text(&dir.join("metrics.csv"))?)?;
    if stored.as_deref() != Some(hash) {
        return Err(Error::Config(format!(
            "{} was produced by a different config",
            dir.display()
        )));
    }
    let c = metrics.records.len();
    if c > trainer.total_half_epochs() {
        return Err(Error::Config("run directory holds more half-epochs than the config asks for".into()));
    }
    for (i, r) in metrics.records.iter().enumerate() {
        if r.half_epoch != i + 1 {
            return Err(Error::format("metrics.csv", "half-epochs are not consecutive"));
        }
    }
    if let Some(h) = (1..=c).rev().find(|h| h % 2 == 1) {
        state.forward = load_net(&half_epoch_path(dir, h), Direction::Forward, objective, trainer.schedule)?;
    }
    if let Some(h) = (1..=c).rev().find(|h| h % 2 == 0) {
        state.backward = load_net(&half_epoch_path(dir, h), Direction::Backward, objective, trainer.schedule)?;
        state.backward_is_reference = false;
    }
    state.completed = c;
    state.metrics = metrics;
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<Value> {
    let mut cfg = load_config(&args.cfg)?;
    if let Some(n) = args.paths {
        cfg.train.eval.gap_paths = n;
        cfg.train.eval.kl_paths = n;
    }
    if let Some(t) = args.times {
        cfg.train.eval.kl_eval_times = t;
    }
    if let Some(s) = args.seed {
        cfg.train.eval.seed = s;
    }
    cfg.validate()?;
    let schedule = cfg.schedule()?;
    let hash = cfg.hash();
    let objective = cfg.train.objective;
    let forward = load_net(&args.forward, Direction::Forward, objective, &schedule)?;
    let backward = load_net(&args.backward, Direction::Backward, objective, &schedule)?;
    let trainer = Trainer::new(cfg.train.clone(), &cfg.data, &cfg.prior, &schedule)?;
    let state = TrainState {
        forward,
        backward,
        backward_is_reference: false,
        completed: 0,
        metrics: RunMetrics::default(),
    };
    let (gap_fwd, gap_bwd) = trainer.gaps(&state)?;
    let e = cfg.train.eval;
    let mut profiles = Vec::new();
    if let Some(bridge) = trainer.oracle() {
        for direction in [Direction::Forward, Direction::Backward] {
            profiles.push(kl_profile(bridge, &state, &cfg, &schedule, direction)?);
        }
    }
    let mean = |p: &[(usize, f64, f64)]| p.iter().map(|x| x.2).sum::<f64>() / p.len() as f64;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut csv = format!("# config_hash={hash}\nk,t,kl_fwd,kl_bwd\n");
    if let [f, b] = profiles.as_slice() {
        for (x, y) in f.iter().zip(b) {
            csv.push_str(&format!("{},{},{},{}\n", x.0, x.1, x.2, y.2));
        }
    }
    fs::write(cfg.output_dir.join("eval.csv"), csv)?;
    let report = json!({
        "config_hash": hash,
        "forward": display(&args.forward),
        "backward": display(&args.backward),
        "gap_fwd": gap_fwd,
        "gap_bwd": gap_bwd,
        "avg_kl_fwd": profiles.first().map(|p| mean(p)),
        "avg_kl_bwd": profiles.get(1).map(|p| mean(p)),
        "gap_paths": e.gap_paths,
        "kl_paths": e.kl_paths,
        "kl_eval_times": e.kl_eval_times,
        "seed": e.seed,
    });
    write_json(&cfg.output_dir.join("eval.json"), &report)?;
    Ok(report)
}

/// Same draws as the trainer's averaged KL, kept per evaluation time.
fn kl_profile(
    bridge: &GaussianBridge,
    state: &TrainState,
    cfg: &RunConfig,
    schedule: &GammaSchedule,
    direction: Direction,
) -> Result<Vec<(usize, f64, f64)>> {
    let e = &cfg.train.eval;
    let mut r = rng::stream(e.seed, 3);
    let trajs = match direction {
        Direction::Forward => {
            let x = cfg.data.draw(e.kl_paths, &mut r)?;
            chain::sample_forward(&state.forward, schedule, x.view(), e.seed)?
        }
        Direction::Backward => {
            let x = cfg.prior.draw(e.kl_paths, &mut r)?;
            chain::sample_backward(&state.backward, schedule, x.view(), e.seed)?
        }
    };
    bridge.kl_profile(&trajs, schedule, e.kl_eval_times)
}

pub fn cmd_sample(args: &SampleArgs) -> Result<Value> {
    let cfg = load_config(&args.cfg)?;
    cfg.validate()?;
    if args.paths == 0 {
        return Err(Error::Config("need at least one path".into()));
    }
    let schedule = cfg.schedule()?;
    let net = match &args.checkpoint {
        Some(p) => {
            let dir = match Checkpoint::load(p)?.role {
                Role::Bridge { direction, .. } => direction,
                Role::Pretrained { toward: Toward::Data, .. } => Direction::Backward,
                Role::Pretrained { toward: Toward::Prior, .. } => Direction::Forward,
                Role::Plain => Direction::Forward,
            };
            Some(load_net(p, dir, cfg.train.objective, &schedule)?)
        }
        None => None,
    };
    let direction = net.as_ref().map_or(args.direction, |n| n.direction);
    let mean: &dyn StepMean = match &net {
        Some(n) => n,
        None => &ReferenceMean,
    };
    let mut r = rng::stream(args.seed, 0);
    let start = match direction {
        Direction::Forward => cfg.data.draw(args.paths, &mut r)?,
        Direction::Backward => cfg.prior.draw(args.paths, &mut r)?,
    };
    let chain_seed = rng::derive_seed(args.seed, 1);
    let trajs = chain::sample_with(mean, &schedule, start.view(), chain_seed, direction, chain::NoiseMode::Reference)?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.join("trajectories.csv"));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut buf = Vec::new();
    trajs.write_csv(&mut buf)?;
    fs::write(&out, buf)?;
    let meta = json!({
        "config_hash": cfg.hash(),
        "direction": direction.name(),
        "seed": args.seed,
        "schedule_hash": schedule.hash_hex(),
        "source": args.checkpoint.as_ref().map_or("reference".to_string(), |p| display(p)),
        "n_paths": trajs.n_paths(),
        "n_steps": trajs.n_steps(),
        "dim": trajs.dim(),
        "diverged": trajs.diverged,
        "csv": display(&out),
    });
    write_json(&meta_path(&out), &meta)?;
    Ok(meta)
}

/// Sidecar metadata file of a trajectory CSV.
pub fn meta_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn cmd_oracle_check(args: &OracleCheckArgs) -> Result<Value> {
    if !(args.eps > 0.0) || args.grid < 2 {
        return Err(Error::Config("oracle-check needs eps > 0 and grid >= 2".into()));
    }
    let analytic = oracle::entropic_cross_covariance(args.eps);
    let coupling = oracle::shifted_gaussian_coupling(args.a, args.eps, args.grid)?;
    let sinkhorn = coupling.cross_covariance();

    let mut endpoint_err = [0.0f64; 2];
    for (i, (t, sign)) in [(0.0, 1.0), (1.0, -1.0)].into_iter().enumerate() {
        let m = oracle::analytic_sb_marginal(&[args.a], t, args.eps)?;
        endpoint_err[i] = (m.mean[0] - sign * args.a).abs().max((m.cov[(0, 0)] - 1.0).abs());
    }

    let schedule = GammaSchedule::symmetric(6, 0.1, 1.0, true)?;
    let (dmu, dsigma) = conditioning_residuals(&schedule, args.pins, args.seed)?;

    let report = json!({
        "cross_covariance": {
            "eps": args.eps,
            "grid": args.grid,
            "a": args.a,
            "analytic": analytic,
            "sinkhorn": sinkhorn,
            "abs_diff": (analytic - sinkhorn).abs(),
            "marginal_error": coupling.marginal_error,
            "iterations": coupling.iterations,
        },
        "endpoints": {
            "t0_max_abs_error": endpoint_err[0],
            "t1_max_abs_error": endpoint_err[1],
        },
        "conditioning": {
            "n_steps": schedule.n_steps(),
            "pins": args.pins,
            "max_abs_mean_diff": dmu,
            "max_abs_std_diff": dsigma,
        },
    });
    if let Some(p) = &args.output {
        write_json(p, &report)?;
    }
    Ok(report)
}

/// Largest mean and standard-deviation differences between the closed-form
/// pinned conditionals and brute-force Gaussian conditioning, over random
/// pins in both directions.
pub fn conditioning_residuals(schedule: &GammaSchedule, pins: usize, seed: u64) -> Result<(f64, f64)> {
    let n = schedule.n_steps();
    let mut r = rng::stream(seed, 0);
    let (mut dmu, mut dsigma) = (0.0f64, 0.0f64);
    for i in 0..pins {
        let k = r.random_range(0..n);
        let pin: Vec<f64> = (0..2).map(|_| r.random_range(-3.0..3.0)).collect();
        let cur: Vec<f64> = (0..2).map(|_| r.random_range(-3.0..3.0)).collect();
        let (direction, query, pinned) = if i % 2 == 0 {
            (Direction::Backward, k, vec![(0, pin.clone()), (k + 1, cur.clone())])
        } else {
            (Direction::Forward, k + 1, vec![(k, cur.clone()), (n, pin.clone())])
        };
        let brute = oracle::chain_conditioning_bruteforce(schedule, query, &pinned)?;
        let exact = objectives::posterior_params(direction, k, &pin, &cur, schedule)?;
        for (a, b) in brute.mean.iter().zip(&exact.mean) {
            dmu = dmu.max((a - b).abs());
        }
        dsigma = dsigma.max((brute.variance.sqrt() - exact.variance.sqrt()).abs());
    }
    Ok((dmu, dsigma))
}

pub fn cmd_plot(args: &PlotArgs) -> Result<Value> {
    let mut written = Vec::new();
    if args.input.is_dir() {
        let text = read_text(&args.input.join("metrics.csv"))?;
        let (metrics, _) = RunMetrics::read_csv(&text)?;
        let title = args.title.clone().unwrap_or_else(|| display(&args.input));
        let out = svg_target(args.output.as_deref(), &args.input, "metrics.svg")?;
        fs::write(&out, plot::metrics_svg(&metrics, &title))?;
        written.push(display(&out));
    } else {
        let text = read_text(&args.input)?;
        let direction = read_text(&meta_path(&args.input))
            .ok()
            .and_then(|m| serde_json::from_str::<Value>(&m).ok())
            .and_then(|m| m.get("direction").and_then(Value::as_str).map(str::to_owned))
            .and_then(|d| parse_direction(&d).ok())
            .unwrap_or(Direction::Forward);
        let trajs = Trajectories::read_csv(&text, direction, args.seed)?;
        let stem = args.input.file_stem().map_or("trajectories".into(), |s| s.to_string_lossy().into_owned());
        let title = args.title.clone().unwrap_or_else(|| format!("{stem} ({direction})"));
        let default_dir = args.input.parent().unwrap_or(Path::new("."));
        let out = svg_target(args.output.as_deref(), default_dir, &format!("{stem}.svg"))?;
        fs::write(&out, plot::trajectory_svg(&trajs, &title, args.seed))?;
        written.push(display(&out));
    }
    Ok(json!({ "written": written }))
}

/// `output` itself when it names an `.svg` file, otherwise `name` inside
/// `output` (or inside `default_dir`).
fn svg_target(output: Option<&Path>, default_dir: &Path, name: &str) -> Result<PathBuf> {
    let path = match output {
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("svg")) => p.to_path_buf(),
        Some(p) => p.join(name),
        None => default_dir.join(name),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(path)
}
