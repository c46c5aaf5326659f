//! The `qedq` command line.
//!
//! Every run writes into its own directory `<out>/<config-hash>-<seed>`; a
//! rerun of the same configuration gets a numbered suffix instead of
//! overwriting.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use qedq_core::diffusion::{erlang_a_limit, fourth_rep_limit, ou_exact, reflected_limit, DiffusionSpec, FourthRepSpec};
use qedq_core::maps::{solve_integral_rep, solve_reflected_rep, DriftFn};
use qedq_core::rng::StreamSeed;
use qedq_core::scaling::QedSequence;
use qedq_core::stats::EnsembleStats;
use qedq_core::{GridPath, StepPath};

use crate::config::{Command, ConfigError, LimitConfig, LimitKind, RunConfig};
use crate::experiments::{run_experiment, EXPERIMENTS};
use crate::harness::{derive_seed, exit_code, realize, timed, HarnessError, Runner, Verdict};
use crate::io;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "qedq", version, about = "Many-server queues in the QED heavy-traffic regime")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Simulate a queueing model and export event logs and ensemble statistics.
    Simulate(Common),
    /// Run verification experiments and report verdicts.
    Verify(VerifyArgs),
    /// Simulate a limit diffusion or solve a map problem.
    Limit(Common),
    /// Simulate a QED sequence at several scales.
    Sweep(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per CPU.
    #[arg(long)]
    workers: Option<usize>,
    /// Parent directory of the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated experiment ids.
    #[arg(long, value_delimiter = ',', conflicts_with = "all")]
    experiments: Option<Vec<String>>,
    /// Run every experiment.
    #[arg(long)]
    all: bool,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Harness(HarnessError::Usage(msg.into()))
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Harness(HarnessError::Usage(_)) => EXIT_USAGE,
            CliError::Harness(_) => EXIT_FAIL,
        }
    }
}

impl From<qedq_core::Error> for CliError {
    fn from(e: qedq_core::Error) -> Self {
        CliError::Harness(e.into())
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Sub::Simulate(c) => {
            let (cfg, dir) = prepare(Command::Simulate, &c, None)?;
            simulate(&cfg, &dir)
        }
        Sub::Verify(v) => {
            let list = if v.all {
                Some(EXPERIMENTS.iter().map(|s| s.to_string()).collect())
            } else {
                v.experiments
            };
            let (cfg, dir) = prepare(Command::Verify, &v.common, list)?;
            verify(&cfg, &dir)
        }
        Sub::Limit(c) => {
            let (cfg, dir) = prepare(Command::Limit, &c, None)?;
            limit(&cfg, &dir)
        }
        Sub::Sweep(c) => {
            let (cfg, dir) = prepare(Command::Sweep, &c, None)?;
            sweep(&cfg, &dir)
        }
    }
}

/// Merges flags into the configuration, validates it for `command` and
/// creates the run directory with `resolved_config.json`.
fn prepare(command: Command, c: &Common, experiments: Option<Vec<String>>) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(want) = cfg.command {
        if want != command {
            return Err(ConfigError::field("command", format!("config is for `{}`", want.name())).into());
        }
    }
    cfg.command = Some(command);
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    if c.workers.is_some() {
        cfg.workers = c.workers;
    }
    if c.out.is_some() {
        cfg.out = c.out.clone();
    }
    if let Some(list) = experiments {
        cfg.experiments = list;
    }
    validate(&cfg)?;
    if cfg.seed.is_none() {
        cfg.seed = Some(0);
    }
    let dir = run_dir(&cfg)?;
    std::fs::write(dir.join("resolved_config.json"), cfg.to_json() + "\n").map_err(HarnessError::from)?;
    Ok((cfg, dir))
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.command.expect("set") {
        Command::Verify => {
            if cfg.seed.is_none() {
                return Err(CliError::usage("verify needs a seed (--seed or \"seed\" in the config)"));
            }
            if cfg.experiments.is_empty() {
                return Err(CliError::usage("no experiments selected; use --experiments or --all"));
            }
            for e in &cfg.experiments {
                if !EXPERIMENTS.contains(&e.as_str()) {
                    return Err(CliError::usage(format!(
                        "unknown experiment `{e}`; expected one of {}",
                        EXPERIMENTS.join(", ")
                    )));
                }
            }
        }
        Command::Simulate => {
            cfg.model.as_ref().ok_or_else(|| ConfigError::field("model", "simulate needs a model block"))?.to_spec()?;
            cfg.simulation.as_ref().ok_or_else(|| ConfigError::field("simulation", "simulate needs a simulation block"))?;
        }
        Command::Limit => {
            cfg.limit.as_ref().ok_or_else(|| ConfigError::field("limit", "limit needs a limit block"))?;
        }
        Command::Sweep => {
            cfg.sweep.as_ref().ok_or_else(|| ConfigError::field("sweep", "sweep needs a sweep block"))?;
        }
    }
    Ok(())
}

/// `<out>/<hash>-<seed>`, where the hash covers the configuration without
/// the output directory and worker count; a numbered suffix avoids reusing
/// an existing directory.
fn run_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let mut key = cfg.clone();
    key.out = None;
    key.workers = None;
    let digest = Sha256::digest(key.to_json().as_bytes());
    let name = format!("{}-{}", &hex::encode(digest)[..16], cfg.seed.expect("set"));
    let parent = cfg.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
    std::fs::create_dir_all(&parent).map_err(HarnessError::from)?;
    let mut k = 0u32;
    loop {
        let dir = if k == 0 { parent.join(&name) } else { parent.join(format!("{name}-{k}")) };
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => k += 1,
            Err(e) => return Err(HarnessError::from(e).into()),
        }
    }
}

fn grid(horizon: f64, dt: f64) -> Result<Vec<f64>, CliError> {
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(CliError::usage("horizon and grid_dt must be positive"));
    }
    Ok(qedq_core::maps::uniform_grid(horizon, dt)?)
}

fn ensemble_of(t_grid: &[f64], rows: &[Vec<f64>]) -> Result<EnsembleStats, CliError> {
    let mut e = EnsembleStats::new(t_grid.to_vec());
    for r in rows {
        e.push(r)?;
    }
    Ok(e)
}

fn simulate(cfg: &RunConfig, dir: &Path) -> Result<i32, CliError> {
    let spec = cfg.model.as_ref().expect("validated").to_spec()?;
    let sim = cfg.simulation.as_ref().expect("validated");
    let runner = Runner::new(cfg.workers)?;
    let master = derive_seed(cfg.seed.expect("set"), "simulate");
    let t_grid = grid(sim.horizon, sim.grid_dt)?;
    let paths = dir.join("paths");
    std::fs::create_dir_all(&paths).map_err(HarnessError::from)?;
    let root = (spec.n as f64).sqrt();
    let rows = runner.map(sim.replications, |rep| {
        let r = realize(&spec, sim.construction.into(), StreamSeed::new(master, rep), sim.horizon)?;
        r.audit()?;
        io::write_events(&paths.join(format!("events_{rep}.csv")), &r)
            .map_err(|e| qedq_core::Error::Contract(format!("cannot write event log: {e}")))?;
        Ok(r.queue.sample(&t_grid).into_iter().map(|q| (q - spec.n as f64) / root).collect::<Vec<f64>>())
    })?;
    io::write_replications(&dir.join("replications.csv"), &t_grid, &rows)?;
    io::write_ensemble(&dir.join("ensemble.csv"), &ensemble_of(&t_grid, &rows)?)?;
    eprintln!("wrote {} event logs to {}", rows.len(), paths.display());
    Ok(EXIT_PASS)
}

fn verify(cfg: &RunConfig, dir: &Path) -> Result<i32, CliError> {
    let runner = Runner::new(cfg.workers)?;
    let seed = cfg.seed.expect("validated");
    let mut verdicts: Vec<Verdict> = Vec::new();
    for name in &cfg.experiments {
        let v = timed(|| run_experiment(name, &cfg.params, &runner, seed))?;
        println!(
            "{:<18} {:<12} statistic={:.6} threshold={:.6} ({:.1}s)",
            v.experiment,
            v.status.name(),
            v.statistic,
            v.threshold,
            v.runtime_s
        );
        verdicts.push(v);
    }
    io::write_verdicts(&dir.join("verdicts.jsonl"), &verdicts)?;
    io::write_summary(&dir.join("summary.csv"), &verdicts)?;
    Ok(exit_code(&verdicts))
}

#[derive(Serialize)]
struct MapReport {
    kind: &'static str,
    sup_error_vs_exponential: Option<f64>,
    max_regulator: Option<f64>,
}

fn limit(cfg: &RunConfig, dir: &Path) -> Result<i32, CliError> {
    let l = cfg.limit.as_ref().expect("validated");
    let master = derive_seed(cfg.seed.expect("set"), "limit");
    match l.kind {
        LimitKind::IntegralMap | LimitKind::ReflectedMap => limit_map(l, dir),
        _ => {
            let runner = Runner::new(cfg.workers)?;
            let t_grid = grid(l.horizon, l.grid_dt)?;
            let diffusion = limit_diffusion(l)?;
            for w in diffusion.warnings() {
                eprintln!("warning: {w}");
            }
            let first = sample_limit(l, &diffusion, StreamSeed::new(master, 0))?;
            io::write_path_csv(&dir.join("path_0.csv"), first.times(), first.values())?;
            io::write_path_jsonl(&dir.join("path_0.jsonl"), first.times(), first.values())?;
            let rows = runner.map(l.replications, |rep| {
                let p = sample_limit(l, &diffusion, StreamSeed::new(master, rep))?;
                Ok(t_grid.iter().map(|&t| nearest(&p, t)).collect::<Vec<f64>>())
            })?;
            let stats = ensemble_of(&t_grid, &rows)?;
            io::write_replications(&dir.join("replications.csv"), &t_grid, &rows)?;
            io::write_ensemble(&dir.join("ensemble.csv"), &stats)?;
            Ok(EXIT_PASS)
        }
    }
}

fn limit_diffusion(l: &LimitConfig) -> Result<DiffusionSpec, CliError> {
    let spec = match l.kind {
        LimitKind::Ou => DiffusionSpec {
            beta: l.beta,
            ..DiffusionSpec::ou(l.mu, l.x0, l.dt, l.horizon)
        },
        LimitKind::ErlangA | LimitKind::FourthRep => DiffusionSpec::erlang_a(l.mu, l.theta, l.beta, l.x0, l.dt, l.horizon),
        LimitKind::Reflected => {
            let kappa = l.kappa.ok_or_else(|| ConfigError::field("limit.kappa", "reflected needs kappa"))?;
            DiffusionSpec::erlang_a(l.mu, l.theta, l.beta, l.x0, l.dt, l.horizon).with_barrier(kappa)
        }
        LimitKind::IntegralMap | LimitKind::ReflectedMap => unreachable!("maps are deterministic"),
    };
    spec.validate().map_err(|e| ConfigError::field("limit", e.to_string()))?;
    Ok(spec)
}

fn sample_limit(l: &LimitConfig, d: &DiffusionSpec, seed: StreamSeed) -> qedq_core::Result<GridPath> {
    match l.kind {
        LimitKind::Ou => ou_exact(d, seed),
        LimitKind::ErlangA => erlang_a_limit(d, seed),
        LimitKind::Reflected => Ok(reflected_limit(d, seed)?.content),
        LimitKind::FourthRep => {
            let spec = FourthRepSpec {
                q0: l.q0,
                mu: l.mu,
                x0: l.x0,
                n_emp: l.n_emp,
                dt: l.dt,
                horizon: l.horizon,
            };
            Ok(fourth_rep_limit(&spec, seed)?.x)
        }
        LimitKind::IntegralMap | LimitKind::ReflectedMap => unreachable!("maps are deterministic"),
    }
}

fn nearest(p: &GridPath, t: f64) -> f64 {
    let ts = p.times();
    let k = ts.partition_point(|&s| s < t);
    let k = if k == ts.len() || (k > 0 && t - ts[k - 1] < ts[k] - t) { k - 1 } else { k };
    p.values()[k]
}

/// Solves `x = b + y + ∫h(x)` with `y ≡ 0`, `b = x0` and the drift
/// `−βμ − μ(x∧0) − θx⁺`; with θ = μ and β = 0 the solution is `x0·e^{−μt}`.
fn limit_map(l: &LimitConfig, dir: &Path) -> Result<i32, CliError> {
    let h = DriftFn::PiecewiseLinear {
        mu: l.mu,
        theta: l.theta,
        offset: -l.beta * l.mu,
    };
    let y = StepPath::zero(l.horizon);
    let exponential = |x: &GridPath| {
        (l.theta == l.mu && l.beta == 0.0).then(|| {
            x.times()
                .iter()
                .zip(x.values())
                .map(|(&t, &v)| (v - l.x0 * (-l.mu * t).exp()).abs())
                .fold(0.0, f64::max)
        })
    };
    let report = match l.kind {
        LimitKind::IntegralMap => {
            let x = solve_integral_rep(l.x0, &y, &h, l.dt)?;
            io::write_path_csv(&dir.join("x.csv"), x.times(), x.values())?;
            io::write_path_jsonl(&dir.join("x.jsonl"), x.times(), x.values())?;
            MapReport {
                kind: "integral_map",
                sup_error_vs_exponential: exponential(&x),
                max_regulator: None,
            }
        }
        LimitKind::ReflectedMap => {
            let kappa = l.kappa.ok_or_else(|| ConfigError::field("limit.kappa", "reflected_map needs kappa"))?;
            let r = solve_reflected_rep(l.x0, &y, &h, kappa, l.dt)?;
            io::write_path_csv(&dir.join("x.csv"), r.content.times(), r.content.values())?;
            io::write_path_csv(&dir.join("regulator.csv"), r.regulator.times(), r.regulator.values())?;
            MapReport {
                kind: "reflected_map",
                sup_error_vs_exponential: None,
                max_regulator: r.regulator.values().last().copied(),
            }
        }
        _ => unreachable!("dispatched on map kinds"),
    };
    io::write_json(&dir.join("summary.json"), &report)?;
    Ok(EXIT_PASS)
}

#[derive(Serialize)]
struct SweepRow {
    n: u64,
    lambda: f64,
    room: Option<u64>,
    t: f64,
    mean: f64,
    variance: Option<f64>,
}

fn sweep(cfg: &RunConfig, dir: &Path) -> Result<i32, CliError> {
    let s = cfg.sweep.as_ref().expect("validated");
    let seq = QedSequence {
        beta: s.beta,
        kappa: s.kappa,
        mu: s.mu,
        theta: s.theta,
        n_list: s.n_list.clone(),
    };
    seq.validate().map_err(|e| ConfigError::field("sweep", e.to_string()))?;
    let runner = Runner::new(cfg.workers)?;
    let t_grid = grid(s.horizon, s.grid_dt)?;
    let mut rows = Vec::new();
    for &n in &s.n_list {
        let spec = seq.spec(n)?;
        let master = derive_seed(cfg.seed.expect("set"), &format!("sweep/{n}"));
        let root = (n as f64).sqrt();
        let x = move |r: &qedq_core::models::QueueRealization, ts: &[f64]| {
            r.queue.sample(ts).into_iter().map(|q| (q - n as f64) / root).collect::<Vec<f64>>()
        };
        let stats = crate::harness::run_ensemble(
            &runner,
            &spec,
            qedq_core::models::Construction::TimeChange,
            master,
            s.replications,
            s.horizon,
            &t_grid,
            &[&x],
        )?;
        io::write_ensemble(&dir.join(format!("ensemble_n{n}.csv")), &stats[0])?;
        let last = stats[0].summaries().pop().expect("nonempty grid");
        rows.push(SweepRow {
            n,
            lambda: spec.lambda,
            room: spec.room,
            t: *t_grid.last().expect("nonempty grid"),
            mean: last.mean,
            variance: last.variance,
        });
    }
    io::write_json(&dir.join("summary.json"), &rows)?;
    Ok(EXIT_PASS)
}
