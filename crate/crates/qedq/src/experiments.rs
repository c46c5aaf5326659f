//! The named verification experiments.
//!
//! Every experiment turns one limit statement into numeric checks at desk
//! scale. Parameters and thresholds are part of the run configuration; the
//! defaults are the acceptance settings.

use rand::Rng;
use serde::{Deserialize, Serialize};

use qedq_core::diffusion::{
    b_hat, erlang_a_limit, fourth_rep_limit, ou_exact, reflected_limit, DiffusionSpec, FourthRepSpec,
};
use qedq_core::dist::{sample_poisson, Law};
use qedq_core::empirical::fourth_decomposition;
use qedq_core::maps::{solve_integral_rep, solve_integral_rep_on, solver_grid, uniform_grid, DriftFn};
use qedq_core::martingale::{
    decompose, identity_scale, lenglart_check, orthogonality_test, scaled_state_identity, MomentReport,
    MomentTest,
};
use qedq_core::models::{ArrivalLaw, Construction, EventKind, ModelSpec, QueueRealization};
use qedq_core::paths::optional_qv;
use qedq_core::rng::{StreamRole, StreamSeed};
use qedq_core::scaling::{fluid_deviation, linear_deviation, random_time_change_paths, QedSequence};
use qedq_core::stats::{covariance_se, ks_statistic, ks_two_sample, median, normal_cdf, normal_cdf_with};
use qedq_core::{Cadlag, GridPath, StepPath};

use crate::config::{ConstructionConfig, LawConfig};
use crate::harness::{derive_seed, realize, run_ensemble, Check, HResult, HarnessError, Runner, Verdict};

/// Experiment ids in suite order.
pub const EXPERIMENTS: &[&str] = &[
    "poisson_clt",
    "mminf_fclt",
    "fluid",
    "erlang_a",
    "finite_room",
    "general_arrival",
    "martingale_suite",
    "fourth_rep",
    "maps_convergence",
    "construction_law",
];

/// Below this many replications a distributional test is reported as
/// inconclusive.
pub const MIN_KS_REPLICATIONS: u64 = 1000;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentParams {
    pub poisson_clt: PoissonClt,
    pub mminf_fclt: MminfFclt,
    pub fluid: Fluid,
    pub erlang_a: ErlangA,
    pub finite_room: FiniteRoom,
    pub general_arrival: GeneralArrival,
    pub martingale_suite: MartingaleSuite,
    pub fourth_rep: FourthRep,
    pub maps_convergence: MapsConvergence,
    pub construction_law: ConstructionLaw,
}

pub fn run_experiment(name: &str, p: &ExperimentParams, runner: &Runner, seed: u64) -> HResult<Verdict> {
    match name {
        "poisson_clt" => poisson_clt(&p.poisson_clt, runner, seed),
        "mminf_fclt" => mminf_fclt(&p.mminf_fclt, runner, seed),
        "fluid" => fluid(&p.fluid, runner, seed),
        "erlang_a" => erlang_a(&p.erlang_a, runner, seed),
        "finite_room" => finite_room(&p.finite_room, runner, seed),
        "general_arrival" => general_arrival(&p.general_arrival, runner, seed),
        "martingale_suite" => martingale_suite(&p.martingale_suite, runner, seed),
        "fourth_rep" => fourth_rep(&p.fourth_rep, runner, seed),
        "maps_convergence" => maps_convergence(&p.maps_convergence, runner, seed),
        "construction_law" => construction_law(&p.construction_law, runner, seed),
        other => Err(HarnessError::Usage(format!(
            "unknown experiment `{other}`; expected one of {}",
            EXPERIMENTS.join(", ")
        ))),
    }
}

fn scaled(q: f64, n: u64) -> f64 {
    let nf = n as f64;
    (q - nf) / nf.sqrt()
}

fn x_at(r: &QueueRealization, times: &[f64]) -> Vec<f64> {
    r.queue.sample(times).into_iter().map(|q| scaled(q, r.spec.n)).collect()
}

/// Value at the grid point nearest `t`.
fn grid_at(p: &GridPath, t: f64) -> f64 {
    let ts = p.times();
    let k = ts.partition_point(|&s| s < t);
    let k = if k == ts.len() || (k > 0 && t - ts[k - 1] < ts[k] - t) { k - 1 } else { k };
    p.values()[k]
}

/// Column `k` of row-major samples.
fn column(rows: &[Vec<f64>], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k]).collect()
}

fn ks_label(t: f64) -> String {
    format!("ks(t={t})")
}

fn horizon_of(t_points: &[f64]) -> HResult<f64> {
    let h = t_points.iter().copied().fold(0.0, f64::max);
    if !(h > 0.0) || t_points.iter().any(|&t| !(t > 0.0)) {
        return Err(HarnessError::Usage("time points must be positive".into()));
    }
    Ok(h)
}

fn ratio(mean: f64, se: f64) -> f64 {
    if se > 0.0 {
        mean.abs() / se
    } else if mean == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoissonClt {
    pub n: u64,
    pub replications: u64,
    pub ks_threshold: f64,
}

impl Default for PoissonClt {
    fn default() -> Self {
        PoissonClt {
            n: 400,
            replications: 10_000,
            ks_threshold: 0.03,
        }
    }
}

/// KS distance of `(N − n)/√n`, `N ~ Poisson(n)`, from the standard normal.
pub fn poisson_ks(n: u64, replications: u64, runner: &Runner, master: u64) -> HResult<f64> {
    let nf = n as f64;
    let xs = runner.map(replications, |rep| {
        let mut rng = StreamSeed::new(master, rep).stream(StreamRole::Initial);
        Ok(scaled(sample_poisson(nf, &mut rng) as f64, n))
    })?;
    Ok(ks_statistic(&xs, normal_cdf)?)
}

pub fn poisson_clt(p: &PoissonClt, runner: &Runner, seed: u64) -> HResult<Verdict> {
    let claim = "stationary infinite-server count, centred and scaled by sqrt(n), is asymptotically standard normal";
    let mut checks = Vec::new();
    if p.replications >= 2 {
        let d = poisson_ks(p.n, p.replications, runner, derive_seed(seed, "poisson_clt"))?;
        checks.push(Check::at_most("ks", d, p.ks_threshold));
    }
    Ok(Verdict::new(
        "poisson_clt",
        claim,
        seed,
        p.replications,
        checks,
        p.replications < MIN_KS_REPLICATIONS,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MminfFclt {
    pub n: u64,
    pub mu: f64,
    pub replications: u64,
    pub t_points: Vec<f64>,
    pub ks_threshold: f64,
    /// Times `(s, t)` of the two-time covariance check; both must be in
    /// `t_points`.
    pub covariance_pair: [f64; 2],
    pub z: f64,
    pub construction: ConstructionConfig,
}

impl Default for MminfFclt {
    fn default() -> Self {
        MminfFclt {
            n: 400,
            mu: 1.0,
            replications: 10_000,
            t_points: vec![0.25, 0.5, 1.0, 2.0],
            ks_threshold: 0.05,
            covariance_pair: [0.5, 1.0],
            z: 3.0,
            construction: ConstructionConfig::TimeChange,
        }
    }
}

pub fn mminf_fclt(p: &MminfFclt, runner: &Runner, seed: u64) -> HResult<Verdict> {
    let claim = "scaled infinite-server process started at n converges to the Ornstein-Uhlenbeck diffusion";
    let horizon = horizon_of(&p.t_points)?;
    let index = |t: f64| {
        p.t_points
            .iter()
            .position(|&s| s == t)
            .ok_or_else(|| HarnessError::Usage(format!("covariance time {t} is not in t_points")))
    };
    let (ks_, kt) = (index(p.covariance_pair[0])?, index(p.covariance_pair[1])?);
    let spec = ModelSpec::infinite_server(p.n, p.mu, p.n as f64 * p.mu);
    let mut checks = Vec::new();
    if p.replications >= 2 {
        let stats = run_ensemble(
            runner,
            &spec,
            p.construction.into(),
            derive_seed(seed, "mminf_fclt"),
            p.replications,
            horizon,
            &p.t_points,
            &[&x_at],
        )?;
        let samples = |k: usize| {
            stats[0]
                .point(k)
                .samples()
                .ok_or_else(|| HarnessError::Usage("too many replications to retain samples".into()))
        };
        for (k, &t) in p.t_points.iter().enumerate() {
            let var = -(-2.0 * p.mu * t).exp_m1();
            let d = ks_statistic(samples(k)?, |x| normal_cdf_with(x, 0.0, var))?;
            checks.push(Check::at_most(ks_label(t), d, p.ks_threshold));
        }
        let [s, t] = p.covariance_pair;
        let (cov, se) = covariance_se(samples(ks_)?, samples(kt)?);
        let oracle = (-p.mu * (t - s)).exp() * -(-2.0 * p.mu * s.min(t)).exp_m1();
        checks.push(Check::at_most(format!("cov_se({s},{t})"), ratio(cov - oracle, se), p.z));
    }
    Ok(Verdict::new(
        "mminf_fclt",
        claim,
        seed,
        p.replications,
        checks,
        p.replications < MIN_KS_REPLICATIONS,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fluid {
    pub n_list: Vec<u64>,
    pub mu: f64,
    pub replications: u64,
    pub horizon: f64,
    /// Deviation bound `c/√n`.
    pub c: f64,
    /// Accepted range of the median ratio between scales `n` and `4n`.
    pub ratio_range: [f64; 2],
    /// Minimum fraction of replications with deviation below `c/√n`.
    pub coverage: f64,
}

impl Default for Fluid {
    fn default() -> Self {
        Fluid {
            n_list: vec![100, 1000, 10_000],
            mu: 1.0,
            replications: 200,
            horizon: 1.0,
            c: 5.0,
            ratio_range: [1.4, 2.8],
            coverage: 0.95,
        }
    }
}

/// Per-replication `sup|Q/n − 1|` and `sup|Φ_S − μt|` at scale `n`.
fn fluid_deviations(p: &Fluid, n: u64, runner: &Runner, master: u64) -> HResult<(Vec<f64>, Vec<f64>)> {
    let spec = ModelSpec::infinite_server(n, p.mu, n as f64 * p.mu);
    let rows = runner.map(p.replications, |rep| {
        let r = realize(&spec, Construction::TimeChange, StreamSeed::new(master, rep), p.horizon)?;
        let tc = random_time_change_paths(&r)?;
        Ok((fluid_deviation(&r), linear_deviation(&tc.phi_s, p.mu)))
    })?;
    Ok(rows.into_iter().unzip())
}

pub fn fluid(p: &Fluid, runner: &Runner, seed: u64) -> HResult<Verdict> {
    let claim = "fluid-scaled content and service clock of the infinite-server queue converge to constants at rate 1/sqrt(n)";
    let mut checks = Vec::new();
    if p.replications >= 1 {
        for &n in &p.n_list {
            let bound = p.c / (n as f64).sqrt();
            let (q, phi) = fluid_deviations(p, n, runner, derive_seed(seed, &format!("fluid/{n}")))?;
            let (q4, phi4) = fluid_deviations(p, 4 * n, runner, derive_seed(seed, &format!("fluid/{}", 4 * n)))?;
            let (mq, mphi) = (median(&q), median(&phi));
            checks.push(Check::at_most(format!("median_q(n={n})"), mq, bound));
            checks.push(Check::at_most(format!("median_phi(n={n})"), mphi, bound));
            let covered = q.iter().filter(|&&d| d < bound).count() as f64 / q.len() as f64;
            checks.push(Check::at_least(format!("coverage_q(n={n})"), covered, p.coverage));
            let [lo, hi] = p.ratio_range;
            checks.push(Check::within(format!("ratio_q(n={n})"), mq / median(&q4), lo, hi));
            checks.push(Check::within(format!("ratio_phi(n={n})"), mphi / median(&phi4), lo, hi));
        }
    }
    Ok(Verdict::new("fluid", claim, seed, p.replications, checks, p.replications < 50))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErlangA {
    pub n: u64,
    pub mu: f64,
    pub beta: f64,
    pub theta: f64,
    pub replications: u64,
    pub t_points: Vec<f64>,
    pub dt: f64,
    pub ks_threshold: f64,
    /// Threshold of the equal-rates cross-check against the exact OU law.
    pub ou_ks_threshold: f64,
}

impl Default for ErlangA {
    fn default() -> Self {
        ErlangA {
            n: 400,
            mu: 1.0,
            beta: 1.0,
            theta: 0.5,
            replications: 10_000,
            t_points: vec![0.5, 1.0, 2.0],
            dt: 0.005,
            ks_threshold: 0.05,
            ou_ks_threshold: 0.03,
        }
    }
}

/// Scaled queue samples at `t_points`, one row per replication.
fn queue_rows(
    spec: &ModelSpec,
    construction: Construction,
    t_points: &[f64],
    r: u64,
    runner: &Runner,
    master: u64,
) -> HResult<Vec<Vec<f64>>> {
    let horizon = horizon_of(t_points)?;
    runner.map(r, |rep| {
        let path = realize(spec, construction, StreamSeed::new(master, rep), horizon)?;
        Ok(x_at(&path, t_points))
    })
}

fn diffusion_rows(
    t_points: &[f64],
    r: u64,
    runner: &Runner,
    master: u64,
    sim: impl Fn(StreamSeed) -> qedq_core::Result<GridPath> + Sync,
) -> HResult<Vec<Vec<f64>>> {
    runner.map(r, |rep| {
        let path = sim(StreamSeed::new(master, rep))?;
        Ok(t_points.iter().map(|&t| grid_at(&path, t)).collect())
    })
}

fn two_sample_checks(
    prefix: &str,
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    t_points: &[f64],
    threshold: f64,
) -> HResult<Vec<Check>> {
    let mut out = Vec::new();
    for (k, &t) in t_points.iter().enumerate() {
        let d = ks_two_sample(&column(a, k), &column(b, k))?;
        out.push(Check::at_most(format!("{prefix}{}", ks_label(t)), d, threshold));
    }
    Ok(out)
}

fn qed_spec(n: u64, mu: f64, beta: f64, theta: f64, kappa: Option<f64>) -> HResult<ModelSpec> {
    let seq = QedSequence {
        beta,
        kappa,
        mu,
        theta,
        n_list: vec![n],
    };
    seq.validate()?;
    Ok(seq.spec(n)?)
}

pub fn erlang_a(p: &ErlangA, runner: &Runner, seed: u64) -> HResult<Verdict> {
    let claim = "scaled Erlang-A process in the QED regime converges to the diffusion with drift -beta*mu - mu*min(x,0) - theta*max(x,0)";
    let horizon = horizon_of(&p.t_points)?;
    let mut checks = Vec::new();
    if p.replications >= 2 {
        let spec = qed_spec(p.n, p.mu, p.beta, p.theta, None)?;
        let q = queue_rows(&spec, Construction::TimeChange, &p.t_points, p.replications, runner, derive_seed(seed, "erlang_a/queue"))?;
        let limit = DiffusionSpec::erlang_a(p.mu, p.theta, p.beta, 0.0, p.dt, horizon);
        let d = diffusion_rows(&p.t_points, p.replications, runner, derive_seed(seed, "erlang_a/limit"), |s| {
            erlang_a_limit(&limit, s)
        })?;
        checks.extend(two_sample_checks("", &q, &d, &p.t_points, p.ks_threshold)?);
        // with θ = μ the drift is linear and the limit is an exact OU process
        let equal = DiffusionSpec::erlang_a(p.mu, p.mu, p.beta, 0.0, p.dt, horizon);
        let ou = DiffusionSpec {
            beta: p.beta,
            ..DiffusionSpec::ou(p.mu, 0.0, p.dt, horizon)
        };
        let e = diffusion_rows(&p.t_points, p.replications, runner, derive_seed(seed, "erlang_a/equal"), |s| {
            erlang_a_limit(&equal, s)
        })?;
        let o = diffusion_rows(&p.t_points, p.replications, runner, derive_seed(seed, "erlang_a/ou"), |s| {
            ou_exact(&ou, s)
        })?;
        checks.extend(two_sample_checks("ou_", &e, &o, &p.t_points, p.ou_ks_threshold)?);
    }
    Ok(Verdict::new(
        "erlang_a",
        claim,
        seed,
        p.replications,
        checks,
        p.replications < MIN_KS_REPLICATIONS,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiniteRoom {
    pub n: u64,
    pub mu: f64,
    pub beta: f64,
    pub theta: f64,
    pub kappa: f64,
    pub replications: u64,
    pub t_points: Vec<f64>,
    pub dt: f64,
    pub ks_threshold: f64,
}

impl Default for FiniteRoom {
    fn default() -> Self {
        FiniteRoom {
            n: 400,
            mu: 1.0,
            beta: 1.0,
            theta: 0.5,
            kappa: 1.0,
            replications: 10_000,
            t_points: vec![0.5, 1.0, 2.0],
            dt: 0.001,
            ks_threshold: 0.06,
        }
    }
}

pub fn finite_room(p: &FiniteRoom, runner: &Runner, seed: u64) -> HResult<Verdict> {
    let claim = "scaled finite-room queue converges to the diffusion reflected at kappa";
    let horizon = horizon_of(&p.t_points)?;
    let mut checks = Vec::new();
    if p.replications >= 2 {
        let spec = qed_spec(p.n, p.mu, p.beta, p.theta, Some(p.kappa))?;
        let cap = spec.capacity().expect("finite room");
        let master = derive_seed(seed, "finite_room/queue");
        let rows = runner.map(p.replications, |rep| {
            let r = realize(&spec, Construction::TimeChange, StreamSeed::new(master, rep), horizon)?;
            let off_capacity = r
                .events
                .iter()
                .filter(|e| e.kind == EventKind::Blocked && e.q_after != cap)
                .count();
            Ok((x_at(&r, &p.t_points), scaled(r.queue.max_value(), p.n), off_capacity))
        })?;
        let sup_x = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
        let off: usize = rows.iter().map(|r| r.2).sum();
        let q: Vec<Vec<f64>> = rows.into_iter().map(|r| r.0).collect();
        checks.push(Check::at_most("sup_x", sup_x, p.kappa + 1.0 / (p.n as f64).sqrt()));
        checks.push(Check::exact("blocking_below_capacity", off as f64));

        let limit = DiffusionSpec::erlang_a(p.mu, p.theta, p.beta, 0.0, p.dt, horizon).with_barrier(p.kappa);
        let lmaster = derive_seed(seed, "finite_room/limit");
        let drows = runner.map(p.replications, |rep| {
            let r = reflected_limit(&limit, StreamSeed::new(lmaster, rep))?;
            let at: Vec<f64> = p.t_points.iter().map(|&t| grid_at(&r.content, t)).collect();
            Ok((at, r.complementarity_residual(p.kappa), r.barrier_excess(p.kappa)))
        })?;
        let residual = drows.iter().map(|r| r.1).fold(0.0, f64::max);
        let excess = drows.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
        let d: Vec<Vec<f64>> = drows.into_iter().map(|r| r.0).collect();
        checks.push(Check::exact("regulator_complementarity", residual));
        checks.push(Check::at_most("limit_barrier_excess", excess, 0.0));
        checks.extend(two_sample_checks("", &q, &d, &p.t_points, p.ks_threshold)?);
    }
    Ok(Verdict::new(
        "finite_room",
        claim,
        seed,
        p.replications,
        checks,
        p.replications < MIN_KS_REPLICATIONS,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneralArrival {
    pub n: u64,
    pub mu: f64,
    pub beta: f64,
    pub theta: f64,
    /// Interarrival law; rescaled to mean `1/λ_n`.
    pub interarrival: LawConfig,
    pub replications: u64,
    pub t_points: Vec<f64>,
    pub dt: f64,
    pub ks_threshold: f64,
}

impl Default for GeneralArrival {
    fn default() -> Self {
        GeneralArrival {
            n: 400,
            mu: 1.0,
            beta: 1.0,
            theta: 0.5,
            interarrival: LawConfig::Erlang { shape: 2, rate: 1.0 },
            replications: 10_000,
            t_points: vec![0.5, 1.0, 2.0],
            dt: 0.005,
            ks_threshold: 0.05,
        }
    }
}

pub fn general_arrival(p: &GeneralArrival, runner: &Runner, seed: u64) -> HResult<Verdict> {
    let claim = "with renewal arrivals the Erlang-A limit keeps its drift and has infinitesimal variance mu*(1 + c_a^2)";
    let horizon = horizon_of(&p.t_points)?;
    let mut checks = Vec::new();
    if p.replications >= 2 {
        let base = qed_spec(p.n, p.mu, p.beta, p.theta, None)?;
        let law: Law = p.interarrival.into();
        let spec = ModelSpec::general_arrival(p.n, p.mu, p.theta, base.lambda, None, law);
        spec.validate()?;
        let scv = ArrivalLaw::Renewal(law).scv();
        let q = queue_rows(&spec, Construction::TimeChange, &p.t_points, p.replications, runner, derive_seed(seed, "general_arrival/queue"))?;
        let limit = DiffusionSpec {
            sigma2: p.mu * (1.0 + scv),
            ..DiffusionSpec::erlang_a(p.mu, p.theta, p.beta, 0.0, p.dt, horizon)
        };
        let d = diffusion_rows(&p.t_points, p.replications, runner, derive_seed(seed, "general_arrival/limit"), |s| {
            erlang_a_limit(&limit, s)
        })?;
        checks.extend(two_sample_checks("", &q, &d, &p.t_points, p.ks_threshold)?);
    }
    Ok(Verdict::new(
        "general_arrival",
        claim,
        seed,
        p.replications,
        checks,
        p.replications < MIN_KS_REPLICATIONS,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MartingaleSuite {
    pub n: u64,
    pub mu: f64,
    pub beta: f64,
    pub theta: f64,
    pub kappa: f64,
    /// Paths per family for the pathwise identities.
    pub identity_paths: u64,
    pub identity_horizon: f64,
    pub identity_tolerance: f64,
    pub replications: u64,
    pub horizon: f64,
    pub t_points: Vec<f64>,
    pub z: f64,
    /// Compensator multiplier of the injected-fault control.
    pub fault_factor: f64,
    pub c_grid: Vec<f64>,
    pub d_grid: Vec<f64>,
}

impl Default for MartingaleSuite {
    fn default() -> Self {
        MartingaleSuite {
            n: 100,
            mu: 1.0,
            beta: 1.0,
            theta: 0.5,
            kappa: 1.0,
            identity_paths: 1000,
            identity_horizon: 2.0,
            identity_tolerance: 1e-9,
            replications: 10_000,
            horizon: 1.0,
            t_points: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            z: 3.0,
            fault_factor: 1.1,
            c_grid: vec![1.0, 1.5, 2.0],
            d_grid: vec![0.25, 0.5, 1.0],
        }
    }
}

/// Pathwise identities: the scaled state equation, `[N − C] = N` for each
/// counting process, and zero covariation between distinct martingales.
/// Alternate paths use the thinning construction.
pub fn martingale_identities(p: &MartingaleSuite, runner: &Runner, seed: u64) -> HResult<Verdict> {
    let claim = "the scaled queue equals its martingale representation pathwise, with exact optional brackets";
    let families = [
        ("infinite_server", ModelSpec::infinite_server(p.n, p.mu, p.n as f64 * p.mu)),
        ("erlang_a", qed_spec(p.n, p.mu, p.beta, p.theta, None)?),
        ("finite_room", qed_spec(p.n, p.mu, p.beta, p.theta, Some(p.kappa))?),
    ];
    let mut checks = Vec::new();
    for (name, spec) in &families {
        let master = derive_seed(seed, &format!("martingale_suite/identities/{name}"));
        let rows = runner.map(p.identity_paths, |rep| {
            let construction = if rep % 2 == 0 { Construction::TimeChange } else { Construction::Thinning };
            let r = realize(spec, construction, StreamSeed::new(master, rep), p.identity_horizon)?;
            let b = decompose(&r)?;
            let residual = scaled_state_identity(&r, &b)? / identity_scale(&r);
            let mut oqv_mismatch = 0usize;
            for i in 0..3 {
                let c = b.compensated(i)?;
                if optional_qv(&c, &c) != b.counting[i] {
                    oqv_mismatch += 1;
                }
            }
            let bracket = b.pqv[0]
                .as_ref()
                .map_or(0.0, |v| (v.value(p.identity_horizon) - r.spec.lambda / p.n as f64 * p.identity_horizon).abs());
            Ok((residual, oqv_mismatch, orthogonality_test(&b), bracket))
        })?;
        let residual = rows.iter().map(|r| r.0).fold(0.0, f64::max);
        let mismatch: usize = rows.iter().map(|r| r.1).sum();
        let orth = rows.iter().map(|r| r.2).fold(0.0, f64::max);
        let bracket = rows.iter().map(|r| r.3).fold(0.0, f64::max);
        checks.push(Check::at_most(format!("identity_residual({name})"), residual, p.identity_tolerance));
        checks.push(Check::exact(format!("oqv_mismatches({name})"), mismatch as f64));
        checks.push(Check::exact(format!("covariation({name})"), orth));
        checks.push(Check::at_most(format!("arrival_bracket({name})"), bracket, 1e-12));
    }
    Ok(Verdict::new("martingale_identities", claim, seed, p.identity_paths, checks, p.identity_paths == 0))
}

fn worst_moment_ratio(r: &MomentReport) -> f64 {
    r.rows
        .iter()
        .map(|row| ratio(row.mean, row.se).max(ratio(row.centered_square, row.centered_square_se)))
        .fold(0.0, f64::max)
}

/// `E M_i(t) = 0` and `E[M_i(t)² − ⟨M_i⟩(t)] = 0` in the Erlang-A model, plus
/// an injected fault that must be detected.
pub fn martingale_moments(p: &MartingaleSuite, runner: &Runner, seed: u64) -> HResult<Verdict> {
    let claim = "compensated arrival, service and abandonment counts have mean zero and predictable brackets";
    let spec = qed_spec(p.n, p.mu, p.beta, p.theta, None)?;
    let horizon = horizon_of(&p.t_points)?.max(p.horizon);
    let master = derive_seed(seed, "martingale_suite/moments");
    let active = [true, true, spec.theta > 0.0];
    let init = || (MomentTest::new(p.t_points.clone(), active), MomentTest::new(p.t_points.clone(), active));
    let (genuine, faulty) = runner.fold(
        p.replications,
        init,
        |acc, rep| {
            let r = realize(&spec, Construction::TimeChange, StreamSeed::new(master, rep), horizon)?;
            let b = decompose(&r)?;
            acc.0.push(&b)?;
            acc.1.push(&b.with_compensator_scale(p.fault_factor)?)
        },
        |total, part| {
            total.0.merge(&part.0)?;
            total.1.merge(&part.1)
        },
    )?;
    let (g, f) = (genuine.report(p.z), faulty.report(p.z));
    let checks = vec![
        Check::at_most("moments_se", worst_moment_ratio(&g), p.z),
        Check::at_least("fault_detected_se", worst_moment_ratio(&f), p.z),
    ];
    Ok(Verdict::new("martingale_moments", claim, seed, p.replications, checks, g.underpowered))
}

/// Lenglart's inequality `P(sup|M| > c) ≤ d/c² + P(⟨M⟩(T) > d)` for each
/// martingale on the `(c, d)` grid.
pub fn martingale_lenglart(p: &MartingaleSuite, runner: &Runner, seed: u64) -> HResult<Verdict> {
    let claim = "the scaled martingales obey the Lenglart-Rebolledo tail bound";
    let spec = qed_spec(p.n, p.mu, p.beta, p.theta, None)?;
    let master = derive_seed(seed, "martingale_suite/lenglart");
    let rows = runner.map(p.replications, |rep| {
        let r = realize(&spec, Construction::TimeChange, StreamSeed::new(master, rep), p.horizon)?;
        let b = decompose(&r)?;
        Ok([0, 1, 2].map(|i| {
            let bracket = b.pqv[i].as_ref().map_or(f64::NAN, |v| v.value(p.horizon));
            (b.m[i].sup_abs(), bracket)
        }))
    })?;
    let mut checks = Vec::new();
    let mut underpowered = false;
    for i in 0..3 {
        if i == 2 && spec.theta == 0.0 {
            continue;
        }
        let sups: Vec<f64> = rows.iter().map(|r| r[i].0).collect();
        let brackets: Vec<f64> = rows.iter().map(|r| r[i].1).collect();
        let table = lenglart_check(&sups, &brackets, &p.c_grid, &p.d_grid)?;
        underpowered |= table.underpowered;
        let slack = table
            .rows
            .iter()
            .map(|row| row.lhs - row.rhs - 2.0 * row.se)
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::at_most(format!("lenglart_excess(M{})", i + 1), slack, 0.0));
    }
    Ok(Verdict::new("martingale_lenglart", claim, seed, p.replications, checks, underpowered))
}

pub fn martingale_suite(p: &MartingaleSuite, runner: &Runner, seed: u64) -> HResult<Verdict> {
    let parts = [
        martingale_identities(p, runner, seed)?,
        martingale_moments(p, runner, seed)?,
        martingale_lenglart(p, runner, seed)?,
    ];
    let underpowered = parts.iter().any(|v| v.status == crate::harness::Status::Inconclusive);
    let checks = parts.into_iter().flat_map(|v| v.checks).collect();
    Ok(Verdict::new(
        "martingale_suite",
        "counting processes minus their compensators are martingales with the stated brackets",
        seed,
        p.replications,
        checks,
        underpowered,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FourthRep {
    pub n: u64,
    pub mu: f64,
    pub decomposition_paths: u64,
    pub decomposition_horizon: f64,
    pub grid_dt: f64,
    pub q0: f64,
    pub n_emp: u64,
    pub replications: u64,
    pub dt: f64,
    pub horizon: f64,
    pub pairs: Vec<[f64; 2]>,
    pub z: f64,
}

impl Default for FourthRep {
    fn default() -> Self {
        FourthRep {
            n: 100,
            mu: 1.0,
            decomposition_paths: 1000,
            decomposition_horizon: 2.0,
            grid_dt: 0.01,
            q0: 1.0,
            n_emp: 10_000,
            replications: 5000,
            dt: 0.001,
            horizon: 2.0,
            pairs: vec![[0.5, 0.5], [0.5, 1.0], [1.0, 2.0]],
            z: 3.0,
        }
    }
}

pub fn fourth_rep(p: &FourthRep, runner: &Runner, seed: u64) -> HResult<Verdict> {
    let claim = "the service-time decomposition reconstructs the queue, and the four-term limit has Brownian increments of variance 2*mu";
    let mut checks = Vec::new();
    let spec = ModelSpec::infinite_server(p.n, p.mu, p.n as f64 * p.mu);
    let grid = uniform_grid(p.decomposition_horizon, p.grid_dt)?;
    let master = derive_seed(seed, "fourth_rep/decomposition");
    let residuals = runner.map(p.decomposition_paths, |rep| {
        let r = realize(&spec, Construction::ServiceTimes, StreamSeed::new(master, rep), p.decomposition_horizon)?;
        Ok(fourth_decomposition(&r, &grid)?.residual())
    })?;
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    checks.push(Check::at_most("reconstruction_residual", worst, 1e-9 * p.n as f64));

    if p.replications >= 2 {
        let limit = FourthRepSpec {
            q0: p.q0,
            mu: p.mu,
            x0: 0.0,
            n_emp: p.n_emp,
            dt: p.dt,
            horizon: p.horizon,
        };
        let mut times: Vec<f64> = p.pairs.iter().flatten().copied().collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let lmaster = derive_seed(seed, "fourth_rep/limit");
        let rows = runner.map(p.replications, |rep| {
            let path = fourth_rep_limit(&limit, StreamSeed::new(lmaster, rep))?;
            let b = b_hat(&path.x, p.mu);
            Ok(times.iter().map(|&t| grid_at(&b, t)).collect::<Vec<f64>>())
        })?;
        let col = |t: f64| column(&rows, times.iter().position(|&s| s == t).expect("listed"));
        for &[s, t] in &p.pairs {
            let (cov, se) = covariance_se(&col(s), &col(t));
            let oracle = 2.0 * p.mu * s.min(t);
            checks.push(Check::at_most(format!("cov_se({s},{t})"), ratio(cov - oracle, se), p.z));
        }
    }
    Ok(Verdict::new(
        "fourth_rep",
        claim,
        seed,
        p.replications,
        checks,
        p.replications < MIN_KS_REPLICATIONS,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapsConvergence {
    pub mu: f64,
    pub theta: f64,
    pub b: f64,
    pub horizon: f64,
    pub dt: f64,
    pub ratio_range: [f64; 2],
    pub pairs: u64,
    /// Number of jumps of each random input path.
    pub jumps: u32,
    /// Size of the perturbation between paired inputs.
    pub perturbation: f64,
}

impl Default for MapsConvergence {
    fn default() -> Self {
        MapsConvergence {
            mu: 1.0,
            theta: 0.5,
            b: 1.0,
            horizon: 1.0,
            dt: 0.01,
            ratio_range: [1.7, 2.3],
            pairs: 100,
            jumps: 20,
            perturbation: 0.1,
        }
    }
}

fn random_step(rng: &mut impl Rng, k: u32, size: f64, horizon: f64) -> qedq_core::Result<StepPath> {
    let mut epochs: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * horizon).filter(|&t| t > 0.0).collect();
    epochs.sort_by(f64::total_cmp);
    epochs.dedup();
    let mut level = 0.0;
    let values = epochs
        .iter()
        .map(|_| {
            level += size * (2.0 * rng.random::<f64>() - 1.0);
            level
        })
        .collect();
    StepPath::new(0.0, epochs, values, horizon)
}

/// Sup error of the Euler solution of `x = b − μ∫x` against `b e^{−μt}`.
pub fn analytic_error(b: f64, mu: f64, horizon: f64, dt: f64) -> HResult<f64> {
    let x = solve_integral_rep(b, &StepPath::zero(horizon), &DriftFn::Linear { mu }, dt)?;
    Ok(x
        .times()
        .iter()
        .zip(x.values())
        .map(|(&t, &v)| (v - b * (-mu * t).exp()).abs())
        .fold(0.0, f64::max))
}

pub fn maps_convergence(p: &MapsConvergence, runner: &Runner, seed: u64) -> HResult<Verdict> {
    let claim = "the integral-equation map is well defined, first-order accurate in dt and Lipschitz in its inputs";
    let e = [1.0, 2.0, 4.0].map(|k| analytic_error(p.b, p.mu, p.horizon, p.dt / k));
    let [e1, e2, e4] = [e[0].as_ref(), e[1].as_ref(), e[2].as_ref()].map(|r| r.map_or(f64::NAN, |v| *v));
    if let Some(Err(err)) = e.into_iter().find(|r| r.is_err()) {
        return Err(err);
    }
    let [lo, hi] = p.ratio_range;
    let mut checks = vec![
        Check::within(format!("halving_ratio(dt={})", p.dt), e1 / e2, lo, hi),
        Check::within(format!("halving_ratio(dt={})", p.dt / 2.0), e2 / e4, lo, hi),
    ];

    let h = DriftFn::PiecewiseLinear { mu: p.mu, theta: p.theta, offset: 0.0 };
    let c = h.modulus();
    let master = derive_seed(seed, "maps_convergence/perturbation");
    let ratios = runner.map(p.pairs, |pair| {
        let mut rng = StreamSeed::new(master, pair).stream(StreamRole::Auxiliary(0));
        let y1 = random_step(&mut rng, p.jumps, 0.5, p.horizon)?;
        let y2 = y1.add(&random_step(&mut rng, p.jumps / 4 + 1, p.perturbation, p.horizon)?)?;
        let b1 = 2.0 * rng.random::<f64>() - 1.0;
        let b2 = b1 + p.perturbation * (2.0 * rng.random::<f64>() - 1.0);
        let epochs: Vec<f64> = y1.epochs().iter().chain(y2.epochs()).copied().collect();
        let coarse = solver_grid(p.horizon, p.dt, &epochs)?;
        let fine = solver_grid(p.horizon, p.dt / 2.0, &epochs)?;
        let x1 = solve_integral_rep_on(b1, &y1, &h, &coarse)?;
        let x2 = solve_integral_rep_on(b2, &y2, &h, &coarse)?;
        let grid_error = |x: &GridPath, b: f64, y: &StepPath| -> qedq_core::Result<f64> {
            let f = solve_integral_rep_on(b, y, &h, &fine)?;
            Ok(x.times().iter().zip(x.values()).map(|(&t, &v)| (v - f.value(t)).abs()).fold(0.0, f64::max))
        };
        let err = grid_error(&x1, b1, &y1)?.max(grid_error(&x2, b2, &y2)?);
        let delta = (b1 - b2).abs() + y1.sub(&y2)?.sup_abs();
        let lhs = x1.sup_distance(&x2)?;
        let rhs = delta * (c * p.horizon).exp() + 2.0 * err;
        Ok(if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY })
    })?;
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    checks.push(Check::at_most("perturbation_ratio", worst, 1.0));
    Ok(Verdict::new("maps_convergence", claim, seed, p.pairs, checks, false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructionLaw {
    pub n: u64,
    pub mu: f64,
    pub beta: f64,
    pub theta: f64,
    pub replications: u64,
    pub t: f64,
    pub ks_threshold: f64,
}

impl Default for ConstructionLaw {
    fn default() -> Self {
        ConstructionLaw {
            n: 100,
            mu: 1.0,
            beta: 1.0,
            theta: 0.5,
            replications: 10_000,
            t: 1.0,
            ks_threshold: 0.03,
        }
    }
}

pub fn construction_law(p: &ConstructionLaw, runner: &Runner, seed: u64) -> HResult<Verdict> {
    let claim = "the random-time-change and thinning constructions produce the same law";
    let mut checks = Vec::new();
    if p.replications >= 2 {
        let spec = qed_spec(p.n, p.mu, p.beta, p.theta, None)?;
        let t = [p.t];
        let a = queue_rows(&spec, Construction::TimeChange, &t, p.replications, runner, derive_seed(seed, "construction_law/time_change"))?;
        let b = queue_rows(&spec, Construction::Thinning, &t, p.replications, runner, derive_seed(seed, "construction_law/thinning"))?;
        checks.extend(two_sample_checks("", &a, &b, &t, p.ks_threshold)?);
    }
    Ok(Verdict::new(
        "construction_law",
        claim,
        seed,
        p.replications,
        checks,
        p.replications < MIN_KS_REPLICATIONS,
    ))
}
