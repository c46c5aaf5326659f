//! Replication-parallel Monte Carlo and verdict assembly.
//!
//! Replications are split into fixed-size chunks independent of the worker
//! count and reduced in chunk order, so every statistic is reproducible bit
//! for bit from the master seed alone.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qedq_core::models::{
    construct_service_times, construct_thinning, construct_time_change, Construction, ModelSpec,
    QueueRealization,
};
use qedq_core::rng::StreamSeed;
use qedq_core::stats::EnsembleStats;

/// Replications per reduction chunk.
pub const CHUNK: u64 = 256;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] qedq_core::Error),
    #[error("run stopped after {completed} of {requested} replications: {source}")]
    Partial {
        completed: u64,
        requested: u64,
        source: qedq_core::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type HResult<T> = Result<T, HarnessError>;

/// A worker pool.
pub struct Runner {
    pool: rayon::ThreadPool,
}

impl Runner {
    /// `workers = None` uses one worker per CPU.
    pub fn new(workers: Option<usize>) -> HResult<Self> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = workers {
            if w == 0 {
                return Err(HarnessError::Usage("workers must be positive".into()));
            }
            b = b.num_threads(w);
        }
        let pool = b.build().map_err(|e| HarnessError::Usage(e.to_string()))?;
        Ok(Runner { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Evaluates `f` on replications `0..r`, returning results in
    /// replication order.
    pub fn map<T, F>(&self, r: u64, f: F) -> HResult<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> qedq_core::Result<T> + Sync,
    {
        let out: Vec<qedq_core::Result<T>> =
            self.pool.install(|| (0..r).into_par_iter().map(&f).collect());
        let mut done = Vec::with_capacity(out.len());
        for (k, res) in out.into_iter().enumerate() {
            match res {
                Ok(v) => done.push(v),
                Err(source) => {
                    return Err(HarnessError::Partial {
                        completed: k as u64,
                        requested: r,
                        source,
                    })
                }
            }
        }
        Ok(done)
    }

    /// Folds replications `0..r` into per-chunk accumulators and merges the
    /// chunks in order.
    pub fn fold<A, I, S, M>(&self, r: u64, init: I, step: S, merge: M) -> HResult<A>
    where
        A: Send,
        I: Fn() -> A + Sync,
        S: Fn(&mut A, u64) -> qedq_core::Result<()> + Sync,
        M: Fn(&mut A, A) -> qedq_core::Result<()>,
    {
        let chunks = r.div_ceil(CHUNK);
        let parts: Vec<Result<A, (u64, qedq_core::Error)>> = self.pool.install(|| {
            (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut acc = init();
                    for rep in c * CHUNK..((c + 1) * CHUNK).min(r) {
                        step(&mut acc, rep).map_err(|e| (rep, e))?;
                    }
                    Ok(acc)
                })
                .collect()
        });
        let mut total = init();
        for part in parts {
            match part {
                Ok(a) => merge(&mut total, a)?,
                Err((rep, source)) => {
                    return Err(HarnessError::Partial {
                        completed: rep,
                        requested: r,
                        source,
                    })
                }
            }
        }
        Ok(total)
    }
}

/// Builds one realization with the named construction.
pub fn realize(
    spec: &ModelSpec,
    construction: Construction,
    seed: StreamSeed,
    horizon: f64,
) -> qedq_core::Result<QueueRealization> {
    match construction {
        Construction::TimeChange => construct_time_change(spec, seed, horizon),
        Construction::Thinning => construct_thinning(spec, seed, horizon),
        Construction::ServiceTimes => construct_service_times(spec, seed, horizon),
    }
}

/// A scalar functional of a realization evaluated on a time grid.
pub type Extractor<'a> = &'a (dyn Fn(&QueueRealization, &[f64]) -> Vec<f64> + Sync);

/// Simulates `r` replications and accumulates each extractor on `t_grid`.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble(
    runner: &Runner,
    spec: &ModelSpec,
    construction: Construction,
    master: u64,
    r: u64,
    horizon: f64,
    t_grid: &[f64],
    extractors: &[Extractor<'_>],
) -> HResult<Vec<EnsembleStats>> {
    if r == 0 {
        return Err(HarnessError::Usage("at least one replication is required".into()));
    }
    let init = || {
        extractors
            .iter()
            .map(|_| EnsembleStats::new(t_grid.to_vec()))
            .collect::<Vec<_>>()
    };
    runner.fold(
        r,
        init,
        |acc, rep| {
            let path = realize(spec, construction, StreamSeed::new(master, rep), horizon)?;
            for (e, stats) in extractors.iter().zip(acc.iter_mut()) {
                stats.push(&e(&path, t_grid))?;
            }
            Ok(())
        },
        |total, part| {
            for (t, p) in total.iter_mut().zip(&part) {
                t.merge(p)?;
            }
            Ok(())
        },
    )
}

/// A master seed for one named sub-experiment, derived from the run seed.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("eight bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Too few replications for the test to have power.
    Inconclusive,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
        }
    }
}

/// One numeric check inside an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    /// Upper bound, or the lower bound for an `at_least` check.
    pub threshold: f64,
    /// Lower bound of a range check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    pub pass: bool,
}

impl Check {
    /// Passes when `statistic ≤ threshold`.
    pub fn at_most(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            statistic,
            threshold,
            lower: None,
            pass: statistic <= threshold,
        }
    }

    /// Passes when `statistic ≥ threshold`.
    pub fn at_least(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            statistic,
            threshold,
            lower: None,
            pass: statistic >= threshold,
        }
    }

    /// Passes when `lower ≤ statistic ≤ upper`.
    pub fn within(name: impl Into<String>, statistic: f64, lower: f64, upper: f64) -> Self {
        Check {
            name: name.into(),
            statistic,
            threshold: upper,
            lower: Some(lower),
            pass: (lower..=upper).contains(&statistic),
        }
    }

    pub fn exact(name: impl Into<String>, statistic: f64) -> Self {
        Self::at_most(name, statistic, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub experiment: String,
    /// The limit statement the experiment checks.
    pub claim: String,
    pub status: Status,
    pub pass: bool,
    /// The headline check: the first failing one, else the first one.
    pub statistic: f64,
    pub threshold: f64,
    pub seed: u64,
    pub replications: u64,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub runtime_s: f64,
}

impl Verdict {
    pub fn new(
        experiment: &str,
        claim: &str,
        seed: u64,
        replications: u64,
        checks: Vec<Check>,
        underpowered: bool,
    ) -> Self {
        let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
        let head = checks.iter().find(|c| !c.pass).or(checks.first());
        let (statistic, threshold) = head.map_or((f64::NAN, f64::NAN), |c| (c.statistic, c.threshold));
        let status = if underpowered {
            Status::Inconclusive
        } else if pass {
            Status::Pass
        } else {
            Status::Fail
        };
        Verdict {
            experiment: experiment.into(),
            claim: claim.into(),
            status,
            pass: status == Status::Pass,
            statistic,
            threshold,
            seed,
            replications,
            checks,
            runtime_s: 0.0,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("verdict serializes")
    }
}

/// Runs `f` and records its wall time on the verdict.
pub fn timed(f: impl FnOnce() -> HResult<Verdict>) -> HResult<Verdict> {
    let start = Instant::now();
    let mut v = f()?;
    v.runtime_s = start.elapsed().as_secs_f64();
    Ok(v)
}

/// Process exit code for a set of verdicts: 0 all pass, 1 any failure,
/// 2 no failure but some inconclusive.
pub fn exit_code(verdicts: &[Verdict]) -> i32 {
    if verdicts.iter().any(|v| v.status == Status::Fail) {
        1
    } else if verdicts.iter().any(|v| v.status == Status::Inconclusive) {
        2
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qedq_core::paths::Cadlag;

    #[test]
    fn map_and_fold_ignore_worker_count() {
        let f = |rep: u64| Ok((rep as f64).sqrt());
        let a = Runner::new(Some(1)).unwrap().map(1000, f).unwrap();
        let b = Runner::new(Some(3)).unwrap().map(1000, f).unwrap();
        assert_eq!(a, b);
        let sum = |w| {
            Runner::new(Some(w))
                .unwrap()
                .fold(1000, || 0.0f64, |a, rep| {
                    *a += 1.0 / (1.0 + rep as f64);
                    Ok(())
                }, |t, p| {
                    *t += p;
                    Ok(())
                })
                .unwrap()
        };
        assert_eq!(sum(1).to_bits(), sum(4).to_bits());
    }

    #[test]
    fn failures_report_progress() {
        let r = Runner::new(Some(2)).unwrap();
        let err = r
            .map(10, |rep| {
                if rep == 7 {
                    Err(qedq_core::Error::Contract("boom".into()))
                } else {
                    Ok(rep)
                }
            })
            .unwrap_err();
        assert!(matches!(err, HarnessError::Partial { completed: 7, requested: 10, .. }));
    }

    #[test]
    fn ensemble_of_constant_and_single_path() {
        let runner = Runner::new(Some(2)).unwrap();
        let spec = ModelSpec::infinite_server(10, 1.0, 10.0);
        let seven: Extractor<'_> = &|_, g: &[f64]| vec![7.0; g.len()];
        let q: Extractor<'_> = &|r: &QueueRealization, g: &[f64]| r.queue.sample(g);
        let grid = [0.0, 0.5, 1.0];
        let stats = run_ensemble(&runner, &spec, Construction::TimeChange, 1, 300, 1.0, &grid, &[seven, q]).unwrap();
        for s in stats[0].summaries() {
            assert_eq!((s.mean, s.variance), (7.0, Some(0.0)));
        }
        let one = run_ensemble(&runner, &spec, Construction::TimeChange, 1, 1, 1.0, &grid, &[q]).unwrap();
        let path = realize(&spec, Construction::TimeChange, StreamSeed::new(1, 0), 1.0).unwrap();
        for (k, s) in one[0].summaries().iter().enumerate() {
            assert_eq!(s.mean, path.queue.value(grid[k]));
            assert_eq!(s.variance, None);
        }
    }

    #[test]
    fn standard_error_halves_with_quadrupled_replications() {
        // SE ∝ R^{−1/2}: doubling R divides it by √2
        let runner = Runner::new(None).unwrap();
        let spec = ModelSpec::infinite_server(50, 1.0, 50.0);
        let q: Extractor<'_> = &|r: &QueueRealization, g: &[f64]| r.queue.sample(g);
        let se = |r| {
            run_ensemble(&runner, &spec, Construction::TimeChange, 5, r, 1.0, &[1.0], &[q]).unwrap()[0]
                .summaries()[0]
                .std_error
                .unwrap()
        };
        let ratio = se(1000) / se(2000);
        assert!((ratio / std::f64::consts::SQRT_2 - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn verdict_status_and_exit_codes() {
        let ok = Verdict::new("a", "c", 1, 10, vec![Check::at_most("x", 0.1, 0.2)], false);
        let bad = Verdict::new("b", "c", 1, 10, vec![Check::at_most("x", 0.1, 0.2), Check::at_least("y", 1.0, 2.0)], false);
        let weak = Verdict::new("c", "c", 1, 10, vec![Check::at_most("x", 0.1, 0.2)], true);
        assert_eq!(ok.status, Status::Pass);
        assert_eq!((bad.status, bad.statistic, bad.threshold), (Status::Fail, 1.0, 2.0));
        assert_eq!(weak.status, Status::Inconclusive);
        assert!(!weak.pass);
        assert_eq!(exit_code(std::slice::from_ref(&ok)), 0);
        assert_eq!(exit_code(&[ok.clone(), weak.clone()]), 2);
        assert_eq!(exit_code(&[ok, weak, bad]), 1);
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
    }
}
