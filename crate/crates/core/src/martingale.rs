//! Scaled martingale decompositions of queue realizations and the
//! diagnostics run on them.
//!
//! For a Markovian realization with counting paths `A, D, L` and
//! compensators `λt, μ∫(Q∧n), θ∫(Q−n)⁺`,
//!
//! ```text
//! M₁ = (A − λt)/√n,   M₂ = (D − μ∫(Q∧n))/√n,   M₃ = (L − θ∫(Q−n)⁺)/√n,
//! ⟨Mᵢ⟩ = compensatorᵢ/n,   [Mᵢ] = countingᵢ/n.
//! ```

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::models::{compensators, ArrivalLaw, Family, QueueRealization};
use crate::paths::{optional_qv, Cadlag, LinearPath, StepPath};
use crate::stats::{binomial_se, EnsembleStats};

/// The three scaled martingales of one realization with their brackets.
///
/// Index 0 is arrivals, 1 departures, 2 abandonments. `M₃` is the zero path
/// when there is no abandonment.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleBundle {
    pub n: u64,
    pub horizon: f64,
    pub m: [LinearPath; 3],
    /// Predictable quadratic variations. `None` for renewal arrivals, whose
    /// centered counting path is not a martingale.
    pub pqv: [Option<LinearPath>; 3],
    pub oqv: [StepPath; 3],
    pub counting: [StepPath; 3],
    pub compensator: [LinearPath; 3],
    /// `V = U/√n` for the blocking count `U`; zero without a finite room.
    pub regulator: StepPath,
    /// Multiplier applied to every compensator; 1 for a genuine decomposition.
    pub compensator_scale: f64,
    active: [bool; 3],
}

impl MartingaleBundle {
    /// Whether `Mᵢ` is a nontrivial martingale with a tracked bracket.
    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    /// Unscaled compensated counting path `N − C`; its jumps are exactly the
    /// integer jumps of `N`.
    pub fn compensated(&self, i: usize) -> Result<LinearPath> {
        LinearPath::lin_comb(
            1.0,
            &LinearPath::from_step(&self.counting[i]),
            -1.0,
            &self.compensator[i],
        )
    }

    /// Same realization with every compensator multiplied by `factor`. Used
    /// as an injected fault to confirm that the moment tests have power.
    pub fn with_compensator_scale(&self, factor: f64) -> Result<MartingaleBundle> {
        let comp = self.compensator.clone().map(|c| c.scale(factor / self.compensator_scale));
        let mut out = build(
            self.n,
            self.horizon,
            self.counting.clone(),
            comp,
            self.regulator.clone(),
            self.active,
        )?;
        out.compensator_scale = factor;
        Ok(out)
    }
}

fn build(
    n: u64,
    horizon: f64,
    counting: [StepPath; 3],
    compensator: [LinearPath; 3],
    regulator: StepPath,
    active: [bool; 3],
) -> Result<MartingaleBundle> {
    let nf = n as f64;
    let root = libm::sqrt(nf);
    let mut m = Vec::with_capacity(3);
    for i in 0..3 {
        m.push(LinearPath::lin_comb(
            1.0 / root,
            &LinearPath::from_step(&counting[i]),
            -1.0 / root,
            &compensator[i],
        )?);
    }
    let m: [LinearPath; 3] = m.try_into().expect("three paths");
    // renewal arrivals (index 0 inactive) have no bracket; M₃ ≡ 0 keeps its zero bracket
    let pqv = [0, 1, 2].map(|i| (i != 0 || active[0]).then(|| compensator[i].scale(1.0 / nf)));
    let oqv = counting.each_ref().map(|c| c.scale(1.0 / nf));
    Ok(MartingaleBundle {
        n,
        horizon,
        m,
        pqv,
        oqv,
        counting,
        compensator,
        regulator,
        compensator_scale: 1.0,
        active,
    })
}

/// Decomposes a Markovian realization into its scaled martingales.
pub fn decompose(r: &QueueRealization) -> Result<MartingaleBundle> {
    let c = compensators(r)?;
    let n = r.spec.n;
    let renewal = matches!(r.spec.arrival, ArrivalLaw::Renewal(_));
    let abandons = r.spec.theta > 0.0 && r.spec.servers().is_some();
    let regulator = r.blocked.scale(1.0 / libm::sqrt(n as f64));
    build(
        n,
        r.horizon,
        [r.arrivals.clone(), r.departures.clone(), r.abandonments.clone()],
        [c.arrival, c.departure, c.abandonment],
        regulator,
        [!renewal, true, abandons],
    )
}

/// The drift `h` of the scaled integral representation for this family:
/// `h(s) = −μs` without server limit, `h(s) = −μ(s∧0) − θs⁺` otherwise.
pub fn scaled_drift(r: &QueueRealization) -> impl Fn(f64) -> f64 {
    let (mu, theta) = (r.spec.mu, r.spec.theta);
    let infinite = r.spec.family == Family::InfiniteServer;
    move |s: f64| {
        if infinite {
            -mu * s
        } else {
            -mu * s.min(0.0) - theta * s.max(0.0)
        }
    }
}

/// `sup_t |X(t) − [X(0) + M₁ − M₂ − M₃ + (λ − μn)t/√n + ∫h(X) − V]|` with
/// `X = (Q − n)/√n`. The identity is algebraic, so the residual is pure
/// rounding.
pub fn scaled_state_identity(r: &QueueRealization, b: &MartingaleBundle) -> Result<f64> {
    let nf = r.spec.n as f64;
    let root = libm::sqrt(nf);
    let x = r.queue.map(|q| (q - nf) / root);
    let h = scaled_drift(r);
    let drift = LinearPath::integral_of(&x, h);
    let mut rhs = LinearPath::affine(
        x.initial(),
        (r.spec.lambda - r.spec.mu * nf) / root,
        r.horizon,
    );
    rhs = rhs.add(&b.m[0])?;
    rhs = rhs.sub(&b.m[1])?;
    rhs = rhs.sub(&b.m[2])?;
    rhs = rhs.add(&drift)?;
    rhs = rhs.sub(&LinearPath::from_step(&b.regulator))?;
    let diff = LinearPath::from_step(&x).sub(&rhs)?;
    Ok(diff.sup_abs())
}

/// Magnitude of the terms in [`scaled_state_identity`], used to scale its
/// tolerance.
pub fn identity_scale(r: &QueueRealization) -> f64 {
    let root = libm::sqrt(r.spec.n as f64);
    let volume = r.arrivals.terminal() + r.departures.terminal() + r.abandonments.terminal();
    1.0f64.max(volume / root).max(r.queue.max_value() / root)
}

/// `max_{i≠j} |[Mᵢ, Mⱼ](T)|`. Zero when no two streams jump together.
pub fn orthogonality_test(b: &MartingaleBundle) -> f64 {
    let mut worst = 0.0f64;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let cov = optional_qv(&b.m[i], &b.m[j]);
        worst = worst.max(cov.terminal().abs());
    }
    worst
}

/// Predictable quadratic variation of `N − A` for a compensator that may
/// jump: `A(t) − Σ_{s≤t} ΔA(s)²`. Equal to `A` when `A` is continuous.
pub fn pqv_counting_general(counting: &StepPath, comp: &LinearPath) -> Result<LinearPath> {
    if !comp.is_nondecreasing() {
        return Err(Error::Contract("compensator decreases".into()));
    }
    if let Some((t, j)) = counting.jumps().into_iter().find(|&(_, j)| j != 1.0) {
        return Err(Error::Contract(format!("counting path jumps by {j} at {t}")));
    }
    let k = comp.knots().len();
    let mut knots = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    let mut jumps = Vec::with_capacity(k);
    let mut slopes = Vec::with_capacity(k);
    let mut removed = 0.0;
    for i in 0..k {
        let (t, v, j, s) = comp.segment_parts(i);
        let sq = if i == 0 { 0.0 } else { j * j };
        removed += sq;
        knots.push(t);
        values.push(v - removed);
        jumps.push(j - sq);
        slopes.push(s);
    }
    Ok(LinearPath::from_parts(knots, values, jumps, slopes, comp.horizon()))
}

/// One line of a martingale moment report.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    /// 1, 2 or 3.
    pub index: usize,
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    /// Mean of `Mᵢ(t)² − ⟨Mᵢ⟩(t)`.
    pub centered_square: f64,
    pub centered_square_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub replications: u64,
    pub rows: Vec<MomentRow>,
    /// Fewer replications than the test needs for meaningful power.
    pub underpowered: bool,
}

impl MomentReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Ensemble accumulator for the zero-mean and centered-square tests.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTest {
    t_grid: Vec<f64>,
    active: [bool; 3],
    values: [EnsembleStats; 3],
    squares: [EnsembleStats; 3],
}

/// Replications below which the moment test is underpowered.
pub const MOMENT_TEST_MIN_R: u64 = 100;

impl MomentTest {
    pub fn new(t_grid: Vec<f64>, active: [bool; 3]) -> Self {
        let mk = || EnsembleStats::new(t_grid.clone());
        MomentTest {
            active,
            values: [mk(), mk(), mk()],
            squares: [mk(), mk(), mk()],
            t_grid,
        }
    }

    pub fn push(&mut self, b: &MartingaleBundle) -> Result<()> {
        for i in 0..3 {
            if !self.active[i] {
                continue;
            }
            let Some(pqv) = &b.pqv[i] else {
                return Err(Error::Contract(format!("M{} has no bracket", i + 1)));
            };
            let m = b.m[i].sample(&self.t_grid);
            let p = pqv.sample(&self.t_grid);
            let sq: Vec<f64> = m.iter().zip(&p).map(|(x, v)| x * x - v).collect();
            self.values[i].push(&m)?;
            self.squares[i].push(&sq)?;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &MomentTest) -> Result<()> {
        for i in 0..3 {
            self.values[i].merge(&other.values[i])?;
            self.squares[i].merge(&other.squares[i])?;
        }
        Ok(())
    }

    /// Flags every mean farther than `z` standard errors from zero.
    pub fn report(&self, z: f64) -> MomentReport {
        let mut rows = Vec::new();
        let mut replications = 0;
        for i in 0..3 {
            if !self.active[i] {
                continue;
            }
            let vs = self.values[i].summaries();
            let ss = self.squares[i].summaries();
            replications = self.values[i].replications();
            for (k, &t) in self.t_grid.iter().enumerate() {
                let se = vs[k].std_error.unwrap_or(f64::NAN);
                let se2 = ss[k].std_error.unwrap_or(f64::NAN);
                let ok = |mean: f64, se: f64| mean.abs() <= z * se || (mean == 0.0 && se == 0.0);
                rows.push(MomentRow {
                    index: i + 1,
                    t,
                    mean: vs[k].mean,
                    se,
                    centered_square: ss[k].mean,
                    centered_square_se: se2,
                    pass: ok(vs[k].mean, se) && ok(ss[k].mean, se2),
                });
            }
        }
        MomentReport {
            replications,
            rows,
            underpowered: replications < MOMENT_TEST_MIN_R,
        }
    }
}

/// Zero-mean and centered-square tests over a set of bundles.
pub fn martingale_mean_test(bundles: &[MartingaleBundle], t_grid: &[f64], z: f64) -> Result<MomentReport> {
    let Some(first) = bundles.first() else {
        return Err(Error::Contract("no bundles".into()));
    };
    let active = [0, 1, 2].map(|i| first.is_active(i));
    let mut test = MomentTest::new(t_grid.to_vec(), active);
    for b in bundles {
        test.push(b)?;
    }
    Ok(test.report(z))
}

/// Replications below which the Lenglart check is underpowered.
pub const LENGLART_MIN_R: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct LenglartRow {
    pub c: f64,
    pub d: f64,
    /// Empirical `P(sup_{t≤T} |M(t)| > c)`.
    pub lhs: f64,
    /// `d/c² + P(⟨M⟩(T) > d)`.
    pub rhs: f64,
    pub se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LenglartTable {
    pub rows: Vec<LenglartRow>,
    pub underpowered: bool,
}

impl LenglartTable {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Checks `P(sup|M| > c) ≤ d/c² + P(⟨M⟩(T) > d)` on a grid, allowing two
/// combined binomial standard errors. Inputs are per-replication
/// `sup_{t≤T} |M(t)|` and `⟨M⟩(T)`.
pub fn lenglart_check(sup_abs: &[f64], bracket_at_t: &[f64], c_grid: &[f64], d_grid: &[f64]) -> Result<LenglartTable> {
    let r = sup_abs.len();
    if r == 0 || bracket_at_t.len() != r {
        return Err(Error::Contract("one sup and one bracket value per replication".into()));
    }
    let mut rows = Vec::new();
    for &c in c_grid {
        let lhs = sup_abs.iter().filter(|&&s| s > c).count() as f64 / r as f64;
        for &d in d_grid {
            let tail = bracket_at_t.iter().filter(|&&v| v > d).count() as f64 / r as f64;
            let rhs = d / (c * c) + tail;
            let (a, b) = (binomial_se(lhs, r), binomial_se(tail, r));
            let se = libm::sqrt(a * a + b * b);
            rows.push(LenglartRow {
                c,
                d,
                lhs,
                rhs,
                se,
                pass: lhs <= rhs + 2.0 * se,
            });
        }
    }
    Ok(LenglartTable {
        rows,
        underpowered: r < LENGLART_MIN_R,
    })
}
