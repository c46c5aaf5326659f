//! Càdlàg paths with finitely many breakpoints on a bounded horizon `[0, T]`.
//!
//! Three representations cover everything the simulators produce:
//!
//! * [`StepPath`]: piecewise constant (queue contents, counting processes,
//!   regulators of jump paths);
//! * [`LinearPath`]: affine between knots with explicit jumps at knots
//!   (compensators, compensated counting processes, time changes);
//! * [`GridPath`]: values on a time grid, read as a step function (solver
//!   and diffusion output).
//!
//! All three are right-continuous with left limits. The left limit at `0` is
//! the initial value.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{domain, Error, Result};

/// Threshold below which a content value counts as strictly below the barrier
/// when auditing reflection complementarity.
pub const BOUNDARY_TOL: f64 = 1e-12;

fn check_time(t: f64, horizon: f64) -> Result<()> {
    if !(0.0..=horizon).contains(&t) {
        return Err(domain("time", format!("t = {t} not in [0, {horizon}]")));
    }
    Ok(())
}

/// Common read access to càdlàg paths.
pub trait Cadlag {
    fn horizon(&self) -> f64;

    fn initial(&self) -> f64;

    /// Right-continuous value; `t` is assumed to lie in `[0, T]`.
    fn value(&self, t: f64) -> f64;

    /// Left limit; equals [`Cadlag::initial`] at `t = 0`.
    fn left_value(&self, t: f64) -> f64;

    /// Epochs in `(0, T]` where the path may be discontinuous, with the jump
    /// size `x(t) - x(t-)` at each. Zero jumps may appear.
    fn jumps(&self) -> Vec<(f64, f64)>;

    fn eval(&self, t: f64) -> Result<f64> {
        check_time(t, self.horizon())?;
        Ok(self.value(t))
    }

    fn left_limit(&self, t: f64) -> Result<f64> {
        check_time(t, self.horizon())?;
        Ok(self.left_value(t))
    }

    /// Value at the horizon.
    fn terminal(&self) -> f64 {
        self.value(self.horizon())
    }
}

/// Piecewise-constant right-continuous path.
///
/// The value is `initial` on `[0, epochs[0])` and `values[i]` on
/// `[epochs[i], epochs[i + 1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPath {
    initial: f64,
    epochs: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
}

impl StepPath {
    pub fn new(initial: f64, epochs: Vec<f64>, values: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(domain("horizon", format!("{horizon}")));
        }
        if epochs.len() != values.len() {
            return Err(Error::Contract(format!(
                "{} epochs but {} values",
                epochs.len(),
                values.len()
            )));
        }
        let mut prev = 0.0;
        for &e in &epochs {
            if !(e > prev && e <= horizon) {
                return Err(Error::Contract(format!(
                    "epoch {e} breaks strict increase in (0, {horizon}]"
                )));
            }
            prev = e;
        }
        Ok(StepPath {
            initial,
            epochs,
            values,
            horizon,
        })
    }

    pub fn constant(value: f64, horizon: f64) -> Self {
        StepPath {
            initial: value,
            epochs: Vec::new(),
            values: Vec::new(),
            horizon,
        }
    }

    pub fn zero(horizon: f64) -> Self {
        Self::constant(0.0, horizon)
    }

    pub fn builder(initial: f64, horizon: f64) -> StepPathBuilder {
        StepPathBuilder {
            path: StepPath::constant(initial, horizon),
        }
    }

    /// Counting path starting at 0 with a unit jump at each of `times`.
    /// Coinciding times merge into one larger jump.
    pub fn counting(times: &[f64], horizon: f64) -> Result<Self> {
        let mut b = Self::builder(0.0, horizon);
        for (k, &t) in times.iter().enumerate() {
            b.push(t, (k + 1) as f64)?;
        }
        Ok(b.finish())
    }

    pub fn epochs(&self) -> &[f64] {
        &self.epochs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Grid of breakpoints `0, epochs...` paired with the value holding from each.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        core::iter::once((0.0, self.initial)).chain(
            self.epochs
                .iter()
                .copied()
                .zip(self.values.iter().copied()),
        )
    }

    fn index_at(&self, t: f64) -> usize {
        self.epochs.partition_point(|&e| e <= t)
    }

    fn value_by_index(&self, idx: usize) -> f64 {
        if idx == 0 {
            self.initial
        } else {
            self.values[idx - 1]
        }
    }

    /// Exact Lebesgue integral over `[a, b]`.
    pub fn time_integral(&self, a: f64, b: f64) -> Result<f64> {
        if a > b {
            return Err(domain("interval", format!("a = {a} > b = {b}")));
        }
        check_time(a, self.horizon)?;
        check_time(b, self.horizon)?;
        let mut total = 0.0;
        let mut idx = self.index_at(a);
        let mut left = a;
        loop {
            let right = self.epochs.get(idx).copied().unwrap_or(f64::INFINITY).min(b);
            if right > left {
                total += self.value_by_index(idx) * (right - left);
            }
            if right >= b {
                break;
            }
            left = right;
            idx += 1;
        }
        Ok(total)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> StepPath {
        StepPath {
            initial: f(self.initial),
            epochs: self.epochs.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            horizon: self.horizon,
        }
    }

    pub fn scale(&self, c: f64) -> StepPath {
        self.map(|v| c * v)
    }

    /// Pointwise `f(self, other)` on the union of the two epoch sets.
    pub fn combine(&self, other: &StepPath, f: impl Fn(f64, f64) -> f64) -> Result<StepPath> {
        same_horizon(self.horizon, other.horizon)?;
        let mut b = StepPath::builder(f(self.initial, other.initial), self.horizon);
        let (mut i, mut j) = (0, 0);
        let (mut va, mut vb) = (self.initial, other.initial);
        while i < self.epochs.len() || j < other.epochs.len() {
            let ta = self.epochs.get(i).copied().unwrap_or(f64::INFINITY);
            let tb = other.epochs.get(j).copied().unwrap_or(f64::INFINITY);
            let t = ta.min(tb);
            if ta == t {
                va = self.values[i];
                i += 1;
            }
            if tb == t {
                vb = other.values[j];
                j += 1;
            }
            b.push(t, f(va, vb))?;
        }
        Ok(b.finish())
    }

    pub fn add(&self, other: &StepPath) -> Result<StepPath> {
        self.combine(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &StepPath) -> Result<StepPath> {
        self.combine(other, |a, b| a - b)
    }

    /// Values at sorted query times, in one sweep.
    pub fn sample(&self, times: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(times.len());
        let mut idx = 0;
        for &t in times {
            while idx < self.epochs.len() && self.epochs[idx] <= t {
                idx += 1;
            }
            out.push(self.value_by_index(idx));
        }
        out
    }

    pub fn sup_abs(&self) -> f64 {
        self.values
            .iter()
            .fold(self.initial.abs(), |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(self.initial, |m, &v| m.min(v))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(self.initial, |m, &v| m.max(v))
    }

    pub fn is_nondecreasing(&self) -> bool {
        let mut prev = self.initial;
        self.values.iter().all(|&v| {
            let ok = v >= prev;
            prev = v;
            ok
        })
    }

    /// Restriction to a shorter horizon.
    pub fn truncate(&self, horizon: f64) -> Result<StepPath> {
        check_time(horizon, self.horizon)?;
        let k = self.index_at(horizon);
        Ok(StepPath {
            initial: self.initial,
            epochs: self.epochs[..k].to_vec(),
            values: self.values[..k].to_vec(),
            horizon,
        })
    }
}

impl Cadlag for StepPath {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn initial(&self) -> f64 {
        self.initial
    }

    fn value(&self, t: f64) -> f64 {
        self.value_by_index(self.index_at(t))
    }

    fn left_value(&self, t: f64) -> f64 {
        self.value_by_index(self.epochs.partition_point(|&e| e < t))
    }

    fn jumps(&self) -> Vec<(f64, f64)> {
        let mut prev = self.initial;
        self.epochs
            .iter()
            .zip(&self.values)
            .map(|(&t, &v)| {
                let j = v - prev;
                prev = v;
                (t, j)
            })
            .collect()
    }
}

/// Incremental construction of a [`StepPath`] from time-ordered updates.
#[derive(Debug, Clone)]
pub struct StepPathBuilder {
    path: StepPath,
}

impl StepPathBuilder {
    /// Sets the value from `t` on. A repeated `t` overwrites the previous
    /// value at that epoch; an earlier `t` is rejected.
    pub fn push(&mut self, t: f64, value: f64) -> Result<()> {
        let p = &mut self.path;
        if !(t > 0.0 && t <= p.horizon) {
            return Err(domain("epoch", format!("{t} not in (0, {}]", p.horizon)));
        }
        match p.epochs.last() {
            Some(&last) if t == last => {
                *p.values.last_mut().expect("values track epochs") = value;
            }
            Some(&last) if t < last => {
                return Err(Error::Contract(format!("epoch {t} precedes {last}")));
            }
            _ => {
                p.epochs.push(t);
                p.values.push(value);
            }
        }
        Ok(())
    }

    pub fn current(&self) -> f64 {
        self.path.values.last().copied().unwrap_or(self.path.initial)
    }

    pub fn finish(self) -> StepPath {
        self.path
    }
}

/// Càdlàg path that is affine between knots and may jump at knots.
///
/// Jumps are stored explicitly so that jump sums of compensated counting
/// paths reproduce the integer jump sizes without cancellation error.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPath {
    knots: Vec<f64>,
    values: Vec<f64>,
    jumps: Vec<f64>,
    slopes: Vec<f64>,
    horizon: f64,
}

impl LinearPath {
    pub fn affine(intercept: f64, slope: f64, horizon: f64) -> Self {
        LinearPath {
            knots: alloc::vec![0.0],
            values: alloc::vec![intercept],
            jumps: alloc::vec![0.0],
            slopes: alloc::vec![slope],
            horizon,
        }
    }

    pub fn zero(horizon: f64) -> Self {
        Self::affine(0.0, 0.0, horizon)
    }

    pub fn from_step(p: &StepPath) -> Self {
        let mut knots = Vec::with_capacity(p.epochs.len() + 1);
        let mut values = Vec::with_capacity(p.epochs.len() + 1);
        let mut jumps = Vec::with_capacity(p.epochs.len() + 1);
        knots.push(0.0);
        values.push(p.initial);
        jumps.push(0.0);
        for (t, j) in p.jumps() {
            knots.push(t);
            jumps.push(j);
        }
        values.extend_from_slice(&p.values);
        let slopes = alloc::vec![0.0; knots.len()];
        LinearPath {
            knots,
            values,
            jumps,
            slopes,
            horizon: p.horizon,
        }
    }

    /// Continuous path `t ↦ ∫₀ᵗ g(p(s)) ds`.
    pub fn integral_of(p: &StepPath, g: impl Fn(f64) -> f64) -> Self {
        let n = p.epochs.len() + 1;
        let mut knots = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        let mut slopes = Vec::with_capacity(n);
        let mut acc = 0.0;
        let mut last_t = 0.0;
        let mut last_slope = g(p.initial);
        knots.push(0.0);
        values.push(0.0);
        slopes.push(last_slope);
        for (&t, &v) in p.epochs.iter().zip(&p.values) {
            acc += last_slope * (t - last_t);
            last_t = t;
            last_slope = g(v);
            knots.push(t);
            values.push(acc);
            slopes.push(last_slope);
        }
        LinearPath {
            jumps: alloc::vec![0.0; knots.len()],
            knots,
            values,
            slopes,
            horizon: p.horizon,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Right values at the knots.
    pub fn knot_values(&self) -> &[f64] {
        &self.values
    }

    fn segment(&self, t: f64) -> usize {
        self.knots.partition_point(|&k| k <= t).saturating_sub(1)
    }

    fn at_segment(&self, i: usize, t: f64) -> f64 {
        self.values[i] + self.slopes[i] * (t - self.knots[i])
    }

    /// `alpha * a + beta * b` on the union of knots.
    pub fn lin_comb(alpha: f64, a: &LinearPath, beta: f64, b: &LinearPath) -> Result<LinearPath> {
        same_horizon(a.horizon, b.horizon)?;
        let cap = a.knots.len() + b.knots.len();
        let mut out = LinearPath {
            knots: Vec::with_capacity(cap),
            values: Vec::with_capacity(cap),
            jumps: Vec::with_capacity(cap),
            slopes: Vec::with_capacity(cap),
            horizon: a.horizon,
        };
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let ta = a.knots.get(i).copied().unwrap_or(f64::INFINITY);
            let tb = b.knots.get(j).copied().unwrap_or(f64::INFINITY);
            let t = ta.min(tb);
            if !t.is_finite() {
                break;
            }
            let (ja, ia) = if ta == t {
                i += 1;
                (a.jumps[i - 1], i - 1)
            } else {
                (0.0, i - 1)
            };
            let (jb, ib) = if tb == t {
                j += 1;
                (b.jumps[j - 1], j - 1)
            } else {
                (0.0, j - 1)
            };
            out.knots.push(t);
            out.values
                .push(alpha * a.at_segment(ia, t) + beta * b.at_segment(ib, t));
            out.jumps.push(alpha * ja + beta * jb);
            out.slopes.push(alpha * a.slopes[ia] + beta * b.slopes[ib]);
        }
        Ok(out)
    }

    pub fn add(&self, other: &LinearPath) -> Result<LinearPath> {
        Self::lin_comb(1.0, self, 1.0, other)
    }

    pub fn sub(&self, other: &LinearPath) -> Result<LinearPath> {
        Self::lin_comb(1.0, self, -1.0, other)
    }

    pub fn scale(&self, c: f64) -> LinearPath {
        LinearPath {
            knots: self.knots.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
            jumps: self.jumps.iter().map(|v| c * v).collect(),
            slopes: self.slopes.iter().map(|v| c * v).collect(),
            horizon: self.horizon,
        }
    }

    /// Exact integral over `[a, b]` (trapezoid per affine piece).
    pub fn time_integral(&self, a: f64, b: f64) -> Result<f64> {
        if a > b {
            return Err(domain("interval", format!("a = {a} > b = {b}")));
        }
        check_time(a, self.horizon)?;
        check_time(b, self.horizon)?;
        let mut total = 0.0;
        let mut i = self.segment(a);
        let mut left = a;
        loop {
            let right = self.knots.get(i + 1).copied().unwrap_or(f64::INFINITY).min(b);
            if right > left {
                total += 0.5 * (self.at_segment(i, left) + self.at_segment(i, right)) * (right - left);
            }
            if right >= b {
                break;
            }
            left = right;
            i += 1;
        }
        Ok(total)
    }

    /// `sup_{t ≤ T} |x(t)|`, attained at a knot, a left limit or the horizon.
    pub fn sup_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.knots.len() {
            m = m.max(self.values[i].abs());
            m = m.max((self.values[i] - self.jumps[i]).abs());
            let end = self.knots.get(i + 1).copied().unwrap_or(self.horizon);
            m = m.max(self.at_segment(i, end).abs());
        }
        m
    }

    pub fn is_continuous(&self) -> bool {
        self.jumps.iter().all(|&j| j == 0.0)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.jumps.iter().all(|&j| j >= 0.0) && self.slopes.iter().all(|&s| s >= 0.0)
    }

    pub fn sample(&self, times: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(times.len());
        let mut i = 0;
        for &t in times {
            while i + 1 < self.knots.len() && self.knots[i + 1] <= t {
                i += 1;
            }
            out.push(self.at_segment(i, t));
        }
        out
    }

    pub(crate) fn segment_parts(&self, i: usize) -> (f64, f64, f64, f64) {
        (self.knots[i], self.values[i], self.jumps[i], self.slopes[i])
    }

    pub(crate) fn from_parts(
        knots: Vec<f64>,
        values: Vec<f64>,
        jumps: Vec<f64>,
        slopes: Vec<f64>,
        horizon: f64,
    ) -> LinearPath {
        debug_assert!(knots.first() == Some(&0.0));
        LinearPath {
            knots,
            values,
            jumps,
            slopes,
            horizon,
        }
    }
}

impl Cadlag for LinearPath {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn initial(&self) -> f64 {
        self.values[0]
    }

    fn value(&self, t: f64) -> f64 {
        self.at_segment(self.segment(t), t)
    }

    fn left_value(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.values[0];
        }
        let i = self.knots.partition_point(|&k| k < t) - 1;
        self.at_segment(i, t)
    }

    fn jumps(&self) -> Vec<(f64, f64)> {
        self.knots[1..]
            .iter()
            .copied()
            .zip(self.jumps[1..].iter().copied())
            .collect()
    }
}

/// A path sampled on a strictly increasing grid starting at 0, read as a
/// step function between grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl GridPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times[0] != 0.0 {
            return Err(Error::Contract("grid must start at 0".into()));
        }
        if times.len() != values.len() {
            return Err(Error::Contract(format!(
                "{} grid times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Contract("grid times must strictly increase".into()));
        }
        Ok(GridPath { times, values })
    }

    pub(crate) fn from_raw(times: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert_eq!(times.len(), values.len());
        GridPath { times, values }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sup_distance(&self, other: &GridPath) -> Result<f64> {
        if self.times != other.times {
            return Err(Error::Contract("grids differ".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn to_step(&self) -> StepPath {
        StepPath {
            initial: self.values[0],
            epochs: self.times[1..].to_vec(),
            values: self.values[1..].to_vec(),
            horizon: self.horizon(),
        }
    }

    fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&g| g <= t).saturating_sub(1)
    }
}

impl Cadlag for GridPath {
    fn horizon(&self) -> f64 {
        *self.times.last().expect("grid is nonempty")
    }

    fn initial(&self) -> f64 {
        self.values[0]
    }

    fn value(&self, t: f64) -> f64 {
        self.values[self.index_at(t)]
    }

    fn left_value(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.values[0];
        }
        self.values[self.times.partition_point(|&g| g < t) - 1]
    }

    fn jumps(&self) -> Vec<(f64, f64)> {
        self.times[1..]
            .iter()
            .zip(self.values.windows(2))
            .map(|(&t, w)| (t, w[1] - w[0]))
            .collect()
    }
}

fn same_horizon(a: f64, b: f64) -> Result<()> {
    if a != b {
        return Err(Error::Contract(format!("horizons differ: {a} vs {b}")));
    }
    Ok(())
}

/// `t ↦ Σ_{jumps s ≤ t of g} f(s−) Δg(s)`: the integral of the left-limit of
/// `f` against a counting-type integrator `g`.
pub fn stieltjes_integral<F: Cadlag + ?Sized>(f_left: &F, g: &StepPath) -> Result<StepPath> {
    let mut b = StepPath::builder(0.0, g.horizon);
    let mut acc = 0.0;
    for (t, dg) in g.jumps() {
        if dg < 0.0 {
            return Err(Error::Contract(format!(
                "integrator decreases by {} at {t}",
                -dg
            )));
        }
        acc += f_left.left_value(t) * dg;
        b.push(t, acc)?;
    }
    Ok(b.finish())
}

/// Largest absolute jump over `(0, T]`; zero for jump-free paths.
pub fn max_jump<P: Cadlag + ?Sized>(p: &P, horizon: f64) -> f64 {
    p.jumps()
        .into_iter()
        .filter(|&(t, _)| t <= horizon)
        .fold(0.0, |m, (_, j)| m.max(j.abs()))
}

/// Optional quadratic covariation `[p, q](t) = Σ_{s ≤ t} Δp(s) Δq(s)`.
pub fn optional_qv<P: Cadlag + ?Sized, Q: Cadlag + ?Sized>(p: &P, q: &Q) -> StepPath {
    let jp = p.jumps();
    let jq = q.jumps();
    let mut b = StepPath::builder(0.0, p.horizon());
    let (mut i, mut k) = (0, 0);
    let mut acc = 0.0;
    while i < jp.len() && k < jq.len() {
        let (tp, dp) = jp[i];
        let (tq, dq) = jq[k];
        if tp < tq {
            i += 1;
        } else if tq < tp {
            k += 1;
        } else {
            let prod = dp * dq;
            acc += prod;
            if prod != 0.0 && tp <= p.horizon() {
                b.push(tp, acc).expect("common epochs are increasing");
            }
            i += 1;
            k += 1;
        }
    }
    b.finish()
}

/// Content and regulator produced by the one-sided upper reflection map.
#[derive(Debug, Clone, PartialEq)]
pub struct Regulated<P = StepPath> {
    pub content: P,
    pub regulator: P,
}

impl<P: Cadlag> Regulated<P> {
    /// Total regulator mass added while the content sits strictly below the
    /// barrier. Zero for an exact solution.
    pub fn complementarity_residual(&self, kappa: f64) -> f64 {
        let mut residual = 0.0;
        let u0 = self.regulator.initial();
        if u0 > 0.0 && self.content.initial() < kappa - BOUNDARY_TOL {
            residual += u0;
        }
        for (t, du) in self.regulator.jumps() {
            if du > 0.0 && self.content.value(t) < kappa - BOUNDARY_TOL {
                residual += du;
            }
        }
        residual
    }

    /// `sup_t x(t) - κ`; nonpositive when the content respects the barrier.
    pub fn barrier_excess(&self, kappa: f64) -> f64 {
        let mut m = self.content.initial() - kappa;
        for (t, _) in self.content.jumps() {
            m = m.max(self.content.value(t) - kappa);
        }
        m
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa.is_nan() || kappa < 0.0 {
        return Err(domain("barrier", format!("kappa = {kappa}")));
    }
    Ok(())
}

/// Running-sup reflection of a sequence at an upper barrier.
fn reflect_values(values: &[f64], kappa: f64) -> (Vec<f64>, Vec<f64>) {
    let mut content = Vec::with_capacity(values.len());
    let mut regulator = Vec::with_capacity(values.len());
    let mut u = 0.0f64;
    for &y in values {
        u = u.max(y - kappa);
        content.push(y - u);
        regulator.push(u);
    }
    (content, regulator)
}

/// One-sided reflection with upper barrier `kappa`: the regulator is
/// `u(t) = sup_{s ≤ t} (y(s) − κ)⁺` and the content is `y − u`.
pub fn reflect_upper(y: &StepPath, kappa: f64) -> Result<Regulated<StepPath>> {
    check_kappa(kappa)?;
    let mut all = Vec::with_capacity(y.values.len() + 1);
    all.push(y.initial);
    all.extend_from_slice(&y.values);
    let (x, u) = reflect_values(&all, kappa);
    Ok(Regulated {
        content: StepPath {
            initial: x[0],
            epochs: y.epochs.clone(),
            values: x[1..].to_vec(),
            horizon: y.horizon,
        },
        regulator: StepPath {
            initial: u[0],
            epochs: y.epochs.clone(),
            values: u[1..].to_vec(),
            horizon: y.horizon,
        },
    })
}

/// Grid version of [`reflect_upper`]; the sup runs over grid points.
pub fn reflect_upper_grid(y: &GridPath, kappa: f64) -> Result<Regulated<GridPath>> {
    check_kappa(kappa)?;
    let (x, u) = reflect_values(&y.values, kappa);
    Ok(Regulated {
        content: GridPath::from_raw(y.times.clone(), x),
        regulator: GridPath::from_raw(y.times.clone(), u),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn unit_step() -> StepPath {
        StepPath::new(0.0, vec![0.5], vec![1.0], 1.0).unwrap()
    }

    #[test]
    fn eval_is_right_continuous() {
        let p = StepPath::new(2.0, vec![1.0], vec![3.0], 2.0).unwrap();
        assert_eq!(p.eval(1.0).unwrap(), 3.0);
        assert_eq!(p.left_limit(1.0).unwrap(), 2.0);
        assert_eq!(p.left_limit(0.0).unwrap(), 2.0);
        assert_eq!(unit_step().eval(0.49).unwrap(), 0.0);
        assert_eq!(StepPath::constant(5.0, 3.0).eval(2.2).unwrap(), 5.0);
        assert_eq!(StepPath::constant(5.0, 3.0).left_limit(2.2).unwrap(), 5.0);
    }

    #[test]
    fn eval_rejects_times_outside_horizon() {
        let p = unit_step();
        assert!(matches!(p.eval(1.5), Err(Error::Domain { .. })));
        assert!(matches!(p.eval(-0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn constructor_rejects_unsorted_epochs() {
        assert!(StepPath::new(0.0, vec![0.5, 0.5], vec![1.0, 2.0], 1.0).is_err());
        assert!(StepPath::new(0.0, vec![0.0], vec![1.0], 1.0).is_err());
        assert!(StepPath::new(0.0, vec![1.5], vec![1.0], 1.0).is_err());
    }

    #[test]
    fn integrals_of_simple_paths() {
        assert_eq!(StepPath::constant(1.0, 2.0).time_integral(0.0, 2.0).unwrap(), 2.0);
        let p = StepPath::new(0.0, vec![1.0], vec![4.0], 2.0).unwrap();
        assert_eq!(p.time_integral(0.0, 2.0).unwrap(), 4.0);
        assert_eq!(p.time_integral(0.5, 1.5).unwrap(), 2.0);
        assert!(p.time_integral(1.5, 0.5).is_err());
    }

    #[test]
    fn stieltjes_identity_and_zero_integrands() {
        let g = StepPath::counting(&[0.2, 0.4, 0.9], 1.0).unwrap();
        let one = stieltjes_integral(&StepPath::constant(1.0, 1.0), &g).unwrap();
        assert_eq!(one.sample(&[0.1, 0.3, 0.5, 1.0]), vec![0.0, 1.0, 2.0, 3.0]);
        let zero = stieltjes_integral(&StepPath::zero(1.0), &g).unwrap();
        assert_eq!(zero.sup_abs(), 0.0);
        let down = StepPath::new(2.0, vec![0.5], vec![1.0], 1.0).unwrap();
        assert!(matches!(
            stieltjes_integral(&one, &down),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn stieltjes_uses_left_limits() {
        // integrand jumps at the same epoch as the integrator; the old value counts
        let f = StepPath::new(1.0, vec![0.5], vec![10.0], 1.0).unwrap();
        let g = StepPath::counting(&[0.5], 1.0).unwrap();
        assert_eq!(stieltjes_integral(&f, &g).unwrap().terminal(), 1.0);
    }

    #[test]
    fn max_jump_examples() {
        assert_eq!(max_jump(&StepPath::constant(3.0, 1.0), 1.0), 0.0);
        let p = StepPath::new(0.0, vec![0.2, 0.6], vec![2.0, -3.0], 1.0).unwrap();
        assert_eq!(max_jump(&p, 1.0), 5.0);
        assert_eq!(max_jump(&p, 0.5), 2.0);
        let n = 400.0f64;
        let scaled = StepPath::counting(&[0.1, 0.3], 1.0).unwrap().scale(1.0 / n.sqrt());
        assert_eq!(max_jump(&scaled, 1.0), 1.0 / n.sqrt());
    }

    #[test]
    fn optional_qv_of_single_common_jump() {
        let p = StepPath::new(0.0, vec![1.0], vec![2.0], 2.0).unwrap();
        let q = StepPath::new(1.0, vec![1.0], vec![4.0], 2.0).unwrap();
        let c = optional_qv(&p, &q);
        assert_eq!(c.eval(0.99).unwrap(), 0.0);
        assert_eq!(c.eval(1.0).unwrap(), 6.0);
        let r = StepPath::new(0.0, vec![1.5], vec![1.0], 2.0).unwrap();
        assert_eq!(optional_qv(&p, &r).sup_abs(), 0.0);
    }

    #[test]
    fn compensated_counting_oqv_equals_counting_exactly() {
        let n = StepPath::counting(&[0.1, 0.25, 0.7, 0.71], 1.0).unwrap();
        let a = LinearPath::affine(0.0, 3.7, 1.0);
        let m = LinearPath::from_step(&n).sub(&a).unwrap();
        let qv = optional_qv(&m, &m);
        assert_eq!(qv, n);
    }

    #[test]
    fn reflection_of_identity() {
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.1).collect();
        let y = GridPath::new(times.clone(), times.clone()).unwrap();
        let r = reflect_upper_grid(&y, 1.0).unwrap();
        for (k, &t) in times.iter().enumerate() {
            assert!((r.content.values()[k] - t.min(1.0)).abs() < 1e-15);
            assert!((r.regulator.values()[k] - (t - 1.0).max(0.0)).abs() < 1e-15);
        }
        assert_eq!(r.complementarity_residual(1.0), 0.0);
        assert!(reflect_upper_grid(&y, -1.0).is_err());
    }

    #[test]
    fn reflection_inactive_below_barrier() {
        let y = StepPath::new(0.0, vec![0.3, 0.6], vec![0.5, -1.0], 1.0).unwrap();
        let r = reflect_upper(&y, 1.0).unwrap();
        assert_eq!(r.content, y);
        assert_eq!(r.regulator.sup_abs(), 0.0);
    }

    #[test]
    fn reflection_clamps_initial_excess() {
        let y = StepPath::new(3.0, vec![0.5], vec![1.0], 1.0).unwrap();
        let r = reflect_upper(&y, 2.0).unwrap();
        assert_eq!(r.regulator.initial(), 1.0);
        assert_eq!(r.content.initial(), 2.0);
        assert_eq!(r.content.terminal(), 0.0);
        assert_eq!(r.complementarity_residual(2.0), 0.0);
    }

    #[test]
    fn linear_path_eval_integral_and_sup() {
        let q = StepPath::new(2.0, vec![1.0], vec![-4.0], 2.0).unwrap();
        let i = LinearPath::integral_of(&q, |v| v);
        assert_eq!(i.eval(1.0).unwrap(), 2.0);
        assert_eq!(i.eval(1.5).unwrap(), 0.0);
        assert_eq!(i.terminal(), -2.0);
        assert_eq!(i.sup_abs(), 2.0);
        assert!(i.is_continuous());
        // ∫₀² of the integral: ∫₀¹ 2t dt + ∫₁² (2 - 4(t-1)) dt = 1 + 0
        assert!((i.time_integral(0.0, 2.0).unwrap() - 0.0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn combine_takes_union_of_epochs() {
        let a = StepPath::new(1.0, vec![0.5], vec![2.0], 1.0).unwrap();
        let b = StepPath::new(0.0, vec![0.25, 0.5], vec![1.0, 5.0], 1.0).unwrap();
        let s = a.add(&b).unwrap();
        assert_eq!(s.epochs(), &[0.25, 0.5]);
        assert_eq!(s.values(), &[2.0, 7.0]);
    }
}
