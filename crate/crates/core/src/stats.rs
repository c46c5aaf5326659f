//! Estimators used by the verification suite: exact-merge moment
//! accumulators, quantile sketches and Kolmogorov–Smirnov statistics.

use alloc::vec::Vec;
use core::mem;

use crate::error::{domain, Result};

/// Quantile levels reported by [`PointSummary`].
pub const QUANTILE_PROBS: [f64; 7] = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99];

/// Samples retained per time point before switching to streaming quantiles.
pub const RESERVOIR_CAP: usize = 100_000;

/// Standard normal cdf.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Normal cdf with the given mean and variance; a zero variance is a point
/// mass.
pub fn normal_cdf_with(x: f64, mean: f64, variance: f64) -> f64 {
    if variance <= 0.0 {
        return if x >= mean { 1.0 } else { 0.0 };
    }
    normal_cdf((x - mean) / libm::sqrt(variance))
}

/// Exactly rounded running sum (Shewchuk partials). The state represents the
/// real sum exactly, so merging is associative and commutative.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    /// The sum rounded to nearest.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let Some(&last) = p.last() else {
            return 0.0;
        };
        let mut hi = last;
        let mut lo = 0.0;
        let mut k = p.len() - 1;
        while k > 0 {
            k -= 1;
            let x = hi;
            let y = p[k];
            hi = x + y;
            lo = y - (hi - x);
            if lo != 0.0 {
                break;
            }
        }
        // round half to even across the remaining partials
        if k > 0 && ((lo < 0.0 && p[k - 1] < 0.0) || (lo > 0.0 && p[k - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

/// Count, mean and variance with an exact merge.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Moments {
    count: u64,
    sum: ExactSum,
    sum_sq: ExactSum,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum.add(x);
        let sq = x * x;
        // x² = sq + err exactly
        self.sum_sq.add(sq);
        self.sum_sq.add(libm::fma(x, x, -sq));
    }

    pub fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        self.sum.value() / self.count as f64
    }

    /// Unbiased sample variance; `None` below two samples.
    pub fn variance(&self) -> Option<f64> {
        if self.count < 2 {
            return None;
        }
        let n = self.count as f64;
        let mut centered = self.sum_sq.clone();
        let s = self.sum.value();
        let shift = s * s / n;
        centered.add(-shift);
        Some((centered.value() / (n - 1.0)).max(0.0))
    }

    pub fn std_error(&self) -> Option<f64> {
        self.variance()
            .map(|v| libm::sqrt(v / self.count as f64))
    }
}

/// Mean and standard error of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let mut m = Moments::new();
    xs.iter().for_each(|&x| m.push(x));
    (m.mean(), m.std_error().unwrap_or(f64::NAN))
}

/// Sample covariance and the standard error of that estimate.
pub fn covariance_se(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let r = xs.len().min(ys.len());
    if r < 2 {
        return (f64::NAN, f64::NAN);
    }
    let (mx, _) = mean_se(&xs[..r]);
    let (my, _) = mean_se(&ys[..r]);
    let products: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let mut m = Moments::new();
    products.iter().for_each(|&z| m.push(z));
    let rf = r as f64;
    let cov = m.mean() * rf / (rf - 1.0);
    (cov, m.std_error().unwrap_or(f64::NAN))
}

/// Standard error of an empirical frequency.
pub fn binomial_se(p: f64, r: usize) -> f64 {
    libm::sqrt((p * (1.0 - p)).max(0.0) / r as f64)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// P² streaming estimator of one quantile.
///
/// Bias is bounded by the spacing of the five markers and vanishes for
/// smooth densities as the count grows; it applies only past
/// [`RESERVOIR_CAP`] samples.
#[derive(Debug, Clone, PartialEq)]
struct P2 {
    p: f64,
    heights: [f64; 5],
    pos: [f64; 5],
    desired: [f64; 5],
    incr: [f64; 5],
}

impl P2 {
    /// Starts from a sorted sample of at least five points.
    fn from_sorted(p: f64, sorted: &[f64]) -> Self {
        let n = sorted.len() as f64;
        let desired_at = |frac: f64| 1.0 + (n - 1.0) * frac;
        let fracs = [0.0, p / 2.0, p, (1.0 + p) / 2.0, 1.0];
        let mut heights = [0.0; 5];
        let mut pos = [0.0; 5];
        for (k, &f) in fracs.iter().enumerate() {
            let d = libm::round(desired_at(f)).clamp(1.0, n);
            pos[k] = d;
            heights[k] = sorted[d as usize - 1];
        }
        // marker positions must be strictly increasing
        for k in 1..5 {
            if pos[k] <= pos[k - 1] {
                pos[k] = pos[k - 1] + 1.0;
            }
        }
        P2 {
            p,
            heights,
            pos,
            desired: fracs.map(desired_at),
            incr: fracs,
        }
    }

    fn push(&mut self, x: f64) {
        let q = &mut self.heights;
        let k = if x < q[0] {
            q[0] = x;
            0
        } else if x >= q[4] {
            q[4] = x;
            3
        } else {
            (0..4).find(|&i| x < q[i + 1]).unwrap_or(3)
        };
        for i in (k + 1)..5 {
            self.pos[i] += 1.0;
        }
        for i in 0..5 {
            self.desired[i] += self.incr[i];
        }
        for i in 1..4 {
            let d = self.desired[i] - self.pos[i];
            if (d >= 1.0 && self.pos[i + 1] - self.pos[i] > 1.0)
                || (d <= -1.0 && self.pos[i - 1] - self.pos[i] < -1.0)
            {
                let s = if d > 0.0 { 1.0 } else { -1.0 };
                let (n0, n1, n2) = (self.pos[i - 1], self.pos[i], self.pos[i + 1]);
                let (q0, q1, q2) = (q[i - 1], q[i], q[i + 1]);
                let parabolic = q1
                    + s / (n2 - n0)
                        * ((n1 - n0 + s) * (q2 - q1) / (n2 - n1)
                            + (n2 - n1 - s) * (q1 - q0) / (n1 - n0));
                q[i] = if q0 < parabolic && parabolic < q2 {
                    parabolic
                } else {
                    let j = if s > 0.0 { i + 1 } else { i - 1 };
                    q1 + s * (q[j] - q1) / (self.pos[j] - n1)
                };
                self.pos[i] += s;
            }
        }
    }

    fn estimate(&self) -> f64 {
        self.heights[2]
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Sketch {
    Reservoir(Vec<f64>),
    Streaming(Vec<P2>),
}

/// Moments plus quantiles of one scalar observed across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator {
    moments: Moments,
    sketch: Sketch,
}

impl Default for Accumulator {
    fn default() -> Self {
        Accumulator {
            moments: Moments::new(),
            sketch: Sketch::Reservoir(Vec::new()),
        }
    }
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.moments.push(x);
        match &mut self.sketch {
            Sketch::Reservoir(v) => {
                v.push(x);
                if v.len() > RESERVOIR_CAP {
                    self.go_streaming();
                }
            }
            Sketch::Streaming(ps) => ps.iter_mut().for_each(|p| p.push(x)),
        }
    }

    fn go_streaming(&mut self) {
        if let Sketch::Reservoir(v) = &mut self.sketch {
            let mut sorted = mem::take(v);
            sorted.sort_by(f64::total_cmp);
            self.sketch = Sketch::Streaming(
                QUANTILE_PROBS
                    .iter()
                    .map(|&p| P2::from_sorted(p, &sorted))
                    .collect(),
            );
        }
    }

    /// Combines with another accumulator. Moments merge exactly; quantiles
    /// are exact while the combined reservoir fits under the cap.
    pub fn merge(&mut self, other: &Accumulator) {
        self.moments.merge(&other.moments);
        match (&mut self.sketch, &other.sketch) {
            (Sketch::Reservoir(a), Sketch::Reservoir(b)) => {
                a.extend_from_slice(b);
                if a.len() > RESERVOIR_CAP {
                    self.go_streaming();
                }
            }
            (Sketch::Streaming(ps), Sketch::Reservoir(b)) => {
                for &x in b {
                    ps.iter_mut().for_each(|p| p.push(x));
                }
            }
            (_, Sketch::Streaming(theirs)) => {
                // pool the other side's marker heights as pseudo-samples
                let mut pooled: Vec<f64> = match &self.sketch {
                    Sketch::Reservoir(a) => a.clone(),
                    Sketch::Streaming(ps) => ps.iter().flat_map(|p| p.heights).collect(),
                };
                pooled.extend(theirs.iter().flat_map(|p| p.heights));
                pooled.sort_by(f64::total_cmp);
                self.sketch = Sketch::Streaming(
                    QUANTILE_PROBS
                        .iter()
                        .map(|&p| P2::from_sorted(p, &pooled))
                        .collect(),
                );
            }
        }
    }

    pub fn moments(&self) -> &Moments {
        &self.moments
    }

    pub fn summary(&self) -> PointSummary {
        let quantiles = match &self.sketch {
            Sketch::Reservoir(v) => {
                let mut s = v.clone();
                s.sort_by(f64::total_cmp);
                QUANTILE_PROBS.map(|p| quantile_sorted(&s, p))
            }
            Sketch::Streaming(ps) => {
                let mut q = [0.0; 7];
                for (slot, p) in q.iter_mut().zip(ps) {
                    *slot = p.estimate();
                }
                // P² markers of different levels are independent; enforce order
                for i in 1..7 {
                    q[i] = q[i].max(q[i - 1]);
                }
                q
            }
        };
        PointSummary {
            count: self.moments.count(),
            mean: self.moments.mean(),
            variance: self.moments.variance(),
            std_error: self.moments.std_error(),
            quantiles,
        }
    }

    /// Retained samples, if still under the reservoir cap.
    pub fn samples(&self) -> Option<&[f64]> {
        match &self.sketch {
            Sketch::Reservoir(v) => Some(v),
            Sketch::Streaming(_) => None,
        }
    }
}

/// Statistics of one scalar at one grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub count: u64,
    pub mean: f64,
    /// `None` with a single replication.
    pub variance: Option<f64>,
    pub std_error: Option<f64>,
    /// At the levels in [`QUANTILE_PROBS`].
    pub quantiles: [f64; 7],
}

/// Per-grid-time statistics over an ensemble of paths.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    t_grid: Vec<f64>,
    points: Vec<Accumulator>,
}

impl EnsembleStats {
    pub fn new(t_grid: Vec<f64>) -> Self {
        let points = t_grid.iter().map(|_| Accumulator::new()).collect();
        EnsembleStats { t_grid, points }
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    /// Adds one replication's values on the grid.
    pub fn push(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.t_grid.len() {
            return Err(domain(
                "ensemble row",
                alloc::format!("{} values for {} grid points", values.len(), self.t_grid.len()),
            ));
        }
        for (acc, &v) in self.points.iter_mut().zip(values) {
            acc.push(v);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &EnsembleStats) -> Result<()> {
        if self.t_grid != other.t_grid {
            return Err(domain("ensemble merge", "time grids differ"));
        }
        for (a, b) in self.points.iter_mut().zip(&other.points) {
            a.merge(b);
        }
        Ok(())
    }

    pub fn replications(&self) -> u64 {
        self.points.first().map_or(0, |p| p.moments().count())
    }

    pub fn point(&self, i: usize) -> &Accumulator {
        &self.points[i]
    }

    pub fn summaries(&self) -> Vec<PointSummary> {
        self.points.iter().map(Accumulator::summary).collect()
    }
}

/// One-sample Kolmogorov–Smirnov distance `sup |F_R − F|`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(domain("KS sample", "at least two samples are required"));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let r = s.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < s.len() {
        // ties: the empirical cdf jumps once over the whole block
        let mut j = i;
        while j + 1 < s.len() && s[j + 1] == s[i] {
            j += 1;
        }
        let f = cdf(s[i]);
        d = d.max((f - i as f64 / r).abs()).max(((j + 1) as f64 / r - f).abs());
        i = j + 1;
    }
    Ok(d.min(1.0))
}

/// Two-sample Kolmogorov–Smirnov distance between empirical cdfs.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(domain("KS sample", "each sample needs at least two points"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic Kolmogorov critical constant `c(α)` with
/// `P(√R·D > c(α)) ≈ α`.
pub fn kolmogorov_c(alpha: f64) -> f64 {
    libm::sqrt(-0.5 * libm::log(alpha / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!((normal_cdf(-1.0) - 0.15865525393145707).abs() < 1e-14);
    }

    #[test]
    fn exact_sum_survives_cancellation() {
        let mut s = ExactSum::default();
        for x in [1e100, 1.0, -1e100, 1e-30] {
            s.add(x);
        }
        assert_eq!(s.value(), 1.0 + 1e-30);
        let mut t = ExactSum::default();
        for _ in 0..10 {
            t.add(0.1);
        }
        assert_eq!(t.value(), 1.0);
    }

    #[test]
    fn constant_samples() {
        let mut m = Moments::new();
        (0..50).for_each(|_| m.push(7.0));
        assert_eq!(m.mean(), 7.0);
        assert_eq!(m.variance(), Some(0.0));
        let mut single = Moments::new();
        single.push(3.0);
        assert_eq!(single.variance(), None);
    }

    #[test]
    fn quantiles_of_known_sample() {
        let mut acc = Accumulator::new();
        (0..=100).for_each(|k| acc.push(k as f64));
        let s = acc.summary();
        assert_eq!(s.quantiles[3], 50.0);
        assert_eq!(s.quantiles[0], 1.0);
        assert!((s.variance.unwrap() - 858.5).abs() < 1e-9);
    }

    #[test]
    fn streaming_quantiles_track_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut acc = Accumulator::new();
        for _ in 0..(RESERVOIR_CAP + 100_000) {
            acc.push(rng.sample(StandardNormal));
        }
        assert!(acc.samples().is_none());
        let q = acc.summary().quantiles;
        let expect = [-2.3263, -1.6449, -0.6745, 0.0, 0.6745, 1.6449, 2.3263];
        for (a, b) in q.iter().zip(expect) {
            assert!((a - b).abs() < 0.03, "{a} vs {b}");
        }
    }

    #[test]
    fn ks_all_equal_samples() {
        let d = ks_statistic(&[0.3; 20], normal_cdf).unwrap();
        assert!(d >= 0.5);
        assert!(ks_statistic(&[0.1], normal_cdf).is_err());
    }

    #[test]
    fn ks_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..300).map(|_| rng.sample(StandardNormal)).collect();
        let fast = ks_statistic(&xs, normal_cdf).unwrap();
        let mut slow: f64 = 0.0;
        for &x in &xs {
            let below = xs.iter().filter(|&&y| y < x).count() as f64 / 300.0;
            let upto = xs.iter().filter(|&&y| y <= x).count() as f64 / 300.0;
            slow = slow.max((normal_cdf(x) - below).abs()).max((upto - normal_cdf(x)).abs());
        }
        assert!((fast - slow).abs() < 1e-15);
    }

    #[test]
    fn two_sample_ks_brute_force_oracle() {
        let a = vec![0.1, 0.4, 0.4, 0.9, 1.3];
        let b = vec![0.2, 0.4, 1.0, 1.1];
        let fast = ks_two_sample(&a, &b).unwrap();
        let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&y| y <= x).count() as f64 / s.len() as f64;
        let slow = a
            .iter()
            .chain(&b)
            .map(|&x| (ecdf(&a, x) - ecdf(&b, x)).abs())
            .fold(0.0, f64::max);
        assert_eq!(fast, slow);
    }

    #[test]
    fn kolmogorov_constant_at_one_percent() {
        assert!((kolmogorov_c(0.01) - 1.6276).abs() < 1e-3);
    }

    #[test]
    fn covariance_of_linear_relation() {
        let xs: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let (cov, _) = covariance_se(&xs, &ys);
        let (_, _) = mean_se(&xs);
        let mut m = Moments::new();
        xs.iter().for_each(|&x| m.push(x));
        assert!((cov - 2.0 * m.variance().unwrap()).abs() < 1e-9);
    }
}
