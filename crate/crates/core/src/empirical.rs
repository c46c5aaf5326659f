//! Sequential empirical processes and the infinite-server decomposition built
//! on them.
//!
//! For service times `η_i` with law `F`:
//!
//! * `K_n(t, x) = n⁻¹ Σ_{i ≤ ⌊nt⌋} 1(η_i ≤ x)`,
//! * `U_n(t, u) = n^{−1/2} Σ_{i ≤ ⌊nt⌋} (1(F(η_i) ≤ u) − u)`,
//! * `V_n` indexed by an arrival count `m`: `U_n(m/n, F(x))`.

use alloc::format;
use alloc::vec::Vec;

use crate::dist::Law;
use crate::error::{domain, Error, Result};
use crate::models::{Construction, Family, QueueRealization};
use crate::paths::Cadlag;

/// A sample of service times (or uniforms) read off in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqEmpirical {
    n: u64,
    samples: Vec<f64>,
    /// `F(η_i)`, or the samples themselves when they are uniforms.
    levels: Vec<f64>,
    law: Option<Law>,
}

impl SeqEmpirical {
    /// Service times with law `F`.
    pub fn new(n: u64, samples: Vec<f64>, law: Law) -> Result<Self> {
        law.validate("service")?;
        let levels = samples.iter().map(|&x| law.cdf(x)).collect();
        Self::build(n, samples, levels, Some(law))
    }

    /// Uniforms `ζ_i` on `[0, 1]`; `F` is the identity there.
    pub fn uniforms(n: u64, zetas: Vec<f64>) -> Result<Self> {
        if let Some(&z) = zetas.iter().find(|z| !(0.0..=1.0).contains(*z)) {
            return Err(domain("uniform sample", format!("{z} not in [0, 1]")));
        }
        let levels = zetas.clone();
        Self::build(n, zetas, levels, None)
    }

    fn build(n: u64, samples: Vec<f64>, levels: Vec<f64>, law: Option<Law>) -> Result<Self> {
        if n == 0 {
            return Err(domain("scale", "n must be positive"));
        }
        if let Some(&x) = samples.iter().find(|x| x.is_nan()) {
            return Err(domain("sample", format!("{x}")));
        }
        Ok(SeqEmpirical {
            n,
            samples,
            levels,
            law,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn cdf(&self, x: f64) -> f64 {
        match &self.law {
            Some(l) => l.cdf(x),
            None => x.clamp(0.0, 1.0),
        }
    }

    /// `⌊nt⌋`, checked against the sample size.
    fn prefix(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(domain("time", format!("{t}")));
        }
        let m = libm::floor(self.n as f64 * t);
        self.count(m as u64)
    }

    fn count(&self, m: u64) -> Result<usize> {
        if m > self.samples.len() as u64 {
            return Err(domain(
                "sample count",
                format!("{m} samples needed, {} available", self.samples.len()),
            ));
        }
        Ok(m as usize)
    }

    /// `K_n(t, x)`; `x = ∞` is allowed.
    pub fn k_field(&self, t: f64, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(domain("x", format!("{x}")));
        }
        let m = self.prefix(t)?;
        let hits = self.samples[..m].iter().filter(|&&s| s <= x).count();
        Ok(hits as f64 / self.n as f64)
    }

    /// `U_n(t, u)` for `u` in `[0, 1]`.
    pub fn u_field(&self, t: f64, u: f64) -> Result<f64> {
        let m = self.prefix(t)?;
        self.u_count(m, u)
    }

    fn u_count(&self, m: usize, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(domain("u", format!("{u} not in [0, 1]")));
        }
        let hits = self.levels[..m].iter().filter(|&&l| l <= u).count();
        Ok((hits as f64 - m as f64 * u) / libm::sqrt(self.n as f64))
    }

    /// `V_n` after `m` arrivals: `n^{−1/2} Σ_{i ≤ m} (1(η_i ≤ x) − F(x))`,
    /// computed as `U_n` at `(m/n, F(x))`.
    pub fn v_field(&self, m: u64, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(domain("x", format!("{x}")));
        }
        let m = self.count(m)?;
        self.u_count(m, self.cdf(x))
    }

    /// Evaluates a field on the product grid, returning `(t, x, value)` rows
    /// with `x` varying fastest.
    pub fn dump(
        &self,
        t_grid: &[f64],
        x_grid: &[f64],
        field: impl Fn(&Self, f64, f64) -> Result<f64>,
    ) -> Result<Vec<(f64, f64, f64)>> {
        let mut out = Vec::with_capacity(t_grid.len() * x_grid.len());
        for &t in t_grid {
            for &x in x_grid {
                out.push((t, x, field(self, t, x)?));
            }
        }
        Ok(out)
    }
}

/// The fluid centering `q(0)F₀ᶜ(t) + ∫₀ᵗ Fᶜ(t − s) da(s)` for `a(s) = rate·s`.
pub fn fwlln_center(q0: f64, service: &Law, initial_service: &Law, rate: f64, t: f64) -> f64 {
    q0 * initial_service.ccdf(t) + rate * service.integrated_ccdf(t)
}

/// The infinite-server decomposition on a grid, in units of customers:
/// `Q(t) = initial + initial_count + fluid + m1 + m2` up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct FourthDecomposition {
    pub n: u64,
    pub t: Vec<f64>,
    pub queue: Vec<f64>,
    /// `Σ_{i ≤ Q(0)} (1(η̄_i > t) − F₀ᶜ(t))`.
    pub initial: Vec<f64>,
    /// `Q(0)F₀ᶜ(t)`.
    pub initial_count: Vec<f64>,
    /// `n∫₀ᵗ Fᶜ(t − s) dā(s)` with `ā(s) = λs/n`.
    pub fluid: Vec<f64>,
    /// `√n M_{n,1}(t) = Σ_{τ_i ≤ t} Fᶜ(t − τ_i) − λ∫₀ᵗ Fᶜ`.
    pub m1: Vec<f64>,
    /// `−√n M_{n,2}(t) = −Σ_{τ_i ≤ t} (1(τ_i + η_i ≤ t) − F(t − τ_i))`.
    pub m2: Vec<f64>,
}

impl FourthDecomposition {
    /// `sup_t |Q(t) − Σ components|`.
    pub fn residual(&self) -> f64 {
        (0..self.t.len())
            .map(|k| (self.queue[k] - self.total(k)).abs())
            .fold(0.0, f64::max)
    }

    fn total(&self, k: usize) -> f64 {
        self.initial[k] + self.initial_count[k] + self.fluid[k] + self.m1[k] + self.m2[k]
    }

    /// `X_n(t) = √n(Q(t)/n − q(t))` rebuilt from the components, where `q` is
    /// the fluid centering started at `q0`.
    pub fn scaled(&self, q0: f64, initial_service: &Law) -> Vec<f64> {
        let nf = self.n as f64;
        let root = libm::sqrt(nf);
        (0..self.t.len())
            .map(|k| {
                let f0c = initial_service.ccdf(self.t[k]);
                (self.initial[k] + self.initial_count[k] - nf * q0 * f0c + self.m1[k] + self.m2[k])
                    / root
            })
            .collect()
    }
}

/// Decomposes a service-times realization of the infinite-server queue.
pub fn fourth_decomposition(r: &QueueRealization, grid: &[f64]) -> Result<FourthDecomposition> {
    if r.spec.family != Family::InfiniteServer || r.construction != Construction::ServiceTimes {
        return Err(Error::Unsupported(
            "the decomposition needs an infinite-server service-times realization".into(),
        ));
    }
    let rec = r
        .service_record
        .as_ref()
        .ok_or_else(|| Error::Contract("service-times realization without a record".into()))?;
    if let Some(&t) = grid.iter().find(|&&t| !(t >= 0.0 && t <= r.horizon)) {
        return Err(domain("grid time", format!("{t} outside [0, {}]", r.horizon)));
    }
    let f = &r.spec.service;
    let f0 = &r.spec.initial_service;
    let lambda = r.spec.lambda;
    let q0 = rec.initial_service.len() as f64;
    let len = grid.len();
    let mut out = FourthDecomposition {
        n: r.spec.n,
        t: grid.to_vec(),
        queue: Vec::with_capacity(len),
        initial: Vec::with_capacity(len),
        initial_count: Vec::with_capacity(len),
        fluid: Vec::with_capacity(len),
        m1: Vec::with_capacity(len),
        m2: Vec::with_capacity(len),
    };
    for &t in grid {
        let f0c = f0.ccdf(t);
        let present = rec.initial_service.iter().filter(|&&d| d > t).count() as f64;
        let fluid = lambda * f.integrated_ccdf(t);
        let mut conv = 0.0;
        let mut centered_done = 0.0;
        for (&tau, &eta) in rec.arrival_times.iter().zip(&rec.service) {
            if tau > t {
                break;
            }
            conv += f.ccdf(t - tau);
            let done = if tau + eta <= t { 1.0 } else { 0.0 };
            centered_done += done - f.cdf(t - tau);
        }
        out.queue.push(r.queue.value(t));
        out.initial.push(present - q0 * f0c);
        out.initial_count.push(q0 * f0c);
        out.fluid.push(fluid);
        out.m1.push(conv - fluid);
        out.m2.push(-centered_done);
    }
    Ok(out)
}
