//! QED parameterization and the diffusion and fluid scalings.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{domain, invalid, Result};
use crate::models::{compensators, ModelSpec, QueueRealization};
use crate::paths::{Cadlag, GridPath, LinearPath, StepPath};

/// `λ_n = nμ − βμ√n`, so that `(nμ − λ_n)/√n = βμ`.
pub fn qed_params(n: u64, mu: f64, beta: f64) -> Result<f64> {
    let nf = n as f64;
    let lambda = nf * mu - beta * mu * libm::sqrt(nf);
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(domain(
            "arrival rate",
            format!("nμ − βμ√n = {lambda} for n = {n}, μ = {mu}, β = {beta}"),
        ));
    }
    Ok(lambda)
}

/// `m_n = round(κ√n)`.
pub fn room_size(n: u64, kappa: f64) -> u64 {
    libm::round(kappa * libm::sqrt(n as f64)) as u64
}

/// A family of QED models indexed by `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct QedSequence {
    pub beta: f64,
    /// Scaled room `κ`; `None` is an unlimited waiting room.
    pub kappa: Option<f64>,
    pub mu: f64,
    pub theta: f64,
    pub n_list: Vec<u64>,
}

impl QedSequence {
    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.kappa {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(invalid("kappa", format!("{k} is not a finite nonnegative room")));
            }
        }
        if self.n_list.is_empty() {
            return Err(invalid("n_list", "empty"));
        }
        for &n in &self.n_list {
            self.spec(n)?.validate()?;
        }
        Ok(())
    }

    /// The model at scale `n`, started with `n` customers.
    pub fn spec(&self, n: u64) -> Result<ModelSpec> {
        let lambda = qed_params(n, self.mu, self.beta)?;
        Ok(match self.kappa {
            Some(k) => ModelSpec::finite_room(n, self.mu, self.theta, lambda, room_size(n, k)),
            None => ModelSpec::erlang_a(n, self.mu, self.theta, lambda),
        })
    }
}

fn check_scale(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(domain("scale", "n must be positive"));
    }
    Ok(n as f64)
}

/// `X_n = (Q − n)/√n`.
pub fn clt_scale(q: &StepPath, n: u64) -> Result<StepPath> {
    let nf = check_scale(n)?;
    let root = libm::sqrt(nf);
    Ok(q.map(|v| (v - nf) / root))
}

/// `X_n(t) = (Q(t) − n·q(t))/√n` on a grid, for a time-varying centering.
pub fn clt_scale_centered(
    q: &StepPath,
    n: u64,
    centering: impl Fn(f64) -> f64,
    grid: &[f64],
) -> Result<GridPath> {
    let nf = check_scale(n)?;
    let root = libm::sqrt(nf);
    let values = q
        .sample(grid)
        .into_iter()
        .zip(grid)
        .map(|(v, &t)| (v - nf * centering(t)) / root)
        .collect();
    GridPath::new(grid.to_vec(), values)
}

/// `Q/n`.
pub fn fluid_scale(q: &StepPath, n: u64) -> Result<StepPath> {
    let nf = check_scale(n)?;
    Ok(q.map(|v| v / nf))
}

/// `min(Q(0), 2n)`.
pub fn truncate_initial(q0: u64, n: u64) -> u64 {
    q0.min(n.saturating_mul(2))
}

/// `sup_{t≤T} |Q/n − 1|`.
pub fn fluid_deviation(r: &QueueRealization) -> f64 {
    let nf = r.spec.n as f64;
    let dev = |v: f64| (v / nf - 1.0).abs();
    let mut m = dev(r.queue.initial());
    for &v in r.queue.values() {
        m = m.max(dev(v));
    }
    m
}

/// Fluid-scaled random time changes.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChanges {
    /// `λ_n t / n`.
    pub phi_a: LinearPath,
    /// `(μ/n)∫(Q∧n)`.
    pub phi_s: LinearPath,
    /// `(θ/n)∫(Q−n)⁺`.
    pub phi_r: LinearPath,
}

pub fn random_time_change_paths(r: &QueueRealization) -> Result<TimeChanges> {
    let c = compensators(r)?;
    let inv = 1.0 / r.spec.n as f64;
    Ok(TimeChanges {
        phi_a: c.arrival.scale(inv),
        phi_s: c.departure.scale(inv),
        phi_r: c.abandonment.scale(inv),
    })
}

/// `sup_{t≤T} |φ(t) − rate·t|` for a continuous piecewise-linear path.
pub fn linear_deviation(phi: &LinearPath, rate: f64) -> f64 {
    let target = LinearPath::affine(0.0, rate, phi.horizon());
    phi.sub(&target).map_or(f64::INFINITY, |d| d.sup_abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::InitialLaw;
    use crate::models::construct_time_change;
    use crate::rng::StreamSeed;

    #[test]
    fn qed_rates() {
        assert_eq!(qed_params(100, 1.0, 0.0).unwrap(), 100.0);
        assert_eq!(qed_params(100, 1.0, 1.0).unwrap(), 90.0);
        assert_eq!(qed_params(400, 2.0, 0.5).unwrap(), 780.0);
        assert!(qed_params(1, 1.0, 2.0).is_err());
        assert_eq!(room_size(400, 1.0), 20);
        assert_eq!(room_size(10, 1.0), 3);
    }

    #[test]
    fn qed_relation_holds_to_rounding() {
        for n in [1u64, 7, 100, 12345, 1_000_000] {
            for (mu, beta) in [(1.0, 0.3), (2.5, -1.0), (0.1, 2.0)] {
                let Ok(l) = qed_params(n, mu, beta) else { continue };
                let nf = n as f64;
                let rel = ((nf * mu - l) / libm::sqrt(nf) - beta * mu).abs();
                assert!(rel <= 1e-12 * (nf * mu).max(1.0) / libm::sqrt(nf), "n={n}");
            }
        }
    }

    #[test]
    fn scalings_of_simple_paths() {
        let q = StepPath::constant(100.0, 1.0);
        assert_eq!(clt_scale(&q, 100).unwrap().sup_abs(), 0.0);
        assert_eq!(fluid_scale(&q, 100).unwrap(), StepPath::constant(1.0, 1.0));
        let q = StepPath::constant(110.0, 1.0);
        assert_eq!(clt_scale(&q, 100).unwrap().initial(), 1.0);
        assert!(clt_scale(&q, 0).is_err());
        assert_eq!(fluid_scale(&StepPath::zero(1.0), 5).unwrap().sup_abs(), 0.0);
    }

    #[test]
    fn centered_scaling_with_time_varying_fluid() {
        let n = 100;
        let q = StepPath::constant(50.0, 2.0);
        let q0 = 0.5;
        let grid = [0.0, 1.0, 2.0];
        let x = clt_scale_centered(&q, n, |t| 1.0 - (1.0 - q0) * libm::exp(-t), &grid).unwrap();
        assert_eq!(x.values()[0], 0.0);
        assert!((x.values()[2] - (50.0 - 100.0 * (1.0 - 0.5 * libm::exp(-2.0))) / 10.0).abs() < 1e-12);
    }

    #[test]
    fn truncation() {
        assert_eq!(truncate_initial(100, 100), 100);
        assert_eq!(truncate_initial(300, 100), 200);
    }

    #[test]
    fn poisson_truncation_probability_is_negligible() {
        // P(Poisson(100) > 200) by summing the pmf in log space
        let n = 100.0f64;
        let mut log_p = -n + 200.0 * libm::log(n) - libm::lgamma(201.0);
        let mut tail = 0.0;
        for k in 201..2000 {
            log_p += libm::log(n / k as f64);
            tail += libm::exp(log_p);
        }
        assert!(tail < 1e-15, "{tail}");
    }

    #[test]
    fn time_changes_at_balanced_load() {
        let spec = ModelSpec::erlang_a(50, 1.0, 0.5, 50.0).with_initial(InitialLaw::Fixed(50));
        let r = construct_time_change(&spec, StreamSeed::new(1, 1), 1.0).unwrap();
        let tc = random_time_change_paths(&r).unwrap();
        assert_eq!(tc.phi_a.value(0.75), 0.75);
        assert!(tc.phi_s.value(1.0) <= 1.0 + 1e-12);
        assert!(linear_deviation(&tc.phi_a, 1.0) < 1e-15);
    }

    #[test]
    fn pinned_content_gives_exact_service_clock() {
        let spec = ModelSpec::erlang_a(10, 2.0, 0.0, 20.0);
        let mut r = construct_time_change(&spec, StreamSeed::new(1, 2), 1.0).unwrap();
        r.queue = StepPath::constant(10.0, 1.0);
        let tc = random_time_change_paths(&r).unwrap();
        assert_eq!(tc.phi_s.value(0.5), 1.0);
        assert_eq!(linear_deviation(&tc.phi_s, 2.0), 0.0);
    }
}
