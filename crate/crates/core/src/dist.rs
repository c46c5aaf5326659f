//! Service, interarrival and initial-content laws.

use alloc::format;
use libm::exp;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};

use crate::error::{invalid, Result};

/// A nonnegative lifetime distribution with cdf `F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Law {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    /// Sum of `shape` independent exponentials of rate `rate`.
    Erlang { shape: u32, rate: f64 },
    Uniform { low: f64, high: f64 },
}

impl Law {
    pub fn exponential(rate: f64) -> Self {
        Law::Exponential { rate }
    }

    pub fn validate(&self, field: &'static str) -> Result<()> {
        let ok = match *self {
            Law::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Law::Deterministic { value } => value > 0.0 && value.is_finite(),
            Law::Erlang { shape, rate } => shape >= 1 && rate > 0.0 && rate.is_finite(),
            Law::Uniform { low, high } => low >= 0.0 && high > low && high.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(field, format!("{self:?} has no positive finite mean")))
        }
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self, Law::Exponential { .. })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Law::Exponential { rate } => 1.0 / rate,
            Law::Deterministic { value } => value,
            Law::Erlang { shape, rate } => f64::from(shape) / rate,
            Law::Uniform { low, high } => 0.5 * (low + high),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Law::Exponential { rate } => 1.0 / (rate * rate),
            Law::Deterministic { .. } => 0.0,
            Law::Erlang { shape, rate } => f64::from(shape) / (rate * rate),
            Law::Uniform { low, high } => (high - low) * (high - low) / 12.0,
        }
    }

    /// Squared coefficient of variation `Var / mean²`.
    pub fn scv(&self) -> f64 {
        let m = self.mean();
        self.variance() / (m * m)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match *self {
            Law::Exponential { rate } => -libm::expm1(-rate * x),
            Law::Deterministic { value } => {
                if x >= value {
                    1.0
                } else {
                    0.0
                }
            }
            Law::Erlang { .. } => 1.0 - self.ccdf(x),
            Law::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
        }
    }

    /// `Fᶜ(x) = 1 − F(x)`.
    pub fn ccdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match *self {
            Law::Exponential { rate } => exp(-rate * x),
            Law::Erlang { shape, rate } => {
                let z = rate * x;
                let mut term = exp(-z);
                let mut sum = term;
                for j in 1..shape {
                    term *= z / f64::from(j);
                    sum += term;
                }
                sum
            }
            _ => 1.0 - self.cdf(x),
        }
    }

    /// `∫₀ᵗ Fᶜ(u) du`, in closed form.
    pub fn integrated_ccdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            Law::Exponential { rate } => -libm::expm1(-rate * t) / rate,
            Law::Deterministic { value } => t.min(value),
            Law::Erlang { shape, rate } => {
                // ∫₀ᵗ P(Γ_k > u) du = (1/λ) Σ_{j<k} P(Γ_{j+1} ≤ t)
                let mut total = 0.0;
                for j in 0..shape {
                    let gamma_j1 = Law::Erlang { shape: j + 1, rate };
                    total += gamma_j1.cdf(t);
                }
                total / rate
            }
            Law::Uniform { low, high } => {
                if t <= low {
                    t
                } else if t >= high {
                    0.5 * (low + high)
                } else {
                    low + (t - low) - 0.5 * (t - low) * (t - low) / (high - low)
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Law::Exponential { rate } => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            Law::Deterministic { value } => value,
            Law::Erlang { shape, rate } => {
                let mut s = 0.0;
                for _ in 0..shape {
                    let e: f64 = Exp1.sample(rng);
                    s += e;
                }
                s / rate
            }
            Law::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }
}

/// Law of the initial number of customers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialLaw {
    Fixed(u64),
    Poisson { mean: f64 },
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialLaw::Poisson { mean } if !(mean >= 0.0 && mean.is_finite()) => {
                Err(invalid("initial", format!("Poisson mean {mean}")))
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            InitialLaw::Fixed(k) => k,
            InitialLaw::Poisson { mean } => sample_poisson(mean, rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            InitialLaw::Fixed(k) => k as f64,
            InitialLaw::Poisson { mean } => mean,
        }
    }
}

/// Exact Poisson draw.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite Poisson mean");
    d.sample(rng) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn riemann_ccdf(law: &Law, t: f64) -> f64 {
        let m = 200_000;
        let h = t / m as f64;
        (0..m).map(|k| law.ccdf((k as f64 + 0.5) * h) * h).sum()
    }

    #[test]
    fn integrated_ccdf_matches_quadrature() {
        let laws = [
            Law::Exponential { rate: 1.7 },
            Law::Erlang { shape: 3, rate: 2.0 },
            Law::Uniform { low: 0.2, high: 1.3 },
            Law::Deterministic { value: 0.8 },
        ];
        for law in laws {
            for t in [0.1, 0.7, 1.0, 2.5] {
                let exact = law.integrated_ccdf(t);
                let approx = riemann_ccdf(&law, t);
                assert!((exact - approx).abs() < 1e-5, "{law:?} t={t}: {exact} vs {approx}");
            }
        }
    }

    #[test]
    fn moments_and_scv() {
        let e2 = Law::Erlang { shape: 2, rate: 4.0 };
        assert_eq!(e2.mean(), 0.5);
        assert_eq!(e2.scv(), 0.5);
        assert_eq!(Law::exponential(3.0).scv(), 1.0);
        assert_eq!(Law::Deterministic { value: 2.0 }.scv(), 0.0);
    }

    #[test]
    fn validation_rejects_degenerate_laws() {
        assert!(Law::exponential(0.0).validate("service").is_err());
        assert!(Law::Uniform { low: 1.0, high: 1.0 }.validate("service").is_err());
        assert!(Law::Erlang { shape: 0, rate: 1.0 }.validate("service").is_err());
        assert!(InitialLaw::Poisson { mean: -1.0 }.validate().is_err());
    }
}
