//! JSON run configuration.
//!
//! A run is described by one JSON document. Command-line flags only select
//! the command and override the seed, worker count, output directory and
//! experiment list.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qedq_core::dist::{InitialLaw, Law};
use qedq_core::models::{ArrivalLaw, Construction, ModelSpec};
use qedq_core::scaling::{qed_params, room_size};

use crate::experiments::ExperimentParams;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Field {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Verify,
    Limit,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Limit => "limit",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub experiments: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<LimitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub params: ExperimentParams,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::field(path, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyConfig {
    InfiniteServer,
    ErlangA,
    FiniteRoom,
    GeneralArrival,
}

/// Service, interarrival and initial-service laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    Erlang { shape: u32, rate: f64 },
    Uniform { low: f64, high: f64 },
}

impl From<LawConfig> for Law {
    fn from(l: LawConfig) -> Law {
        match l {
            LawConfig::Exponential { rate } => Law::Exponential { rate },
            LawConfig::Deterministic { value } => Law::Deterministic { value },
            LawConfig::Erlang { shape, rate } => Law::Erlang { shape, rate },
            LawConfig::Uniform { low, high } => Law::Uniform { low, high },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Fixed { count: u64 },
    Poisson { mean: f64 },
}

/// One queueing model. The arrival rate is `lambda` when given, otherwise
/// `nμ − βμ√n`; the room is `room` when given, otherwise `round(κ√n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: FamilyConfig,
    pub n: u64,
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival: Option<LawConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<LawConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_service: Option<LawConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
}

fn one() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn to_spec(&self) -> Result<ModelSpec, ConfigError> {
        let field = |name: &str, e: qedq_core::Error| ConfigError::field(format!("model.{name}"), e.to_string());
        let lambda = match (self.lambda, self.beta) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::field("model.lambda", "give either lambda or beta, not both"))
            }
            (Some(l), None) => l,
            (None, b) => qed_params(self.n, self.mu, b.unwrap_or(0.0)).map_err(|e| field("beta", e))?,
        };
        let room = match (self.room, self.kappa) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::field("model.room", "give either room or kappa, not both"))
            }
            (Some(m), None) => Some(m),
            (None, Some(k)) if k >= 0.0 && k.is_finite() => Some(room_size(self.n, k)),
            (None, Some(k)) => return Err(ConfigError::field("model.kappa", format!("{k} is not a finite nonnegative room"))),
            (None, None) => None,
        };
        let (n, mu, theta) = (self.n, self.mu, self.theta);
        let mut spec = match self.family {
            FamilyConfig::InfiniteServer => ModelSpec::infinite_server(n, mu, lambda),
            FamilyConfig::ErlangA => ModelSpec::erlang_a(n, mu, theta, lambda),
            FamilyConfig::FiniteRoom => {
                let room = room.ok_or_else(|| ConfigError::field("model.room", "finite_room needs room or kappa"))?;
                ModelSpec::finite_room(n, mu, theta, lambda, room)
            }
            FamilyConfig::GeneralArrival => {
                let law = self
                    .arrival
                    .ok_or_else(|| ConfigError::field("model.arrival", "general_arrival needs an interarrival law"))?;
                ModelSpec::general_arrival(n, mu, theta, lambda, room, law.into())
            }
        };
        if let (Some(law), false) = (self.arrival, self.family == FamilyConfig::GeneralArrival) {
            spec = spec.with_arrival(ArrivalLaw::Renewal(law.into()));
        }
        if self.service.is_some() || self.initial_service.is_some() {
            let service: Law = self.service.map(Law::from).unwrap_or(Law::exponential(mu));
            let initial_service = self.initial_service.map(Law::from).unwrap_or(service);
            spec = spec.with_service(service, initial_service);
        }
        if let Some(init) = self.initial {
            spec = spec.with_initial(match init {
                InitialConfig::Fixed { count } => InitialLaw::Fixed(count),
                InitialConfig::Poisson { mean } => InitialLaw::Poisson { mean },
            });
        }
        spec.validate().map_err(|e| match e {
            qedq_core::Error::InvalidSpec { field: f, reason } => ConfigError::field(format!("model.{f}"), reason),
            other => ConfigError::field("model", other.to_string()),
        })?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstructionConfig {
    TimeChange,
    Thinning,
    ServiceTimes,
}

impl From<ConstructionConfig> for Construction {
    fn from(c: ConstructionConfig) -> Construction {
        match c {
            ConstructionConfig::TimeChange => Construction::TimeChange,
            ConstructionConfig::Thinning => Construction::Thinning,
            ConstructionConfig::ServiceTimes => Construction::ServiceTimes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub horizon: f64,
    #[serde(default = "one_rep")]
    pub replications: u64,
    #[serde(default = "time_change")]
    pub construction: ConstructionConfig,
    /// Spacing of the grid on which ensemble statistics are reported.
    #[serde(default = "default_grid_dt")]
    pub grid_dt: f64,
}

fn one_rep() -> u64 {
    1
}

fn time_change() -> ConstructionConfig {
    ConstructionConfig::TimeChange
}

fn default_grid_dt() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    Ou,
    ErlangA,
    Reflected,
    FourthRep,
    IntegralMap,
    ReflectedMap,
}

/// A limit process or deterministic map problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitConfig {
    pub kind: LimitKind,
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub x0: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "one_rep")]
    pub replications: u64,
    /// Fluid initial content for the four-term limit.
    #[serde(default = "one")]
    pub q0: f64,
    #[serde(default = "default_n_emp")]
    pub n_emp: u64,
    #[serde(default = "default_grid_dt")]
    pub grid_dt: f64,
}

fn default_dt() -> f64 {
    0.001
}

fn default_n_emp() -> u64 {
    10_000
}

/// A QED sequence simulated at several scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default)]
    pub theta: f64,
    pub n_list: Vec<u64>,
    pub horizon: f64,
    #[serde(default = "one_rep")]
    pub replications: u64,
    #[serde(default = "default_grid_dt")]
    pub grid_dt: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use qedq_core::models::Family;

    #[test]
    fn unknown_family_names_the_field() {
        let err = RunConfig::from_json(r#"{"model": {"family": "m_m_1", "n": 10}}"#).unwrap_err();
        assert!(err.to_string().starts_with("model.family:"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::from_json(r#"{"model": {"family": "erlang_a", "n": 10, "tehta": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("tehta"), "{err}");
    }

    #[test]
    fn qed_rate_and_room_are_derived() {
        let c = RunConfig::from_json(
            r#"{"model": {"family": "finite_room", "n": 400, "beta": 1.0, "theta": 0.5, "kappa": 1.0}}"#,
        )
        .unwrap();
        let spec = c.model.unwrap().to_spec().unwrap();
        assert_eq!(spec.lambda, 380.0);
        assert_eq!(spec.room, Some(20));
        assert_eq!(spec.family, Family::FiniteRoom);
    }

    #[test]
    fn spec_errors_carry_the_model_prefix() {
        let c = RunConfig::from_json(r#"{"model": {"family": "erlang_a", "n": 10, "mu": -1}}"#).unwrap();
        let err = c.model.unwrap().to_spec().unwrap_err();
        assert!(err.to_string().starts_with("model."), "{err}");
        let c = RunConfig::from_json(r#"{"model": {"family": "finite_room", "n": 10}}"#).unwrap();
        assert!(c.model.unwrap().to_spec().unwrap_err().to_string().starts_with("model.room"));
    }

    #[test]
    fn round_trip() {
        let c = RunConfig::from_json(
            r#"{"seed": 3, "experiments": ["fluid"], "model": {"family": "general_arrival", "n": 50,
                "arrival": {"law": "erlang", "shape": 2, "rate": 1.0}},
                "simulation": {"horizon": 1.0}}"#,
        )
        .unwrap();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
