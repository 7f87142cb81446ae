//! JSON run configuration shared by the CLI and the browser demo.
//!
//! ```json
//! {
//!   "network": {"edges": [{"a": 1.0, "b": 0.0}, {"a": 2.0, "b": 0.0}]},
//!   "dynamics": {"gamma": 0.5, "A": "identity", "B": [[1, 0], [0, 1]]},
//!   "cost": {"Q": [[1, 0], [0, 2]], "R": "zero"},
//!   "T": 15,
//!   "x0": [0.3, 0.7]
//! }
//! ```
//!
//! Matrices accept the shorthands `"identity"`, `"uniform"` and `"zero"`.
//! The cost is either `{"kind": "rosenthal" | "social_welfare"}` (built from
//! the network) or explicit `Q`, `R`, `Q_f`; `R` defaults to zero and `Q_f`
//! to `Q`. Without a network block the latency slopes default to the diagonal
//! of `Q`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{validate_left_stochastic, DynamicsError, GameDynamics};
use crate::network::{AffineLatency, CostKind, NetworkError, ParallelNetwork, QuadraticCostSpec, SimplexVector};
use crate::qp::{HorizonProblem, QpError};
use crate::simulate::{LearnerConfig, LearningRate};
use crate::tol;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// A matrix given inline or by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Named(String),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn resolve(&self, n: usize, field: &str) -> Result<DMatrix<f64>, ConfigError> {
        match self {
            MatrixSpec::Named(name) => match name.as_str() {
                "identity" => Ok(DMatrix::identity(n, n)),
                "uniform" => Ok(DMatrix::from_element(n, n, 1.0 / n as f64)),
                "zero" => Ok(DMatrix::zeros(n, n)),
                other => Err(ConfigError::Invalid(format!("{field}: unknown matrix shorthand {other:?}"))),
            },
            MatrixSpec::Rows(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(ConfigError::Invalid(format!("{field}: expected a {n}x{n} matrix")));
                }
                Ok(DMatrix::from_row_iterator(n, n, rows.iter().flatten().copied()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub gamma: f64,
    #[serde(rename = "A")]
    pub a: MatrixSpec,
    #[serde(rename = "B")]
    pub b: MatrixSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<MatrixSpec>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<MatrixSpec>,
    #[serde(rename = "Q_f", default, skip_serializing_if = "Option::is_none")]
    pub q_terminal: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    #[default]
    #[serde(rename = "mpc")]
    Mpc,
    #[serde(rename = "explicit")]
    Explicit,
    #[serde(rename = "open-loop")]
    OpenLoop,
    #[serde(rename = "mirror-descent")]
    MirrorDescent,
}

impl std::str::FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| ConfigError::Invalid(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_convergence_tol")]
    pub convergence: f64,
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_convergence_tol() -> f64 {
    1e-3
}

fn default_window() -> usize {
    3
}

fn default_regularization() -> f64 {
    tol::REGULARIZATION
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { convergence: default_convergence_tol(), window: default_window() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub eta: f64,
    /// `"constant"` (default) or `"inverse_sqrt"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
}

/// One run, as read from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<ParallelNetwork>,
    pub dynamics: DynamicsConfig,
    pub cost: CostConfig,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_regularization")]
    pub regularization: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learner: Option<LearnerSpec>,
    /// Mirror-descent rounds; defaults to `T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Samples for law verification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
}

/// A validated run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: Option<String>,
    pub network: ParallelNetwork,
    pub problem: HorizonProblem,
    pub x0: SimplexVector,
    pub mode: Mode,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub learner: LearnerConfig,
    pub steps: usize,
    pub samples: usize,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Validates every block and builds the horizon problem.
    pub fn build(&self) -> Result<Scenario, ConfigError> {
        let n = self.x0.len();
        if n == 0 {
            return Err(ConfigError::Invalid("x0 is empty".into()));
        }
        let x0 = SimplexVector::new(self.x0.clone())?;
        let a = validate_left_stochastic(self.dynamics.a.resolve(n, "A")?)?;
        let b = validate_left_stochastic(self.dynamics.b.resolve(n, "B")?)?;
        let dynamics = GameDynamics::new(self.dynamics.gamma, a, b)?;
        if let Some(net) = &self.network {
            if net.num_edges() != n {
                return Err(ConfigError::Invalid(format!("network has {} edges but x0 has {n} entries", net.num_edges())));
            }
        }

        let cost = match (&self.cost.kind, &self.cost.q) {
            (Some(_), Some(_)) => return Err(ConfigError::Invalid("cost: give either kind or Q, not both".into())),
            (Some(kind), None) => {
                let net = self
                    .network
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("cost kind requires a network block".into()))?;
                let kind = match kind.as_str() {
                    "rosenthal" => CostKind::Rosenthal,
                    "social_welfare" => CostKind::SocialWelfare,
                    other => return Err(ConfigError::Invalid(format!("unknown cost kind {other:?}"))),
                };
                let mut spec = net.cost(kind);
                if let Some(r) = &self.cost.r {
                    spec.r = r.resolve(n, "R")?;
                }
                spec.validate()?;
                spec
            }
            (None, Some(q)) => {
                let q = q.resolve(n, "Q")?;
                let r = match &self.cost.r {
                    Some(r) => r.resolve(n, "R")?,
                    None => DMatrix::zeros(n, n),
                };
                let qf = match &self.cost.q_terminal {
                    Some(m) => m.resolve(n, "Q_f")?,
                    None => q.clone(),
                };
                let linear = match &self.cost.linear {
                    Some(v) if v.len() != n => return Err(ConfigError::Invalid(format!("cost.linear must have {n} entries"))),
                    Some(v) => Some(DVector::from_column_slice(v)),
                    None => None,
                };
                QuadraticCostSpec::new(q, r, qf, linear)?
            }
            (None, None) => return Err(ConfigError::Invalid("cost: missing kind or Q".into())),
        };

        let network = match &self.network {
            Some(net) => net.clone(),
            None => {
                let offsets = cost.linear.clone().unwrap_or_else(|| DVector::zeros(n));
                ParallelNetwork::new((0..n).map(|e| AffineLatency { a: cost.q[(e, e)].max(0.0), b: offsets[e].max(0.0) }).collect())?
            }
        };

        if self.tolerances.convergence.is_nan() || self.tolerances.convergence <= 0.0 || self.tolerances.window == 0 {
            return Err(ConfigError::Invalid("tolerances: convergence must be > 0 and window >= 1".into()));
        }
        let learner = match &self.learner {
            None => LearnerConfig::constant(0.1),
            Some(spec) => {
                let rate = match spec.schedule.as_deref() {
                    None | Some("constant") => LearningRate::Constant(spec.eta),
                    Some("inverse_sqrt") => LearningRate::InverseSqrt(spec.eta),
                    Some(other) => return Err(ConfigError::Invalid(format!("unknown learning-rate schedule {other:?}"))),
                };
                LearnerConfig::new(rate).map_err(|e| ConfigError::Invalid(e.to_string()))?
            }
        };

        let problem = HorizonProblem::with_regularization(dynamics, cost, self.horizon, self.regularization)?;
        Ok(Scenario {
            name: self.name.clone(),
            network,
            problem,
            x0,
            mode: self.mode,
            seed: self.seed,
            tolerances: self.tolerances,
            learner,
            steps: self.steps.unwrap_or(self.horizon),
            samples: self.samples.unwrap_or(10_000),
        })
    }
}
