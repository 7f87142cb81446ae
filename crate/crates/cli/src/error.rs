use routing_lqr::config::ConfigError;
use routing_lqr::markov_flow::MarkovError;
use routing_lqr::mpqp::MpqpError;
use routing_lqr::qp::QpError;
use routing_lqr::simulate::SimulateError;
use routing_lqr::{dynamics::DynamicsError, network::NetworkError};

/// Failure of a subcommand, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: missing or malformed config, unknown preset.
    Config(String),
    /// Valid input that the model rejects: cyclic network, unreachable
    /// destination, point outside the law.
    Domain(String),
    /// A solver did not produce a certified answer.
    Solver(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Solver(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Domain(m) | CliError::Solver(m) | CliError::Io(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<QpError> for CliError {
    fn from(e: QpError) -> Self {
        match e {
            QpError::Network(_) | QpError::DimensionMismatch { .. } => CliError::Domain(e.to_string()),
            QpError::ZeroHorizon | QpError::InvalidRegularization(_) => CliError::Config(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<MpqpError> for CliError {
    fn from(e: MpqpError) -> Self {
        match e {
            MpqpError::Qp(inner) => inner.into(),
            MpqpError::RegionBudget { .. } => CliError::Solver(e.to_string()),
            MpqpError::Parse(_) => CliError::Config(e.to_string()),
            MpqpError::NoRegion { .. } | MpqpError::DimensionMismatch { .. } => CliError::Domain(e.to_string()),
        }
    }
}

impl From<SimulateError> for CliError {
    fn from(e: SimulateError) -> Self {
        match e {
            SimulateError::Qp(inner) => inner.into(),
            SimulateError::Mpqp(inner) => inner.into(),
            SimulateError::InvalidLearner(_) => CliError::Config(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<MarkovError> for CliError {
    fn from(e: MarkovError) -> Self {
        match e {
            MarkovError::Invalid(_) | MarkovError::Json(_) => CliError::Config(e.to_string()),
            MarkovError::Inconsistent(_) => CliError::Solver(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
