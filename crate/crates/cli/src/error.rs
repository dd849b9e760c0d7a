use std::io;
use std::path::Path;

use thiserror::Error;

use sofr_core::arbitrage::ArbitrageError;
use sofr_core::calendar::CalendarError;
use sofr_core::calibration::CalibrationError;
use sofr_core::curve::CurveError;
use sofr_core::pricing::PricingError;
use sofr_core::scenario::SimulationError;
use sofr_core::transforms::TransformError;
use sofr_core::var::VarError;

/// Failure of a command, carrying its exit code class.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit code 2.
    #[error("parse error: {0}")]
    Parse(String),
    /// Exit code 3.
    #[error("invalid input: {0}")]
    Domain(String),
    /// Exit code 4.
    #[error("numerical failure: {0}")]
    Numeric(String),
    /// Exit code 5.
    #[error("configuration error: {0}")]
    Config(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Config(_) => 5,
        }
    }

    pub fn io(path: &Path, e: io::Error) -> Self {
        CliError::Config(format!("{}: {e}", path.display()))
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::NumericalFailure(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<CurveError> for CliError {
    fn from(e: CurveError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<TransformError> for CliError {
    fn from(e: TransformError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<CalendarError> for CliError {
    fn from(e: CalendarError) -> Self {
        match e {
            CalendarError::Parse(_) => CliError::Parse(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<VarError> for CliError {
    fn from(e: VarError) -> Self {
        match e {
            VarError::SingularDesign => CliError::Numeric(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::UnstableModel { .. } => CliError::Domain(e.to_string()),
            SimulationError::InvalidConfig(_) | SimulationError::TooFewScenarios { .. } => {
                CliError::Config(e.to_string())
            }
            SimulationError::Format(_) => CliError::Parse(e.to_string()),
            SimulationError::Transform(t) => t.into(),
            SimulationError::Var(v) => v.into(),
            SimulationError::Curve(c) => c.into(),
            SimulationError::Io(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<PricingError> for CliError {
    fn from(e: PricingError) -> Self {
        match e {
            PricingError::HorizonTooShort { .. } | PricingError::MissingCurve(_) => {
                CliError::Config(e.to_string())
            }
            PricingError::Overflow => CliError::Numeric(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<ArbitrageError> for CliError {
    fn from(e: ArbitrageError) -> Self {
        match e {
            ArbitrageError::NumericalFailure => CliError::Numeric(e.to_string()),
            ArbitrageError::DimensionTooLarge { .. } | ArbitrageError::OutOfRange { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for CliError {
    fn from(e: toml::de::Error) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Parse(e.to_string())
    }
}
