use thiserror::Error;

use crate::arbitrage::ArbitrageError;
use crate::calendar::CalendarError;
use crate::calibration::CalibrationError;
use crate::curve::CurveError;
use crate::pricing::PricingError;
use crate::scenario::SimulationError;
use crate::transforms::TransformError;
use crate::var::VarError;

pub type Result<T> = std::result::Result<T, Error>;

/// Umbrella error for callers that chain several stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Calendar(#[from] CalendarError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Var(#[from] VarError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Arbitrage(#[from] ArbitrageError),
}
