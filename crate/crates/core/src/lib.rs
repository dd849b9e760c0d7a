//! Statistical SOFR term-structure toolkit.
//!
//! The crate covers the whole pipeline from futures quotes to prices:
//!
//! * [`calendar`]: dates, futures reference periods and meeting schedules.
//! * [`curve`]: overnight forward curves over piecewise bases, ZCB prices and
//!   SOFR averages.
//! * [`calibration`]: min-norm least squares on mid quotes and the bid-ask
//!   band fit.
//! * [`transforms`]: the log/spread maps between curve coefficients, policy
//!   rate and the stationary factor vectors.
//! * [`var`]: estimation and stepping of the difference-form VAR models and
//!   median-steered drift schedules.
//! * [`scenario`]: joint Monte Carlo simulation of macro and curve factors.
//! * [`pricing`]: derivative payouts and exponential-utility indifference
//!   prices.
//! * [`arbitrage`]: sampled convex-hull no-arbitrage checks.
//! * [`reference`]: the published parameter set used as default fixtures.

pub mod arbitrage;
pub mod calendar;
pub mod calibration;
pub mod curve;
pub mod linalg;
pub mod pricing;
pub mod reference;
pub mod rng;
pub mod scenario;
pub mod transforms;
pub mod var;

mod error;

pub use error::{Error, Result};

pub use calendar::{Date, Schedule, ScheduleKind};
pub use calibration::{CalibrationResult, CalibrationSystem, Quote, QuoteKind};
pub use curve::{BasisFamily, BasisKind, ForwardCurve, RatePath};
pub use scenario::{QuantileBands, ScenarioSet, SimulationConfig};
pub use transforms::ShiftConfig;
pub use var::{DriftSchedule, MedianTargets, VarModel, VarStructure};

/// Day-count fraction of one calendar day (ACT/360).
pub const DELTA: f64 = 1.0 / 360.0;
