//! Published parameter set used as default configuration and test fixture.
//!
//! Macro factors `y = [ln(L + 0.5%), I, G]` are monthly with `I` and `G` in
//! percentage points; curve factors `x` are daily over the nine tenors below.
//! The starting curve and macro state on 2024-08-28 are synthetic stand-ins
//! shaped like the market on that date.

use nalgebra::DMatrix;

use crate::calendar::{third_wednesday, Date};
use crate::curve::{BasisFamily, BasisKind, ForwardCurve};
use crate::pricing::{DerivativeKind, DerivativeSpec};
use crate::transforms::{to_x, to_y, ShiftConfig};
use crate::var::{DriftSchedule, VarModel, VarStructure};

/// Tenors (0, 1m, 3m, 6m, 1y, 2y, 3y, 4y, 5y) in days.
pub const TENORS: [u32; 9] = [0, 30, 91, 182, 365, 730, 1095, 1460, 1825];

/// Curve shifts `c^k`, decimals.
pub const SHIFTS: [f64; 9] = [
    0.0081, 0.00965, 0.00954, 0.009, 0.0067, 0.0044, 0.0015, 0.00042, -0.0002,
];

/// Shift `c^L` of the policy rate.
pub const POLICY_SHIFT: f64 = 0.005;

/// Monthly macro autoregression matrix, rows/columns `(ln L, I, G)`.
pub const MACRO_A: [[f64; 3]; 3] = [
    [-0.018, 0.006, 0.008],
    [-0.037, 0.0, 0.037],
    [0.0, -0.028, -0.032],
];

/// Published eigenvalues of `A + I` for the macro model, `(re, im)`.
pub const MACRO_EIGENVALUES: [(f64, f64); 3] = [(0.982, 0.0), (0.984, 0.0279), (0.984, -0.0279)];

pub const MACRO_RESIDUAL_VARIANCE: [f64; 3] = [0.011, 0.166, 0.271];

/// Residual correlations `(rho_12, rho_13, rho_23)`.
pub const MACRO_RESIDUAL_CORRELATION: [f64; 3] = [0.013, 0.099, 0.170];

/// Diagonal of the daily curve autoregression matrix.
pub const CURVE_A_DIAGONAL: [f64; 9] = [
    -0.059, -0.077, -0.006, -0.011, -0.003, -0.004, -0.004, -0.005, -0.019,
];

/// Daily curve residual variances.
pub const CURVE_RESIDUAL_VARIANCE: [f64; 9] = [
    0.011e-2, 0.124e-2, 0.036e-2, 0.016e-2, 0.018e-2, 0.044e-2, 0.042e-2, 0.047e-2, 0.030e-2,
];

/// Upper triangle of the curve residual correlation matrix, row by row.
pub const CURVE_RESIDUAL_CORRELATION: [&[f64]; 8] = [
    &[-0.209, 0.144, -0.123, 0.037, -0.032, -0.023, 0.002, 0.004],
    &[-0.683, 0.277, -0.043, 0.041, 0.034, -0.002, -0.032],
    &[-0.303, 0.138, -0.086, -0.052, -0.013, -0.035],
    &[0.078, -0.047, 0.010, -0.003, -0.066],
    &[0.164, -0.092, 0.000, -0.136],
    &[0.428, 0.052, -0.078],
    &[0.434, -0.083],
    &[0.368],
];

/// Long-run medians of `(L, I, G)`; `L` in decimals, `I` and `G` in
/// percentage points.
pub const MACRO_LONG_RUN: [f64; 3] = [0.025, 2.00, 2.85];

/// Long-run medians of the curve coefficients.
pub const XI_LONG_RUN: [f64; 9] = [
    0.026, 0.017, 0.016, 0.015, 0.014, 0.014, 0.015, 0.016, 0.012,
];

pub const FUTURES_BID_RATE: f64 = 0.0528;
pub const OPTION_STRIKE: f64 = 0.045;
pub const SWAPTION_STRIKE: f64 = 0.033769;
pub const SWAPTION_PAYMENTS: usize = 5;
pub const FUTURES_MULTIPLIER: f64 = 250_000.0;
pub const SWAPTION_NOTIONAL: f64 = 1_000_000.0;

/// Synthetic starting curve coefficients.
pub const XI_START: [f64; 9] = [
    0.0533, 0.0525, 0.0505, 0.0470, 0.0420, 0.0365, 0.0345, 0.0340, 0.0345,
];
/// Starting `(L, I, G)`.
pub const MACRO_START: [f64; 3] = [0.0525, 2.9, 3.0];

pub fn start_date() -> Date {
    Date::from_ymd(2024, 8, 28).expect("valid date")
}

pub fn basis() -> BasisFamily {
    BasisFamily::new(BasisKind::PiecewiseLinear, TENORS.to_vec()).expect("valid tenors")
}

pub fn shifts() -> ShiftConfig {
    ShiftConfig::new(SHIFTS.to_vec(), POLICY_SHIFT)
}

pub fn initial_curve() -> ForwardCurve {
    ForwardCurve::new(basis(), XI_START.to_vec())
        .expect("nine coefficients")
        .with_date(start_date())
}

pub fn macro_a() -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |i, j| MACRO_A[i][j])
}

pub fn macro_covariance() -> DMatrix<f64> {
    let v = MACRO_RESIDUAL_VARIANCE;
    let r = MACRO_RESIDUAL_CORRELATION;
    let corr = [[1.0, r[0], r[1]], [r[0], 1.0, r[2]], [r[1], r[2], 1.0]];
    DMatrix::from_fn(3, 3, |i, j| corr[i][j] * (v[i] * v[j]).sqrt())
}

pub fn curve_covariance() -> DMatrix<f64> {
    let v = CURVE_RESIDUAL_VARIANCE;
    DMatrix::from_fn(9, 9, |i, j| {
        let rho = match i.cmp(&j) {
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => CURVE_RESIDUAL_CORRELATION[i][j - i - 1],
            std::cmp::Ordering::Greater => CURVE_RESIDUAL_CORRELATION[j][i - j - 1],
        };
        rho * (v[i] * v[j]).sqrt()
    })
}

/// Macro model with zero drift.
pub fn macro_model() -> VarModel {
    VarModel::new(
        macro_a(),
        DriftSchedule::Constant(vec![0.0; 3]),
        macro_covariance(),
        VarStructure::Full,
    )
    .expect("published macro model is valid")
}

/// Diagonal curve model with zero drift.
pub fn curve_model() -> VarModel {
    let a = DMatrix::from_fn(9, 9, |i, j| if i == j { CURVE_A_DIAGONAL[i] } else { 0.0 });
    VarModel::new(
        a,
        DriftSchedule::Constant(vec![0.0; 9]),
        curve_covariance(),
        VarStructure::Diagonal,
    )
    .expect("published curve model is valid")
}

/// Long-run macro median in model space.
pub fn macro_long_run_y() -> [f64; 3] {
    let [l, i, g] = MACRO_LONG_RUN;
    to_y(l, i, g, POLICY_SHIFT).expect("positive policy target")
}

/// Long-run curve-factor median in model space.
pub fn curve_long_run_x() -> Vec<f64> {
    to_x(&XI_LONG_RUN, MACRO_LONG_RUN[0], &shifts()).expect("targets inside domain")
}

pub fn macro_start_y() -> [f64; 3] {
    let [l, i, g] = MACRO_START;
    to_y(l, i, g, POLICY_SHIFT).expect("positive start rate")
}

pub fn curve_start_x() -> Vec<f64> {
    to_x(&XI_START, MACRO_START[0], &shifts()).expect("start curve inside domain")
}

/// Day offset of `d` from [`start_date`].
fn offset(d: Date) -> u32 {
    start_date().days_until(d) as u32
}

/// The four instruments priced on the start date: a December 2024 futures
/// sold at the quoted bid, a call and a put on the March 2025 futures expiring
/// the day before its reference period, and a five-year swaption into a
/// five-year annual OIS.
pub fn instruments() -> Vec<DerivativeSpec> {
    let sep = third_wednesday(2024, 9).expect("date");
    let dec = third_wednesday(2024, 12).expect("date");
    let mar = third_wednesday(2025, 3).expect("date");
    let expiry = offset(Date::from_ymd(2029, 8, 28).expect("date"));
    vec![
        DerivativeSpec {
            id: "futures".into(),
            kind: DerivativeKind::Futures {
                t0: offset(sep),
                t1: offset(dec),
                rate: FUTURES_BID_RATE,
            },
            multiplier: FUTURES_MULTIPLIER,
        },
        DerivativeSpec {
            id: "call".into(),
            kind: DerivativeKind::Call {
                t1: offset(dec),
                t2: offset(mar),
                strike: OPTION_STRIKE,
            },
            multiplier: FUTURES_MULTIPLIER,
        },
        DerivativeSpec {
            id: "put".into(),
            kind: DerivativeKind::Put {
                t1: offset(dec),
                t2: offset(mar),
                strike: OPTION_STRIKE,
            },
            multiplier: FUTURES_MULTIPLIER,
        },
        DerivativeSpec {
            id: "swaption".into(),
            kind: DerivativeKind::Swaption {
                expiry,
                strike: SWAPTION_STRIKE,
                payments: (1..=SWAPTION_PAYMENTS as u32).map(|k| 360 * k).collect(),
            },
            multiplier: SWAPTION_NOTIONAL,
        },
    ]
}
