//! Maps between curve coefficients / macro variables and the factor vectors
//! the VAR models run on.
//!
//! The curve factor is
//! `x1 = ln(xi1 + c1 - L)` and `xk = ln(xik + ck) - ln(xi(k-1) + c(k-1))`,
//! i.e. the shifted short end relative to the policy rate followed by shifted
//! log term spreads. The macro factor is `y = [ln(L + cL), I, G]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{days_in_month, Date};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("log argument not positive at component {index}")]
    DomainError { index: usize },
    #[error("expected {expected} components, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("need at least two observations to interpolate")]
    InsufficientData,
    #[error("series dates must be strictly increasing")]
    Unordered,
}

/// Shift constants, in decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftConfig {
    pub curve: Vec<f64>,
    pub policy: f64,
}

impl ShiftConfig {
    pub fn new(curve: Vec<f64>, policy: f64) -> Self {
        Self { curve, policy }
    }

    pub fn len(&self) -> usize {
        self.curve.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curve.is_empty()
    }

    fn check(&self, n: usize) -> Result<(), TransformError> {
        if n != self.curve.len() {
            return Err(TransformError::Dimension {
                expected: self.curve.len(),
                got: n,
            });
        }
        Ok(())
    }
}

impl Default for ShiftConfig {
    /// Nine-tenor shifts for tenors (0, 1m, 3m, 6m, 1y, 2y, 3y, 4y, 5y) and a
    /// 0.5% policy-rate shift.
    fn default() -> Self {
        Self {
            curve: crate::reference::SHIFTS.to_vec(),
            policy: crate::reference::POLICY_SHIFT,
        }
    }
}

pub fn to_x(xi: &[f64], policy_rate: f64, cfg: &ShiftConfig) -> Result<Vec<f64>, TransformError> {
    let mut x = vec![0.0; xi.len()];
    to_x_into(xi, policy_rate, cfg, &mut x)?;
    Ok(x)
}

/// [`to_x`] writing into a caller buffer.
pub fn to_x_into(
    xi: &[f64],
    policy_rate: f64,
    cfg: &ShiftConfig,
    out: &mut [f64],
) -> Result<(), TransformError> {
    cfg.check(xi.len())?;
    if xi.is_empty() {
        return Ok(());
    }
    let first = xi[0] + cfg.curve[0] - policy_rate;
    if !(first > 0.0) {
        return Err(TransformError::DomainError { index: 0 });
    }
    out[0] = first.ln();
    let base = xi[0] + cfg.curve[0];
    if !(base > 0.0) {
        return Err(TransformError::DomainError { index: 0 });
    }
    let mut prev_ln = base.ln();
    for k in 1..xi.len() {
        let cur = xi[k] + cfg.curve[k];
        if !(cur > 0.0) {
            return Err(TransformError::DomainError { index: k });
        }
        let cur_ln = cur.ln();
        out[k] = cur_ln - prev_ln;
        prev_ln = cur_ln;
    }
    Ok(())
}

pub fn from_x(x: &[f64], policy_rate: f64, cfg: &ShiftConfig) -> Result<Vec<f64>, TransformError> {
    cfg.check(x.len())?;
    let mut xi = vec![0.0; x.len()];
    from_x_into(x, policy_rate, &cfg.curve, &mut xi);
    Ok(xi)
}

/// Inverse of [`to_x`] without dimension checks. `shifts` and `out` must have
/// the length of `x`.
#[inline]
pub fn from_x_into(x: &[f64], policy_rate: f64, shifts: &[f64], out: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    out[0] = x[0].exp() + policy_rate - shifts[0];
    // work with the shifted level to avoid cancellation along the chain
    let mut level = out[0] + shifts[0];
    for k in 1..x.len() {
        level *= x[k].exp();
        out[k] = level - shifts[k];
    }
}

/// `[ln(L + cL), I, G]`.
pub fn to_y(
    policy_rate: f64,
    inflation: f64,
    growth: f64,
    policy_shift: f64,
) -> Result<[f64; 3], TransformError> {
    let arg = policy_rate + policy_shift;
    if !(arg > 0.0) {
        return Err(TransformError::DomainError { index: 0 });
    }
    Ok([arg.ln(), inflation, growth])
}

/// `(L, I, G)` from `y`.
pub fn from_y(y: &[f64; 3], policy_shift: f64) -> (f64, f64, f64) {
    (policy_rate_from_y1(y[0], policy_shift), y[1], y[2])
}

#[inline]
pub fn policy_rate_from_y1(y1: f64, policy_shift: f64) -> f64 {
    y1.exp() - policy_shift
}

fn month_end_from_index(idx: i32) -> Date {
    let (y, m) = (idx.div_euclid(12), idx.rem_euclid(12) as u32 + 1);
    Date::from_ymd(y, m, days_in_month(y, m)).expect("valid month end")
}

/// Position of a date in month units; month-ends fall on integers.
fn month_position(d: Date) -> f64 {
    let dim = days_in_month(d.year(), d.month()) as f64;
    d.month_index() as f64 - 1.0 + d.day() as f64 / dim
}

/// Linear interpolation of a lower-frequency series onto consecutive
/// calendar month-ends, from the month of the first observation to the month
/// of the last. Values outside the observed range are held at the endpoint.
pub fn quarterly_to_monthly(series: &[(Date, f64)]) -> Result<Vec<(Date, f64)>, TransformError> {
    if series.len() < 2 {
        return Err(TransformError::InsufficientData);
    }
    if series.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(TransformError::Unordered);
    }
    let pos: Vec<f64> = series.iter().map(|p| month_position(p.0)).collect();
    let first = series[0].0.month_index();
    let last = series[series.len() - 1].0.month_index();
    let mut out = Vec::with_capacity((last - first + 1) as usize);
    let mut seg = 0;
    for idx in first..=last {
        let t = idx as f64;
        let v = if t <= pos[0] {
            series[0].1
        } else if t >= pos[pos.len() - 1] {
            series[series.len() - 1].1
        } else {
            while pos[seg + 1] < t {
                seg += 1;
            }
            let w = (t - pos[seg]) / (pos[seg + 1] - pos[seg]);
            series[seg].1 + w * (series[seg + 1].1 - series[seg].1)
        };
        out.push((month_end_from_index(idx), v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn d(s: &str) -> Date {
        s.parse().unwrap()
    }

    #[test]
    fn short_end_example() {
        let cfg = ShiftConfig::default();
        let mut xi = vec![0.04; 9];
        xi[0] = 0.0532;
        let x = to_x(&xi, 0.0525, &cfg).unwrap();
        assert_abs_diff_eq!(x[0], (0.0088f64).ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(x[0], -4.7330, epsilon = 5e-5);
    }

    #[test]
    fn unit_and_flat_cases() {
        let cfg = ShiftConfig::new(vec![0.01, 0.02, 0.03], 0.005);
        let l = 0.05;
        let xi = [l - 0.01 + 1.0, 0.5, 0.49];
        let x = to_x(&xi, l, &cfg).unwrap();
        assert_abs_diff_eq!(x[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[2], 0.0, epsilon = 1e-15);

        let back = from_x(&[0.0, 0.0, 0.0], l, &cfg).unwrap();
        assert_abs_diff_eq!(back[0], 1.0 + l - 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(back[1] + 0.02, back[0] + 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(back[2] + 0.03, back[1] + 0.02, epsilon = 1e-15);
    }

    #[test]
    fn domain_errors_report_index() {
        let cfg = ShiftConfig::new(vec![0.01, 0.0, 0.0], 0.005);
        assert_eq!(
            to_x(&[0.03, 0.02, 0.02], 0.05, &cfg),
            Err(TransformError::DomainError { index: 0 })
        );
        assert_eq!(
            to_x(&[0.05, 0.02, -0.01], 0.05, &cfg),
            Err(TransformError::DomainError { index: 2 })
        );
        assert!(to_y(-0.005, 2.0, 2.0, 0.005).is_err());
    }

    #[test]
    fn y_map() {
        let y = to_y(0.025, 2.0, 2.85, 0.005).unwrap();
        assert_abs_diff_eq!(y[0], -3.5066, epsilon = 5e-5);
        assert_eq!(to_y(1.0 - 0.005, 0.0, 0.0, 0.005).unwrap()[0], 0.0);
        let (l, i, g) = from_y(&y, 0.005);
        assert_abs_diff_eq!(l, 0.025, epsilon = 1e-14);
        assert_eq!((i, g), (2.0, 2.85));
    }

    #[test]
    fn quarterly_interpolation() {
        let s = [(d("2024-03-31"), 1.0), (d("2024-06-30"), 4.0)];
        let m = quarterly_to_monthly(&s).unwrap();
        let dates: Vec<String> = m.iter().map(|p| p.0.to_string()).collect();
        assert_eq!(
            dates,
            ["2024-03-31", "2024-04-30", "2024-05-31", "2024-06-30"]
        );
        let v: Vec<f64> = m.iter().map(|p| p.1).collect();
        for (a, b) in v.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }

        let c = [
            (d("2020-12-31"), 2.5),
            (d("2021-03-31"), 2.5),
            (d("2021-12-31"), 2.5),
        ];
        assert!(quarterly_to_monthly(&c).unwrap().iter().all(|p| p.1 == 2.5));
        assert_eq!(
            quarterly_to_monthly(&c[..1]),
            Err(TransformError::InsufficientData)
        );
    }

    #[test]
    fn month_ends_are_consecutive() {
        let s = [(d("2019-11-15"), 1.0), (d("2021-02-10"), 3.0)];
        let m = quarterly_to_monthly(&s).unwrap();
        for w in m.windows(2) {
            assert_eq!(w[0].0.add_days(1).month_end(), w[1].0);
            assert_eq!(w[1].0, w[1].0.month_end());
        }
        assert_eq!(m[0].0, d("2019-11-30"));
        assert_eq!(m.last().unwrap().0, d("2021-02-28"));
        // the last month-end lies after the final observation
        assert_eq!(m.last().unwrap().1, 3.0);
    }
}
