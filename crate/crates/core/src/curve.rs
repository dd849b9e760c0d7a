//! Overnight forward curves on piecewise bases.
//!
//! A curve is `F(s) = sum_k xi[k] * phi_k(s)` for integer day offsets
//! `s = 0..=cutoff`. ZCB prices and futures-implied rates follow from
//! `P(t) = exp(-sum_{s<t} F(s) delta)` and
//! `1 + F(t0, t1) (t1 - t0) delta = exp(sum_{t0 <= s < t1} F(s) delta)`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{prior_business_day, Date};
use crate::linalg::CompensatedSum;
use crate::DELTA;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("tenors must be non-empty and strictly increasing")]
    InvalidTenors,
    #[error("expected {expected} coefficients, got {got}")]
    CoefficientCount { expected: usize, got: usize },
    #[error("day offset {offset} outside [0, {cutoff}]")]
    OutOfRange { offset: u32, cutoff: u32 },
    #[error("invalid period [{t0}, {t1})")]
    InvalidPeriod { t0: i64, t1: i64 },
    #[error("rate path dates must be strictly increasing with finite rates")]
    InvalidRatePath,
    #[error("missing SOFR fixing for {0}")]
    MissingFixing(Date),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// Indicator of `[0, T_1]` for the first function and `(T_{k-1}, T_k]`
    /// after that.
    PiecewiseConstant,
    /// Hat functions with `phi_k(T_k) = 1`, flat outside `[T_1, T_K]`.
    PiecewiseLinear,
}

/// Basis functions indexed by tenor offsets in days from the curve date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisFamily {
    kind: BasisKind,
    tenors: Vec<u32>,
}

impl BasisFamily {
    pub fn new(kind: BasisKind, tenors: Vec<u32>) -> Result<Self, CurveError> {
        if tenors.is_empty() || tenors.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CurveError::InvalidTenors);
        }
        Ok(Self { kind, tenors })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn tenors(&self) -> &[u32] {
        &self.tenors
    }

    pub fn len(&self) -> usize {
        self.tenors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tenors.is_empty()
    }

    pub fn last_tenor(&self) -> u32 {
        *self.tenors.last().expect("non-empty tenors")
    }

    /// The at most two non-zero basis values at `s` as `(index, weight)`.
    #[inline]
    pub fn weights(&self, s: u32) -> [(usize, f64); 2] {
        let t = &self.tenors;
        let last = t.len() - 1;
        match self.kind {
            BasisKind::PiecewiseConstant => {
                // first cell is [0, T_1], then (T_{k-1}, T_k]
                let k = t.partition_point(|&tk| tk < s).min(last);
                [(k, 1.0), (k, 0.0)]
            }
            BasisKind::PiecewiseLinear => {
                if s <= t[0] {
                    return [(0, 1.0), (0, 0.0)];
                }
                if s >= t[last] {
                    return [(last, 1.0), (last, 0.0)];
                }
                let k = t.partition_point(|&tk| tk <= s) - 1;
                let w = f64::from(s - t[k]) / f64::from(t[k + 1] - t[k]);
                [(k, 1.0 - w), (k + 1, w)]
            }
        }
    }

    /// `phi_k(s)`.
    pub fn value(&self, k: usize, s: u32) -> f64 {
        self.weights(s)
            .iter()
            .filter(|(i, _)| *i == k)
            .map(|(_, w)| w)
            .sum()
    }

    /// `delta * sum_{s=t0}^{t1-1} phi_k(s)` for every `k`.
    pub fn period_row(&self, t0: u32, t1: u32) -> Vec<f64> {
        let mut acc = vec![CompensatedSum::new(); self.len()];
        for s in t0..t1 {
            for (k, w) in self.weights(s) {
                if w != 0.0 {
                    acc[k].add(w);
                }
            }
        }
        acc.iter().map(|a| a.value() * DELTA).collect()
    }
}

/// Parametric overnight forward curve, rates in decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardCurve {
    basis: BasisFamily,
    coeffs: Vec<f64>,
    cutoff: u32,
    date: Option<Date>,
}

impl ForwardCurve {
    /// Curve with cut-off at the last tenor.
    pub fn new(basis: BasisFamily, coeffs: Vec<f64>) -> Result<Self, CurveError> {
        if coeffs.len() != basis.len() {
            return Err(CurveError::CoefficientCount {
                expected: basis.len(),
                got: coeffs.len(),
            });
        }
        let cutoff = basis.last_tenor();
        Ok(Self {
            basis,
            coeffs,
            cutoff,
            date: None,
        })
    }

    /// Flat curve with a single constant basis function.
    pub fn flat(rate: f64, cutoff: u32) -> Self {
        let basis =
            BasisFamily::new(BasisKind::PiecewiseConstant, vec![0]).expect("single tenor is valid");
        Self {
            basis,
            coeffs: vec![rate],
            cutoff,
            date: None,
        }
    }

    /// Extend or shorten the evaluation range; beyond the last tenor the curve
    /// is flat at the last coefficient.
    pub fn with_cutoff(mut self, cutoff: u32) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_date(mut self, date: Date) -> Self {
        self.date = Some(date);
        self
    }

    pub fn basis(&self) -> &BasisFamily {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn date(&self) -> Option<Date> {
        self.date
    }

    #[inline]
    fn eval_unchecked(&self, s: u32) -> f64 {
        self.basis
            .weights(s)
            .iter()
            .map(|&(k, w)| w * self.coeffs[k])
            .sum()
    }

    pub fn eval(&self, s: u32) -> Result<f64, CurveError> {
        self.check(s)?;
        Ok(self.eval_unchecked(s))
    }

    fn check(&self, s: u32) -> Result<(), CurveError> {
        if s > self.cutoff {
            Err(CurveError::OutOfRange {
                offset: s,
                cutoff: self.cutoff,
            })
        } else {
            Ok(())
        }
    }

    /// `sum_{s=t0}^{t1-1} F(s) delta`, compensated.
    pub fn forward_sum(&self, t0: u32, t1: u32) -> Result<f64, CurveError> {
        if t1 < t0 {
            return Err(CurveError::InvalidPeriod {
                t0: t0.into(),
                t1: t1.into(),
            });
        }
        if t1 > t0 {
            self.check(t1 - 1)?;
        }
        let acc: CompensatedSum = (t0..t1).map(|s| self.eval_unchecked(s)).collect();
        Ok(acc.value() * DELTA)
    }

    /// `P(t) = exp(-sum_{s<t} F(s) delta)`.
    pub fn zcb_price(&self, t: u32) -> Result<f64, CurveError> {
        self.check(t)?;
        Ok((-self.forward_sum(0, t)?).exp())
    }

    /// ZCB prices for several maturities in one pass; `maturities` need not be
    /// sorted.
    pub fn zcb_prices(&self, maturities: &[u32]) -> Result<Vec<f64>, CurveError> {
        let max = maturities.iter().copied().max().unwrap_or(0);
        self.check(max)?;
        let mut cumulative = Vec::with_capacity(max as usize + 1);
        let mut acc = CompensatedSum::new();
        cumulative.push(0.0);
        for s in 0..max {
            acc.add(self.eval_unchecked(s));
            cumulative.push(acc.value());
        }
        Ok(maturities
            .iter()
            .map(|&t| (-cumulative[t as usize] * DELTA).exp())
            .collect())
    }

    /// Futures rate implied by the curve for the half-open period `[t0, t1)`.
    pub fn implied_futures_rate(&self, t0: u32, t1: u32) -> Result<f64, CurveError> {
        if t0 >= t1 {
            return Err(CurveError::InvalidPeriod {
                t0: t0.into(),
                t1: t1.into(),
            });
        }
        self.check(t1)?;
        let g = self.forward_sum(t0, t1)?;
        Ok(g.exp_m1() / (f64::from(t1 - t0) * DELTA))
    }

    /// Simple overnight rate implied by `F(0)`.
    pub fn spot_sofr(&self) -> f64 {
        spot_from_forward(self.eval_unchecked(0))
    }
}

/// `(exp(f delta) - 1) / delta`.
#[inline]
pub fn spot_from_forward(f: f64) -> f64 {
    (f * DELTA).exp_m1() / DELTA
}

/// Inverse of [`spot_from_forward`]: `ln(1 + r delta) / delta`.
#[inline]
pub fn forward_from_spot(r: f64) -> f64 {
    (r * DELTA).ln_1p() / DELTA
}

/// `ln(1 + F * days * delta)`, the log consistency value of a futures rate.
#[inline]
pub fn log_growth(rate: f64, days: u32) -> f64 {
    (rate * f64::from(days) * DELTA).ln_1p()
}

/// Dated overnight fixings; `r_t` accrues from `t` to `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePath {
    points: Vec<(Date, f64)>,
}

impl RatePath {
    pub fn new(points: Vec<(Date, f64)>) -> Result<Self, CurveError> {
        if points.windows(2).any(|w| w[0].0 >= w[1].0) || points.iter().any(|p| !p.1.is_finite()) {
            return Err(CurveError::InvalidRatePath);
        }
        Ok(Self { points })
    }

    /// Consecutive calendar-day fixings starting at `start`.
    pub fn daily(start: Date, rates: &[f64]) -> Result<Self, CurveError> {
        Self::new(
            rates
                .iter()
                .enumerate()
                .map(|(i, &r)| (start.add_days(i as i32), r))
                .collect(),
        )
    }

    pub fn points(&self) -> &[(Date, f64)] {
        &self.points
    }

    pub fn get(&self, d: Date) -> Option<f64> {
        self.points
            .binary_search_by_key(&d, |p| p.0)
            .ok()
            .map(|i| self.points[i].1)
    }

    /// Rate applying over calendar day `d`: the fixing of the most recent
    /// business day.
    fn fill(&self, d: Date, holidays: &HashSet<Date>) -> Result<f64, CurveError> {
        let b = prior_business_day(d, holidays).map_err(|_| CurveError::MissingFixing(d))?;
        self.get(b).ok_or(CurveError::MissingFixing(b))
    }

    fn daily_rates(
        &self,
        t0: Date,
        t1: Date,
        holidays: &HashSet<Date>,
    ) -> Result<Vec<f64>, CurveError> {
        if t0 >= t1 {
            return Err(CurveError::InvalidPeriod {
                t0: t0.offset().into(),
                t1: t1.offset().into(),
            });
        }
        (0..t0.days_until(t1))
            .map(|i| self.fill(t0.add_days(i), holidays))
            .collect()
    }
}

/// Compounded average over `[t0, t1)` with weekend/holiday fill.
pub fn geometric_average(
    path: &RatePath,
    t0: Date,
    t1: Date,
    holidays: &HashSet<Date>,
) -> Result<f64, CurveError> {
    let rates = path.daily_rates(t0, t1, holidays)?;
    Ok(compounded_average(&rates))
}

/// Mean of daily rates over `[t0, t1)` with weekend/holiday fill.
pub fn arithmetic_average(
    path: &RatePath,
    t0: Date,
    t1: Date,
    holidays: &HashSet<Date>,
) -> Result<f64, CurveError> {
    let rates = path.daily_rates(t0, t1, holidays)?;
    let sum: CompensatedSum = rates.iter().copied().collect();
    Ok(sum.value() / rates.len() as f64)
}

/// `[prod(1 + r delta) - 1] / (n delta)` for a run of daily rates.
pub fn compounded_average(rates: &[f64]) -> f64 {
    let log: CompensatedSum = rates.iter().map(|r| (r * DELTA).ln_1p()).collect();
    log.value().exp_m1() / (rates.len() as f64 * DELTA)
}
