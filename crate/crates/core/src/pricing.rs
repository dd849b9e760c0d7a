//! Scenario-wise payouts and exponential-utility indifference selling prices.
//!
//! Day arguments are offsets from the pricing date (day 0). The overnight
//! rate of day `t` accrues over `[t, t + 1)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{CurveError, ForwardCurve};
use crate::linalg::CompensatedSum;
use crate::DELTA;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricingError {
    #[error("scenario ends on day {available}, day {needed} required")]
    HorizonTooShort { needed: u32, available: u32 },
    #[error("no curve recorded on day {0}")]
    MissingCurve(u32),
    #[error("invalid period [{0}, {1})")]
    InvalidPeriod(u32, u32),
    #[error("invalid pricing input: {0}")]
    InvalidInput(String),
    #[error("exponential overflow in expectation")]
    Overflow,
    #[error(transparent)]
    Curve(#[from] CurveError),
}

/// Rates a payout may read from one scenario.
pub trait RateScenario {
    /// Last day with an overnight rate.
    fn last_day(&self) -> u32;
    fn sofr(&self, day: u32) -> Option<f64>;
    fn curve(&self, day: u32) -> Option<ForwardCurve>;
}

/// Explicit single path, handy for tests and small examples.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPath {
    pub sofr: Vec<f64>,
    pub curves: Vec<(u32, ForwardCurve)>,
}

impl RateScenario for ScenarioPath {
    fn last_day(&self) -> u32 {
        self.sofr.len().saturating_sub(1) as u32
    }

    fn sofr(&self, day: u32) -> Option<f64> {
        self.sofr.get(day as usize).copied()
    }

    fn curve(&self, day: u32) -> Option<ForwardCurve> {
        self.curves.iter().find(|c| c.0 == day).map(|c| c.1.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// Premium received at maturity; wealth rolled over to the same date.
    Maturity,
    /// Premium received today; payout deflated by the rollover account.
    Spot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DerivativeKind {
    /// Long three-month futures traded at `rate` on `[t0, t1)`.
    Futures {
        t0: u32,
        t1: u32,
        rate: f64,
    },
    /// Call on the futures rate of `[t1, t2)` observed on day `t1 - 1`.
    Call {
        t1: u32,
        t2: u32,
        strike: f64,
    },
    Put {
        t1: u32,
        t2: u32,
        strike: f64,
    },
    /// Exercise on day `expiry` into a fixed-rate swap with payment offsets
    /// `payments` (days after expiry).
    Swaption {
        expiry: u32,
        strike: f64,
        payments: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeSpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: DerivativeKind,
    /// Currency per unit rate (futures, options) or notional (swaption).
    pub multiplier: f64,
}

impl DerivativeSpec {
    pub fn validate(&self) -> Result<(), PricingError> {
        if !(self.multiplier > 0.0 && self.multiplier.is_finite()) {
            return Err(PricingError::InvalidInput(format!(
                "{}: multiplier must be positive",
                self.id
            )));
        }
        match &self.kind {
            DerivativeKind::Futures { t0, t1, .. } => {
                if t0 >= t1 {
                    return Err(PricingError::InvalidPeriod(*t0, *t1));
                }
            }
            DerivativeKind::Call { t1, t2, .. } | DerivativeKind::Put { t1, t2, .. } => {
                if *t1 == 0 || t1 >= t2 {
                    return Err(PricingError::InvalidPeriod(*t1, *t2));
                }
            }
            DerivativeKind::Swaption { payments, .. } => {
                if payments.is_empty()
                    || payments[0] == 0
                    || payments.windows(2).any(|w| w[0] >= w[1])
                {
                    return Err(PricingError::InvalidInput(format!(
                        "{}: payment offsets must be positive and increasing",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Day the payout is settled.
    pub fn maturity(&self) -> u32 {
        match &self.kind {
            DerivativeKind::Futures { t1, .. } => *t1,
            DerivativeKind::Call { t1, .. } | DerivativeKind::Put { t1, .. } => t1 - 1,
            DerivativeKind::Swaption { expiry, .. } => *expiry,
        }
    }

    pub fn convention(&self) -> Convention {
        match self.kind {
            DerivativeKind::Futures { .. } | DerivativeKind::Swaption { .. } => {
                Convention::Maturity
            }
            DerivativeKind::Call { .. } | DerivativeKind::Put { .. } => Convention::Spot,
        }
    }

    /// Day on which the payout reads a whole curve, if any.
    pub fn curve_day(&self) -> Option<u32> {
        match &self.kind {
            DerivativeKind::Futures { .. } => None,
            _ => Some(self.maturity()),
        }
    }
}

/// `prod_{t0 <= t < t1} (1 + r_t delta)`.
pub fn rollover_factor<S: RateScenario + ?Sized>(
    scenario: &S,
    t0: u32,
    t1: u32,
) -> Result<f64, PricingError> {
    if t0 > t1 {
        return Err(PricingError::InvalidPeriod(t0, t1));
    }
    if t1 > 0 && t1 - 1 > scenario.last_day() {
        return Err(PricingError::HorizonTooShort {
            needed: t1 - 1,
            available: scenario.last_day(),
        });
    }
    let mut s = CompensatedSum::new();
    for t in t0..t1 {
        let r = scenario.sofr(t).ok_or(PricingError::HorizonTooShort {
            needed: t,
            available: scenario.last_day(),
        })?;
        s.add((r * DELTA).ln_1p());
    }
    Ok(s.value().exp())
}

/// Payout of a long position in currency units.
pub fn payout<S: RateScenario + ?Sized>(
    spec: &DerivativeSpec,
    scenario: &S,
) -> Result<f64, PricingError> {
    let m = spec.multiplier;
    let value = match &spec.kind {
        DerivativeKind::Futures { t0, t1, rate } => {
            let growth = rollover_factor(scenario, *t0, *t1)?;
            let realised = (growth - 1.0) / ((t1 - t0) as f64 * DELTA);
            (rate - realised) * m
        }
        DerivativeKind::Call { t1, t2, strike } => {
            let f = observed_futures_rate(scenario, *t1, *t2)?;
            (strike - f).max(0.0) * m
        }
        DerivativeKind::Put { t1, t2, strike } => {
            let f = observed_futures_rate(scenario, *t1, *t2)?;
            (f - strike).max(0.0) * m
        }
        DerivativeKind::Swaption {
            expiry,
            strike,
            payments,
        } => {
            let curve = curve_on(scenario, *expiry)?;
            let prices = curve.zcb_prices(payments)?;
            let mut fixed = 0.0;
            let mut prev = 0;
            for (p, &tk) in prices.iter().zip(payments) {
                fixed += p * DELTA * (tk - prev) as f64;
                prev = tk;
            }
            let last = *prices.last().expect("validated non-empty");
            (strike * fixed - 1.0 + last).max(0.0) * m
        }
    };
    Ok(value)
}

fn curve_on<S: RateScenario + ?Sized>(
    scenario: &S,
    day: u32,
) -> Result<ForwardCurve, PricingError> {
    if day > scenario.last_day() {
        return Err(PricingError::HorizonTooShort {
            needed: day,
            available: scenario.last_day(),
        });
    }
    scenario.curve(day).ok_or(PricingError::MissingCurve(day))
}

/// `F_{t1-1}(t1, t2)` from the curve seen on day `t1 - 1`.
fn observed_futures_rate<S: RateScenario + ?Sized>(
    scenario: &S,
    t1: u32,
    t2: u32,
) -> Result<f64, PricingError> {
    let curve = curve_on(scenario, t1 - 1)?;
    Ok(curve.implied_futures_rate(1, t2 - t1 + 1)?)
}

/// Payouts and the rollover factors matching the pricing convention, one per
/// scenario, in scenario order.
pub fn payout_sample<'a, S, I>(
    spec: &DerivativeSpec,
    scenarios: I,
) -> Result<(Vec<f64>, Vec<f64>), PricingError>
where
    S: RateScenario + 'a,
    I: IntoIterator<Item = S>,
{
    spec.validate()?;
    let maturity = spec.maturity();
    let mut payouts = Vec::new();
    let mut rollovers = Vec::new();
    for s in scenarios {
        payouts.push(payout(spec, &s)?);
        rollovers.push(rollover_factor(&s, 0, maturity)?);
    }
    Ok((payouts, rollovers))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndifferencePrice {
    pub alpha: f64,
    /// Delta-method Monte Carlo standard error.
    pub stderr: f64,
    pub scenarios: usize,
}

fn check_inputs(c: &[f64], pi: &[f64], rho: f64) -> Result<(), PricingError> {
    if c.is_empty() || c.len() != pi.len() {
        return Err(PricingError::InvalidInput(
            "payouts and rollovers must be non-empty and of equal length".into(),
        ));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(PricingError::InvalidInput(
            "risk aversion must be positive".into(),
        ));
    }
    if c.iter().chain(pi).any(|v| !v.is_finite()) || pi.iter().any(|&p| p <= 0.0) {
        return Err(PricingError::InvalidInput(
            "non-finite payout or rollover".into(),
        ));
    }
    Ok(())
}

/// `ln sum exp(e_i)` and the normalised weights `exp(e_i - lse) * n`.
fn log_sum_exp(exponents: &[f64]) -> Result<(f64, Vec<f64>), PricingError> {
    let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(PricingError::Overflow);
    }
    let sum: CompensatedSum = exponents.iter().map(|e| (e - max).exp()).collect();
    let lse = max + sum.value().ln();
    if !lse.is_finite() {
        return Err(PricingError::Overflow);
    }
    let n = exponents.len() as f64;
    let ratios = exponents.iter().map(|e| (e - lse).exp() * n).collect();
    Ok((lse, ratios))
}

/// Sample covariance of two mean-one ratio vectors.
fn ratio_cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let s: CompensatedSum = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - 1.0) * (y - 1.0))
        .collect();
    s.value() / (n - 1) as f64
}

/// Selling price when the premium is received at maturity:
/// `(1/rho) ln( E exp(-rho (w Pi - c)) / E exp(-rho w Pi) )`.
pub fn indifference_price_maturity(
    payouts: &[f64],
    rollovers: &[f64],
    rho: f64,
    wealth: f64,
) -> Result<IndifferencePrice, PricingError> {
    check_inputs(payouts, rollovers, rho)?;
    if !wealth.is_finite() {
        return Err(PricingError::InvalidInput("wealth must be finite".into()));
    }
    let base: Vec<f64> = rollovers.iter().map(|p| -rho * wealth * p).collect();
    let with_claim: Vec<f64> = base.iter().zip(payouts).map(|(b, c)| b + rho * c).collect();
    let (lse_u, u) = log_sum_exp(&with_claim)?;
    let (lse_v, v) = log_sum_exp(&base)?;
    let n = payouts.len();
    let alpha = (lse_u - lse_v) / rho;
    let var = ratio_cov(&u, &u) + ratio_cov(&v, &v) - 2.0 * ratio_cov(&u, &v);
    Ok(IndifferencePrice {
        alpha,
        stderr: (var.max(0.0) / n as f64).sqrt() / rho,
        scenarios: n,
    })
}

/// Selling price when the premium is received today:
/// `(1/rho) ln E exp(rho c / Pi)`.
pub fn indifference_price_spot(
    payouts: &[f64],
    rollovers: &[f64],
    rho: f64,
) -> Result<IndifferencePrice, PricingError> {
    check_inputs(payouts, rollovers, rho)?;
    let e: Vec<f64> = payouts
        .iter()
        .zip(rollovers)
        .map(|(c, p)| rho * c / p)
        .collect();
    let (lse, u) = log_sum_exp(&e)?;
    let n = payouts.len();
    let alpha = (lse - (n as f64).ln()) / rho;
    Ok(IndifferencePrice {
        alpha,
        stderr: (ratio_cov(&u, &u).max(0.0) / n as f64).sqrt() / rho,
        scenarios: n,
    })
}

/// Price under the instrument's convention; `wealth` is ignored for spot pricing.
pub fn indifference_price(
    spec: &DerivativeSpec,
    payouts: &[f64],
    rollovers: &[f64],
    rho: f64,
    wealth: f64,
) -> Result<IndifferencePrice, PricingError> {
    match spec.convention() {
        Convention::Maturity => indifference_price_maturity(payouts, rollovers, rho, wealth),
        Convention::Spot => indifference_price_spot(payouts, rollovers, rho),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRow {
    pub id: String,
    pub rho: f64,
    pub wealth: f64,
    pub price: IndifferencePrice,
}

pub const PRICE_CSV_HEADER: &str = "id,rho,rho_scaled_1e-3,wealth,alpha,stderr,n";

/// CSV price report; `rho_scaled_1e-3` is `rho / 1e-3`.
pub fn price_report_csv(rows: &[PriceRow]) -> String {
    let mut out = String::from(PRICE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.id,
            r.rho,
            r.rho / 1e-3,
            r.wealth,
            r.price.alpha,
            r.price.stderr,
            r.price.scenarios
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn flat(rate: f64, days: usize) -> ScenarioPath {
        ScenarioPath {
            sofr: vec![rate; days],
            curves: vec![],
        }
    }

    #[test]
    fn rollover_examples() {
        assert_eq!(rollover_factor(&flat(0.0, 100), 0, 90).unwrap(), 1.0);
        let s = flat(0.05, 200);
        let f = rollover_factor(&s, 0, 90).unwrap();
        let mut oracle = 1.0f64;
        for _ in 0..90 {
            oracle *= 1.0 + 0.05 / 360.0;
        }
        assert_abs_diff_eq!(f, oracle, epsilon = 1e-13);
        assert_abs_diff_eq!(f, 1.01257757, epsilon = 1e-8);
        let a = rollover_factor(&s, 0, 40).unwrap() * rollover_factor(&s, 40, 120).unwrap();
        assert_abs_diff_eq!(a, rollover_factor(&s, 0, 120).unwrap(), epsilon = 1e-12);
        assert!(matches!(
            rollover_factor(&s, 0, 300),
            Err(PricingError::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn futures_payout_on_flat_path() {
        let spec = DerivativeSpec {
            id: "f".into(),
            kind: DerivativeKind::Futures {
                t0: 10,
                t1: 100,
                rate: 0.0528,
            },
            multiplier: 250_000.0,
        };
        let p = payout(&spec, &flat(0.05, 120)).unwrap();
        assert_abs_diff_eq!(p, 622.43, epsilon = 0.01);
    }

    #[test]
    fn option_payouts() {
        // flat forward whose implied three-month rate is exactly 4%
        let target = 0.040;
        let days = 90u32;
        let f = (1.0 + target * days as f64 * DELTA).ln() / (days as f64 * DELTA);
        let curve = ForwardCurve::flat(f, 400);
        let s = ScenarioPath {
            sofr: vec![0.04; 200],
            curves: vec![(49, curve)],
        };
        let call = DerivativeSpec {
            id: "c".into(),
            kind: DerivativeKind::Call {
                t1: 50,
                t2: 140,
                strike: 0.045,
            },
            multiplier: 250_000.0,
        };
        let put = DerivativeSpec {
            id: "p".into(),
            kind: DerivativeKind::Put {
                t1: 50,
                t2: 140,
                strike: 0.045,
            },
            multiplier: 250_000.0,
        };
        assert_abs_diff_eq!(payout(&call, &s).unwrap(), 1250.0, epsilon = 1e-8);
        assert_eq!(payout(&put, &s).unwrap(), 0.0);
        assert_eq!(call.maturity(), 49);
        assert_eq!(call.convention(), Convention::Spot);
    }

    #[test]
    fn swaption_on_zero_curve() {
        let s = ScenarioPath {
            sofr: vec![0.0; 11],
            curves: vec![(10, ForwardCurve::flat(0.0, 1825))],
        };
        let spec = DerivativeSpec {
            id: "s".into(),
            kind: DerivativeKind::Swaption {
                expiry: 10,
                strike: 0.033769,
                payments: vec![360, 720, 1080, 1440, 1800],
            },
            multiplier: 1.0,
        };
        assert_abs_diff_eq!(payout(&spec, &s).unwrap(), 5.0 * 0.033769, epsilon = 1e-15);
        let short = ScenarioPath {
            sofr: vec![0.0; 5],
            curves: vec![],
        };
        assert!(matches!(
            payout(&spec, &short),
            Err(PricingError::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn single_scenario_identities() {
        let p = indifference_price_maturity(&[123.4], &[1.03], 0.7, 5.0).unwrap();
        assert_abs_diff_eq!(p.alpha, 123.4, epsilon = 1e-12);
        let p = indifference_price_spot(&[123.4], &[1.03], 0.7).unwrap();
        assert_abs_diff_eq!(p.alpha, 123.4 / 1.03, epsilon = 1e-12);
    }

    #[test]
    fn two_point_spot_price() {
        let p = indifference_price_spot(&[0.0, 1.0], &[1.0, 1.0], 1.0).unwrap();
        assert_abs_diff_eq!(p.alpha, ((1.0 + 1f64.exp()) / 2.0).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.alpha, 0.620115, epsilon = 1e-6);
    }

    #[test]
    fn zero_payouts_price_zero() {
        let pi = [1.01, 1.02, 0.99];
        assert_eq!(
            indifference_price_spot(&[0.0; 3], &pi, 2.0).unwrap().alpha,
            0.0
        );
        assert_abs_diff_eq!(
            indifference_price_maturity(&[0.0; 3], &pi, 2.0, 100.0)
                .unwrap()
                .alpha,
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn large_exponents_do_not_overflow() {
        let p = indifference_price_maturity(&[1e3, 2e3], &[1.0, 1.1], 1.0, 1e6).unwrap();
        assert!(p.alpha.is_finite());
        assert!(indifference_price_spot(&[1.0], &[1.0], f64::INFINITY).is_err());
    }

    #[test]
    fn report_header() {
        let rows = [PriceRow {
            id: "x".into(),
            rho: 2e-3,
            wealth: 1.0,
            price: IndifferencePrice {
                alpha: 1.5,
                stderr: 0.1,
                scenarios: 10,
            },
        }];
        let csv = price_report_csv(&rows);
        assert!(csv.starts_with(PRICE_CSV_HEADER));
        assert!(csv.contains("x,0.002,2,1,1.5,0.1,10"));
    }
}
