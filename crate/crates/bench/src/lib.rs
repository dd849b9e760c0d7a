//! Shared fixtures for the benchmarks.

use sofr_core::calendar::{third_wednesday, Date};
use sofr_core::calibration::{Quote, QuoteKind};
use sofr_core::curve::ForwardCurve;
use sofr_core::reference;
use sofr_core::rng::{stream_key, uniform};

/// A desk-sized quote set on `start + shift_days`: every quarterly contract
/// the curve covers plus the monthly contracts of the next 21 months (about
/// 40 quotes). Mid rates come from `curve`, perturbed by uniform noise of
/// width `noise`.
pub fn desk_quotes(
    curve: &ForwardCurve,
    shift_days: u32,
    noise: f64,
    half_spread: f64,
    seed: u64,
) -> Vec<Quote> {
    let start = reference::start_date().add_days(shift_days as i32);
    let cutoff = curve.cutoff();
    let month = |k: i32| (2024 + (8 + k) / 12, ((8 + k) % 12 + 1) as u32);
    let mut periods = Vec::new();
    for k in 0..24 {
        let (y0, m0) = month(3 * k);
        let (y1, m1) = month(3 * k + 3);
        let t0 = start.days_until(third_wednesday(y0, m0).expect("date"));
        let t1 = start.days_until(third_wednesday(y1, m1).expect("date"));
        if t0 >= 0 && t1 as u32 <= cutoff {
            periods.push((t0 as u32, t1 as u32, QuoteKind::ThreeMonth));
        }
    }
    for k in 0..21 {
        let (y, m) = month(k);
        let first = Date::from_ymd(y, m, 1).expect("date");
        let t0 = start.days_until(first);
        let t1 = start.days_until(first.month_end().add_days(1));
        if t0 >= 0 {
            periods.push((t0 as u32, t1 as u32, QuoteKind::OneMonth));
        }
    }
    let key = stream_key(seed, 0, 0);
    periods
        .into_iter()
        .enumerate()
        .map(|(i, (t0, t1, kind))| {
            let u = uniform(key, i as u64) - 0.5;
            let r = curve.implied_futures_rate(t0, t1).expect("covered period") + noise * u;
            Quote::new(t0, t1, kind, r - half_spread, r + half_spread)
        })
        .collect()
}
