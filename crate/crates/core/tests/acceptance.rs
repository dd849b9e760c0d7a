//! Acceptance criteria, one test per criterion. Each prints a single
//! `criterion N ...: PASS|FAIL` line before asserting.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sofr_core::arbitrage::{
    check_futures_noarb, check_zcb_noarb, h_map, hull_membership, FuturesGrid, HullStatus,
    DEFAULT_EPSILON,
};
use sofr_core::calendar::{third_wednesday, Date, Schedule, ScheduleKind};
use sofr_core::calibration::{build_system, solve_bidask, solve_mid, Quote, QuoteKind};
use sofr_core::curve::{BasisFamily, BasisKind, ForwardCurve};
use sofr_core::pricing::{
    indifference_price, indifference_price_maturity, indifference_price_spot, payout_sample,
    Convention,
};
use sofr_core::reference;
use sofr_core::rng::NormalStream;
use sofr_core::scenario::{
    apply_views, simulate, CurveDays, Engine, FactorModels, InitialState, ScenarioSet,
    SimulationConfig, Views,
};
use sofr_core::transforms::ShiftConfig;
use sofr_core::var::{estimate, stationarity_eigenvalues, DriftSchedule, VarModel, VarStructure};
use sofr_core::DELTA;

fn report(n: u32, name: &str, pass: bool, detail: String) {
    println!(
        "criterion {n} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn reference_models() -> FactorModels {
    FactorModels {
        macro_model: reference::macro_model(),
        curve_model: reference::curve_model(),
        shifts: reference::shifts(),
        basis: reference::basis(),
    }
}

fn reference_state() -> InitialState {
    InitialState {
        y: reference::macro_start_y(),
        x: reference::curve_start_x(),
    }
}

fn steered_models(horizon: u32) -> FactorModels {
    apply_views(
        &reference_models(),
        &reference_state(),
        &Views::default(),
        &reference::initial_curve(),
        reference::start_date(),
        horizon,
    )
    .expect("views apply to the reference model")
}

fn d(y: i32, m: u32, day: u32) -> Date {
    Date::from_ymd(y, m, day).unwrap()
}

fn offset(date: Date) -> u32 {
    reference::start_date().days_until(date) as u32
}

const N_LARGE: usize = 20_000;

/// Ten-year reference simulation shared by the steering and pricing checks.
fn large_set() -> &'static (ScenarioSet, Duration) {
    static SET: OnceLock<(ScenarioSet, Duration)> = OnceLock::new();
    SET.get_or_init(|| {
        let horizon = offset(d(2034, 8, 31));
        let dec = offset(third_wednesday(2024, 12).unwrap());
        let mut cfg = SimulationConfig::new(N_LARGE, reference::start_date(), horizon, 20240828);
        cfg.curve_days = CurveDays::List(vec![dec - 1, 1826]);
        let start = Instant::now();
        let set = simulate(&steered_models(horizon), &reference_state(), &cfg).unwrap();
        (set, start.elapsed())
    })
}

#[test]
fn criterion_1_eigenvalue_reproduction() {
    let start = Instant::now();
    let s = stationarity_eigenvalues(&reference::macro_a());
    let elapsed = start.elapsed();
    let mut got: Vec<(f64, f64)> = s.eigenvalues.iter().map(|z| (z.re, z.im)).collect();
    let mut want = reference::MACRO_EIGENVALUES.to_vec();
    let key = |v: &(f64, f64)| (v.0 * 1e6).round() as i64 * 10_000_000 + (v.1 * 1e6).round() as i64;
    got.sort_by_key(key);
    want.sort_by_key(key);
    let err = got
        .iter()
        .zip(&want)
        .map(|(g, w)| (g.0 - w.0).abs().max((g.1 - w.1).abs()))
        .fold(0.0, f64::max);
    let pass = err <= 1e-3 && elapsed < Duration::from_secs(1);
    report(
        1,
        "eigenvalue reproduction",
        pass,
        format!("computed {got:.5?}, published {want:?}, max abs error {err:.2e}, {elapsed:?}"),
    );
    assert!(pass);
}

/// Futures quotes on the reference curve: quarterly IMM periods and calendar
/// months, perturbed by `noise` and widened by `half_spread`.
fn synthetic_quotes(
    curve: &ForwardCurve,
    shift_days: u32,
    noise: f64,
    half_spread: f64,
    seed: u64,
) -> Vec<Quote> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = reference::start_date().add_days(shift_days as i32);
    let cutoff = curve.cutoff();
    let mut periods = Vec::new();
    for k in 0..24 {
        let (y, m) = (2024 + (8 + 3 * k) / 12, ((8 + 3 * k) % 12 + 1) as u32);
        let (y2, m2) = (
            2024 + (8 + 3 * k + 3) / 12,
            ((8 + 3 * k + 3) % 12 + 1) as u32,
        );
        let t0 = start.days_until(third_wednesday(y as i32, m).unwrap());
        let t1 = start.days_until(third_wednesday(y2 as i32, m2).unwrap());
        if t0 >= 0 && t1 as u32 <= cutoff {
            periods.push((t0 as u32, t1 as u32, QuoteKind::ThreeMonth));
        }
    }
    for k in 0..21 {
        let (y, m) = (2024 + (8 + k) / 12, ((8 + k) % 12 + 1) as u32);
        let first = d(y as i32, m, 1);
        let t0 = start.days_until(first);
        let t1 = start.days_until(first.month_end().add_days(1));
        if t0 >= 0 {
            periods.push((t0 as u32, t1 as u32, QuoteKind::OneMonth));
        }
    }
    periods
        .into_iter()
        .map(|(t0, t1, kind)| {
            let r =
                curve.implied_futures_rate(t0, t1).unwrap() + noise * (rng.random::<f64>() - 0.5);
            Quote::new(t0, t1, kind, r - half_spread, r + half_spread)
        })
        .collect()
}

#[test]
fn criterion_2_calibration_speed() {
    let curve = reference::initial_curve();
    let basis = reference::basis();
    let quotes = synthetic_quotes(&curve, 0, 4e-4, 2.5e-5, 1);
    let sys = build_system(&quotes, &basis, Some(curve.spot_sofr())).unwrap();
    let start = Instant::now();
    let fit = solve_bidask(&sys).unwrap();
    let qp = start.elapsed();
    assert_eq!(fit.coeffs.len(), 9);

    let sets: Vec<Vec<Quote>> = (0..1300u64)
        .map(|i| synthetic_quotes(&curve, (i % 20) as u32, 4e-4, 0.0, i + 100))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let start = Instant::now();
    let solved = pool.install(|| {
        sets.iter()
            .map(|q| solve_mid(&build_system(q, &basis, None).unwrap()).unwrap())
            .count()
    });
    let mids = start.elapsed();
    let pass = qp < Duration::from_millis(500) && mids < Duration::from_secs(480) && solved == 1300;
    report(
        2,
        "calibration speed",
        pass,
        format!(
            "bid-ask fit with {} quotes in {qp:?}; {solved} mid fits in {mids:?}",
            quotes.len()
        ),
    );
    assert!(pass);
}

fn random_curve(rng: &mut ChaCha8Rng) -> ForwardCurve {
    let kind = if rng.random::<bool>() {
        BasisKind::PiecewiseLinear
    } else {
        BasisKind::PiecewiseConstant
    };
    let basis = BasisFamily::new(kind, reference::TENORS.to_vec()).unwrap();
    let coeffs = (0..9).map(|_| rng.random_range(-0.01..0.12)).collect();
    ForwardCurve::new(basis, coeffs).unwrap()
}

#[test]
fn criterion_3_curve_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut consistency: f64 = 0.0;
    let mut telescoping: f64 = 0.0;
    for _ in 0..1000 {
        let c = random_curve(&mut rng);
        for _ in 0..5 {
            let t0 = rng.random_range(0..1700u32);
            let t1 = rng.random_range(t0 + 1..=1825);
            let f = c.implied_futures_rate(t0, t1).unwrap();
            let lhs = (f * f64::from(t1 - t0) * DELTA).ln_1p();
            let sum = c.forward_sum(t0, t1).unwrap();
            consistency = consistency.max((lhs - sum).abs());
            let ratio = c.zcb_price(t1).unwrap() / c.zcb_price(t0).unwrap();
            telescoping = telescoping.max((ratio - (-sum).exp()).abs());
        }
    }

    let curve = reference::initial_curve();
    let quotes = synthetic_quotes(&curve, 0, 0.0, 0.0, 0);
    let sys = build_system(&quotes, &reference::basis(), None).unwrap();
    let mut round_trip: f64 = 0.0;
    for fit in [solve_bidask(&sys).unwrap(), solve_mid(&sys).unwrap()] {
        let fitted = ForwardCurve::new(reference::basis(), fit.coeffs.clone()).unwrap();
        for q in &quotes {
            let r = fitted.implied_futures_rate(q.t0, q.t1).unwrap();
            round_trip = round_trip.max((r - q.mid_rate()).abs());
        }
    }
    let pass = consistency <= 1e-12 && telescoping <= 1e-12 && round_trip <= 1e-10;
    report(
        3,
        "curve identity suite",
        pass,
        format!(
            "consistency {consistency:.1e}, telescoping {telescoping:.1e}, round trip {round_trip:.1e} over {} quotes",
            quotes.len()
        ),
    );
    assert!(pass);
}

fn simulate_var(model: &VarModel, intercept: &[f64], t_len: usize, seed: u64) -> Vec<Vec<f64>> {
    let chol = model.cholesky();
    let mut z = NormalStream::new(seed, 0, 0);
    let mut y = vec![0.0; 3];
    let mut out = Vec::with_capacity(t_len);
    out.push(y.clone());
    for _ in 1..t_len {
        let e: Vec<f64> = (0..3).map(|_| z.next_normal()).collect();
        let eps: Vec<f64> = (0..3)
            .map(|i| (0..=i).map(|j| chol[(i, j)] * e[j]).sum())
            .collect();
        let ay: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| model.a()[(i, j)] * y[j]).sum())
            .collect();
        y = (0..3)
            .map(|i| y[i] + ay[i] + intercept[i] + eps[i])
            .collect();
        out.push(y.clone());
    }
    out
}

#[test]
fn criterion_4_var_recovery() {
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[-0.20, 0.05, 0.0, 0.0, -0.10, 0.08, 0.03, 0.0, -0.30],
    );
    let intercept = [0.01, -0.02, 0.005];
    let cov =
        DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.1, 0.2, 0.5, -0.1, 0.1, -0.1, 0.8]) * 0.01;
    let truth = VarModel::new(
        a.clone(),
        DriftSchedule::Constant(intercept.to_vec()),
        cov,
        VarStructure::Full,
    )
    .unwrap();

    let series = simulate_var(&truth, &intercept, 5000, 4);
    let (_, rep) = estimate(&series, VarStructure::Full, None).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            worst = worst.max((rep.a[(i, j)] - a[(i, j)]).abs() / rep.a_std_errors[(i, j)]);
        }
        worst = worst.max((rep.intercept[i] - intercept[i]).abs() / rep.intercept_std_errors[i]);
    }

    let mut strong = 0;
    let mut wrongly_pruned = 0;
    for seed in 0..20 {
        let series = simulate_var(&truth, &intercept, 5000, 1000 + seed);
        let (_, full) = estimate(&series, VarStructure::Full, None).unwrap();
        let (_, pruned) = estimate(&series, VarStructure::Full, Some(0.10)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if (a[(i, j)] / full.a_std_errors[(i, j)]).abs() > 5.0 {
                    strong += 1;
                    if pruned.pruned[i][j] {
                        wrongly_pruned += 1;
                    }
                }
            }
        }
    }
    let pass = worst <= 3.0 && wrongly_pruned == 0 && strong > 0;
    report(
        4,
        "VAR recovery",
        pass,
        format!("max |error|/SE {worst:.2}; {wrongly_pruned} of {strong} strong coefficients pruned over 20 replications"),
    );
    assert!(pass);
}

/// Sample median and the order statistics bounding its 99% binomial
/// confidence interval.
fn median_with_ci(mut v: Vec<f64>) -> (f64, f64, f64) {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    let med = 0.5 * (v[(n - 1) / 2] + v[n / 2]);
    let half = (2.576 * (n as f64).sqrt() / 2.0).ceil() as usize;
    (med, v[n / 2 - half], v[n / 2 + half])
}

#[test]
fn criterion_5_view_steering() {
    let (set, elapsed) = large_set();
    let h = set.meta().macro_days.len() - 1;
    let date = set.meta().start.add_days(set.meta().macro_days[h] as i32);
    let l: Vec<f64> = (0..set.len()).map(|i| set.macro_values(i, h)[0]).collect();
    let inf: Vec<f64> = (0..set.len()).map(|i| set.macro_values(i, h)[1]).collect();
    let (ml, l_lo, l_hi) = median_with_ci(l);
    let (mi, i_lo, i_hi) = median_with_ci(inf);
    let pass = (ml - 0.025).abs() <= 0.0015 && (mi - 2.0).abs() <= 0.10;
    report(
        5,
        "view steering",
        pass,
        format!(
            "{date}: median L {:.3}% [99% CI {:.3}, {:.3}], median I {mi:.3}% [99% CI {i_lo:.3}, {i_hi:.3}]; N = {}, simulated in {elapsed:?}",
            ml * 100.0,
            l_lo * 100.0,
            l_hi * 100.0,
            set.len()
        ),
    );
    assert!(pass);
}

/// Eight meetings a year on the third Wednesday of the usual months.
fn meeting_schedule(start: Date, years: i32) -> Schedule {
    let dates = (start.year()..=start.year() + years)
        .flat_map(|y| [1, 3, 5, 6, 7, 9, 10, 12].map(move |m| third_wednesday(y, m).unwrap()))
        .filter(|d| *d > start)
        .collect();
    Schedule::new(dates, ScheduleKind::Fomc).unwrap()
}

#[test]
fn criterion_6_jump_structure() {
    let horizon = 1826;
    let start = reference::start_date();
    let mut cfg = SimulationConfig::new(1000, start, horizon, 6);
    cfg.meetings = Some(meeting_schedule(start, 6));
    cfg.policy_rounding = Some(0.0025);
    let engine = Engine::new(steered_models(horizon), reference_state(), cfg).unwrap();
    let set = engine.run();
    let meetings: std::collections::HashSet<u32> =
        set.meta().meeting_days.iter().copied().collect();
    let sigma = reference::CURVE_RESIDUAL_VARIANCE[0].sqrt();
    let shift = reference::SHIFTS[0];

    let mut off_meeting_l_changes = 0usize;
    let mut off_meeting_jumps = 0usize;
    let mut meeting_jumps = 0usize;
    let mut mismatched = 0usize;
    for i in 0..set.len() {
        let tr = engine.trace(i);
        if tr.sofr != set.sofr_path(i) {
            mismatched += 1;
        }
        for t in 1..=horizon as usize {
            let on_meeting = meetings.contains(&(t as u32));
            if tr.policy[t] != tr.policy[t - 1] && !on_meeting {
                off_meeting_l_changes += 1;
            }
            // daily-noise scale of the overnight rate: exp(x1) * (exp(8 sigma) - 1)
            let level = tr.xi[t - 1][0] - tr.policy[t - 1] + shift;
            let threshold = level * ((8.0 * sigma).exp() - 1.0) * (1.0 + 0.1 * DELTA);
            if (tr.sofr[t] - tr.sofr[t - 1]).abs() > threshold {
                if on_meeting {
                    meeting_jumps += 1;
                } else {
                    off_meeting_jumps += 1;
                }
            }
        }
    }
    let pass = off_meeting_l_changes == 0
        && off_meeting_jumps == 0
        && meeting_jumps > 0
        && mismatched == 0;
    report(
        6,
        "jump structure",
        pass,
        format!(
            "{} scenarios x {horizon} days: {off_meeting_l_changes} off-meeting L changes, {off_meeting_jumps} off-meeting jumps, {meeting_jumps} meeting-day jumps",
            set.len()
        ),
    );
    assert!(pass);
}

fn nondecreasing(v: &[f64]) -> bool {
    v.windows(2)
        .all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0))
}

/// Effective sample size of the wealth tilt `exp(-k Pi)`.
fn effective_sample_size(rollovers: &[f64], k: f64) -> f64 {
    let e: Vec<f64> = rollovers.iter().map(|p| -k * p).collect();
    let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = e.iter().map(|x| (x - m).exp()).collect();
    let s1: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    s1 * s1 / s2
}

#[test]
fn criterion_7_indifference_pricing() {
    // single-scenario and two-point identities
    let (c, pi) = (123.456, 1.0371);
    let mat = indifference_price_maturity(&[c], &[pi], 0.37, 1000.0)
        .unwrap()
        .alpha;
    let spot = indifference_price_spot(&[c], &[pi], 2e-3).unwrap().alpha;
    let two = indifference_price_spot(&[0.0, 1.0], &[1.0, 1.0], 1.0)
        .unwrap()
        .alpha;
    let id_err = ((mat - c) / c)
        .abs()
        .max(((spot - c / pi) / (c / pi)).abs())
        .max((two - ((1.0 + 1f64.exp()) / 2.0).ln()).abs());

    let (set, _) = large_set();
    let rhos: Vec<f64> = (1..=10).map(|k| k as f64 * 1e-4).collect();
    let wealths = [0.0, 1e3, 1e4, 1e5];
    let mut lines = Vec::new();
    let mut monotone = true;
    for spec in reference::instruments() {
        let (payouts, rollovers) = payout_sample(&spec, set.scenarios()).unwrap();
        let grid: Vec<Vec<f64>> = wealths
            .iter()
            .map(|&w| {
                rhos.iter()
                    .map(|&r| {
                        indifference_price(&spec, &payouts, &rollovers, r, w)
                            .unwrap()
                            .alpha
                    })
                    .collect()
            })
            .collect();
        let in_rho = grid.iter().all(|row| nondecreasing(row));
        let in_wealth =
            (0..rhos.len()).all(|j| nondecreasing(&grid.iter().map(|r| r[j]).collect::<Vec<_>>()));
        let mean = payouts.iter().sum::<f64>() / payouts.len() as f64;
        // a selling price never exceeds the largest (deflated) payout
        let max = match spec.convention() {
            Convention::Maturity => payouts.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Convention::Spot => payouts
                .iter()
                .zip(&rollovers)
                .map(|(c, p)| c / p)
                .fold(f64::NEG_INFINITY, f64::max),
        };
        let bounded = grid.iter().flatten().all(|&a| a <= max + 1e-9 * max.abs());
        monotone &= in_rho && in_wealth && bounded;
        let ess = effective_sample_size(
            &rollovers,
            rhos[rhos.len() - 1] * wealths[wealths.len() - 1],
        );
        let conv = match spec.convention() {
            Convention::Maturity => "maturity",
            Convention::Spot => "spot",
        };
        lines.push(format!(
            "{} ({conv}) mean payout {mean:.2}, alpha {:.2}..{:.2}, rho {in_rho}, wealth {in_wealth}, min ESS {ess:.0}",
            spec.id,
            grid[0][0],
            grid[wealths.len() - 1][rhos.len() - 1]
        ));
    }
    let pass = id_err <= 1e-12 && monotone;
    report(
        7,
        "indifference pricing",
        pass,
        format!("identity error {id_err:.1e}; {}", lines.join("; ")),
    );
    assert!(pass);
}

/// Integer orientation test for the exact oracle.
fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Barycentric membership in the hull of `pts`: inside some triangle (or on
/// some segment) of the points, by Caratheodory's theorem.
fn oracle_in_hull(p: (i64, i64), pts: &[(i64, i64)]) -> bool {
    let n = pts.len();
    for i in 0..n {
        if pts[i] == p {
            return true;
        }
        for j in i + 1..n {
            let (a, b) = (pts[i], pts[j]);
            if cross(a, b, p) == 0
                && p.0 >= a.0.min(b.0)
                && p.0 <= a.0.max(b.0)
                && p.1 >= a.1.min(b.1)
                && p.1 <= a.1.max(b.1)
            {
                return true;
            }
            for k in j + 1..n {
                let c = pts[k];
                let (d1, d2, d3) = (cross(a, b, p), cross(b, c, p), cross(c, a, p));
                let neg = d1 < 0 || d2 < 0 || d3 < 0;
                let pos = d1 > 0 || d2 > 0 || d3 > 0;
                if cross(a, b, c) != 0 && !(neg && pos) {
                    return true;
                }
            }
        }
    }
    false
}

fn oracle_status(p: (i64, i64), pts: &[(i64, i64)], eps: i64) -> HullStatus {
    if !oracle_in_hull(p, pts) {
        return HullStatus::Outside;
    }
    let moves = [(eps, 0), (-eps, 0), (0, eps), (0, -eps)];
    if moves
        .iter()
        .all(|m| oracle_in_hull((p.0 + m.0, p.1 + m.1), pts))
    {
        HullStatus::Interior
    } else {
        HullStatus::Boundary
    }
}

fn flat_zero_noise_engine(drift_x1: f64, noise_scale: f64) -> Engine {
    let models = reference_models();
    let shifts: ShiftConfig = models.shifts.clone();
    let policy = 0.04;
    let init = InitialState::from_observables(policy, 2.0, 2.5, &[0.04; 9], &shifts).unwrap();
    let curve_a = models.curve_model.a().clone();
    let macro_a = models.macro_model.a().clone();
    let x_drift = (0..9)
        .map(|k| {
            -(0..9).map(|j| curve_a[(k, j)] * init.x[j]).sum::<f64>()
                + if k == 0 { drift_x1 } else { 0.0 }
        })
        .collect();
    let y_drift = (0..3)
        .map(|k| -(0..3).map(|j| macro_a[(k, j)] * init.y[j]).sum::<f64>())
        .collect();
    let models = FactorModels {
        macro_model: VarModel::new(
            macro_a,
            DriftSchedule::Constant(y_drift),
            models.macro_model.covariance() * noise_scale,
            VarStructure::Full,
        )
        .unwrap(),
        curve_model: VarModel::new(
            curve_a,
            DriftSchedule::Constant(x_drift),
            models.curve_model.covariance() * noise_scale,
            VarStructure::Diagonal,
        )
        .unwrap(),
        shifts,
        basis: models.basis,
    };
    let cfg = SimulationConfig::new(2, reference::start_date(), 400, 8);
    Engine::new(models, init, cfg).unwrap()
}

fn imm_grid() -> FuturesGrid {
    let months = [(2024, 9), (2024, 12), (2025, 3), (2025, 6), (2025, 9)];
    let periods = months
        .windows(2)
        .map(|w| {
            (
                offset(third_wednesday(w[0].0, w[0].1).unwrap()),
                offset(third_wednesday(w[1].0, w[1].1).unwrap()),
            )
        })
        .collect();
    FuturesGrid::new(periods, reference::basis()).unwrap()
}

#[test]
fn criterion_8_arbitrage_checks() {
    // exact oracle on random integer polygons with up to six vertices
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut fixtures = 0;
    let mut disagreements = 0;
    let mut cross_ok = true;
    let cross_pts = vec![(4, 0), (-4, 0), (0, 4), (0, -4)];
    for (p, want) in [
        ((0, 0), HullStatus::Interior),
        ((4, 0), HullStatus::Boundary),
        ((8, 0), HullStatus::Outside),
    ] {
        let samples: Vec<Vec<f64>> = cross_pts
            .iter()
            .map(|&(a, b)| vec![a as f64 / 4.0, b as f64 / 4.0])
            .collect();
        let v = hull_membership(&[p.0 as f64 / 4.0, p.1 as f64 / 4.0], &samples, 0.1).unwrap();
        cross_ok &= v.status == want;
    }
    for _ in 0..200 {
        let n = rng.random_range(3..=6);
        let pts: Vec<(i64, i64)> = (0..n)
            .map(|_| (4 * rng.random_range(0..6i64), 4 * rng.random_range(0..6i64)))
            .collect();
        let samples: Vec<Vec<f64>> = pts.iter().map(|&(a, b)| vec![a as f64, b as f64]).collect();
        if samples.iter().all(|s| s == &samples[0]) {
            continue;
        }
        for _ in 0..10 {
            let p = (
                2 * rng.random_range(-1..12i64),
                2 * rng.random_range(-1..12i64),
            );
            let v = hull_membership(&[p.0 as f64, p.1 as f64], &samples, 1.0).unwrap();
            fixtures += 1;
            if v.status != oracle_status(p, &pts, 1) {
                disagreements += 1;
            }
        }
    }

    let grid = imm_grid();
    let zero = flat_zero_noise_engine(0.0, 0.0);
    let s0 = zero.initial_state();
    let zero_fut = check_futures_noarb(&zero, &s0, &grid, DEFAULT_EPSILON, 50)
        .unwrap()
        .status;
    let zero_zcb = check_zcb_noarb(&zero, &s0, 5, DEFAULT_EPSILON, 50)
        .unwrap()
        .status;

    let pushed = flat_zero_noise_engine(0.5, 1e-4);
    let s0 = pushed.initial_state();
    let push_fut = check_futures_noarb(&pushed, &s0, &grid, DEFAULT_EPSILON, 500)
        .unwrap()
        .status;
    let push_zcb = check_zcb_noarb(&pushed, &s0, 5, DEFAULT_EPSILON, 500)
        .unwrap()
        .status;

    let horizon = 400;
    let cfg = SimulationConfig::new(2, reference::start_date(), horizon, 8);
    let engine = Engine::new(steered_models(horizon), reference_state(), cfg).unwrap();
    let state = engine.initial_state();
    let start = Instant::now();
    let fitted = check_futures_noarb(&engine, &state, &grid, DEFAULT_EPSILON, 500).unwrap();
    let runtime = start.elapsed();

    let pass = cross_ok
        && disagreements == 0
        && zero_fut == HullStatus::Boundary
        && zero_zcb == HullStatus::Boundary
        && push_fut == HullStatus::Outside
        && push_zcb == HullStatus::Outside
        && fitted.status == HullStatus::Interior
        && runtime < Duration::from_secs(30);
    report(
        8,
        "arbitrage checks",
        pass,
        format!(
            "{disagreements} oracle disagreements in {fixtures} 2-D fixtures; zero noise {}/{}; one-sided drift {}/{}; reference model {} (margin {:.2e}, M = {}) in {runtime:?}",
            zero_fut.as_str(),
            zero_zcb.as_str(),
            push_fut.as_str(),
            push_zcb.as_str(),
            fitted.status.as_str(),
            fitted.margin,
            fitted.samples
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_positive_support_zcb() {
    // lognormal next-day forwards around today's curve: a positive-support model
    let today = [0.050, 0.051, 0.052, 0.053, 0.054, 0.055];
    let point = h_map(&today[1..]);
    let mut z = NormalStream::new(88, 0, 0);
    let samples: Vec<Vec<f64>> = (0..200)
        .map(|_| {
            let f: Vec<f64> = today[..5]
                .iter()
                .map(|f| f * (0.3 * z.next_normal()).exp())
                .collect();
            h_map(&f)
        })
        .collect();
    let v = hull_membership(&point, &samples, DEFAULT_EPSILON).unwrap();
    let pass = v.status == HullStatus::Interior && v.margin > 0.0;
    report(
        8,
        "positive-support zcb fixture",
        pass,
        format!("{} with margin {:.2e}", v.status.as_str(), v.margin),
    );
    assert!(pass);
}

#[test]
fn criterion_9_reproducibility() {
    let horizon = 730;
    let mut cfg = SimulationConfig::new(2000, reference::start_date(), horizon, 99);
    cfg.curve_days = CurveDays::Every(30);
    let engine = Engine::new(steered_models(horizon), reference_state(), cfg).unwrap();
    let bytes = |threads| {
        let set = engine.run_with_threads(threads).unwrap();
        let mut buf = Vec::new();
        set.write_binary(&mut buf).unwrap();
        buf
    };
    let (one, two) = (bytes(1), bytes(2));
    let pass = one == two;
    report(
        9,
        "reproducibility",
        pass,
        format!(
            "{} bytes with 1 thread vs 2 threads, identical: {pass}",
            one.len()
        ),
    );
    assert!(pass);
}
