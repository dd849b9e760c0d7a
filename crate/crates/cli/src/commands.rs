use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use sofr_core::arbitrage::{
    check_futures_noarb, check_zcb_noarb, verdict_csv, CheckKind, FuturesGrid, VerdictRow,
};
use sofr_core::calendar::{
    parse_date_list, three_month_reference_period, Date, Schedule, ScheduleKind,
};
use sofr_core::calibration::{build_system, daily_backfill, solve_bidask, solve_mid, QuoteKind};
use sofr_core::curve::ForwardCurve;
use sofr_core::pricing::{
    indifference_price, payout_sample, price_report_csv, DerivativeSpec, PriceRow,
};
use sofr_core::reference;
use sofr_core::scenario::{
    apply_views, quantile_bands, CurveDays, Engine, ScenarioSet, SimulationConfig, Variable,
};
use sofr_core::transforms::{quarterly_to_monthly, to_x, to_y};
use sofr_core::var::{estimate, EstimationReport, VarStructure};
use sofr_core::DELTA;

use crate::artifact::ModelArtifact;
use crate::config::{AppConfig, ArbKind};
use crate::error::{CliError, CliResult};
use crate::ingest::{self, SeriesFile};

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: AppConfig,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl Context {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.config.simulation.seed)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        let path = self.out(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

fn parse_date(s: &str) -> CliResult<Date> {
    s.parse().map_err(|e| CliError::Parse(format!("{e}")))
}

fn dated(date: Date, e: impl Into<CliError>) -> CliError {
    match e.into() {
        CliError::Parse(m) => CliError::Parse(format!("{date}: {m}")),
        CliError::Domain(m) => CliError::Domain(format!("{date}: {m}")),
        CliError::Numeric(m) => CliError::Numeric(format!("{date}: {m}")),
        CliError::Config(m) => CliError::Config(format!("{date}: {m}")),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

// ---------------------------------------------------------------- calibrate

#[derive(Debug, Clone)]
pub struct CalibrateArgs {
    pub quotes: PathBuf,
    pub date: String,
    pub mid: bool,
    pub anchor_sofr: Option<f64>,
}

pub fn calibrate(ctx: &Context, args: &CalibrateArgs) -> CliResult<()> {
    let basis = ctx.config.basis()?;
    let date = parse_date(&args.date)?;
    let rows = ingest::read_quotes_file(&args.quotes)?;
    let (placed, warnings) = ingest::place_quotes(&rows, date, &basis)?;
    for w in &warnings {
        warn(w);
    }
    if placed.is_empty() {
        return Err(CliError::Domain(format!("no usable quotes for {date}")));
    }
    let quotes: Vec<_> = placed.iter().map(|p| p.quote.clone()).collect();
    let system = build_system(&quotes, &basis, args.anchor_sofr)?;
    let result = if args.mid {
        solve_mid(&system)?
    } else {
        solve_bidask(&system)?
    };
    let curve = ForwardCurve::new(basis.clone(), result.coeffs.clone())?.with_date(date);

    let mut xi = Vec::new();
    ingest::write_xi(&mut xi, &curve)?;
    ctx.write(
        "xi.csv",
        std::str::from_utf8(&xi).expect("csv output is utf-8"),
    )?;

    let mut report = String::from(
        "line,kind,delivery,start,end,t0,t1,bid_rate,ask_rate,implied_rate,residual,approximate\n",
    );
    for (i, p) in placed.iter().enumerate() {
        let q = &p.quote;
        let implied = match q.kind {
            QuoteKind::ThreeMonth => curve.implied_futures_rate(q.t0, q.t1)?,
            QuoteKind::OneMonth => curve.forward_sum(q.t0, q.t1)? / (q.days() as f64 * DELTA),
        };
        let kind = match q.kind {
            QuoteKind::OneMonth => "1M",
            QuoteKind::ThreeMonth => "3M",
        };
        let (y, m) = p.row.delivery;
        writeln!(
            report,
            "{},{kind},{y:04}-{m:02},{},{},{},{},{},{},{},{},{}",
            p.row.line,
            p.start,
            p.end,
            q.t0,
            q.t1,
            q.bid,
            q.ask,
            implied,
            result.residuals.get(i).copied().unwrap_or(f64::NAN),
            system.approximate_rows[i],
        )
        .expect("write to string");
    }
    ctx.write("fit_report.csv", &report)?;

    let mut fwd = String::from("date,day,forward\n");
    for s in 0..=basis.last_tenor() {
        writeln!(fwd, "{},{s},{}", date.add_days(s as i32), curve.eval(s)?)
            .expect("write to string");
    }
    ctx.write("forward_curve.csv", &fwd)?;

    println!(
        "calibrated {} quotes on {date} ({}): objective {:.3e}, rank {}, iterations {}",
        quotes.len(),
        if args.mid { "mid" } else { "bid-ask" },
        result.objective,
        result.rank,
        result.iterations
    );
    if system.approximate_rows.iter().any(|&a| a) {
        println!("one-month quotes use the log-average approximation (flagged in fit_report.csv)");
    }
    Ok(())
}

// ---------------------------------------------------------------------- fit

#[derive(Debug, Clone)]
pub struct FitArgs {
    pub quotes: PathBuf,
    pub series: PathBuf,
}

const MIN_CURVE_DAYS: usize = 504;
const MIN_MACRO_MONTHS: usize = 120;

/// Month-end sampling of one column: last observation in each month, then
/// linear interpolation across months without one.
fn monthly(series: &SeriesFile, name: &str) -> CliResult<BTreeMap<i32, (Date, f64)>> {
    let mut last: BTreeMap<i32, (Date, f64)> = BTreeMap::new();
    for &(d, v) in series.get(name) {
        last.insert(d.month_index(), (d, v));
    }
    let points: Vec<(Date, f64)> = last.values().copied().collect();
    if points.len() < 2 {
        return Err(CliError::Domain(format!(
            "column {name} needs at least two months of data"
        )));
    }
    Ok(quarterly_to_monthly(&points)?
        .into_iter()
        .map(|(d, v)| (d.month_index(), (d, v)))
        .collect())
}

fn format_report(title: &str, labels: &[String], r: &EstimationReport) -> String {
    let d = labels.len();
    let mut s = String::new();
    let _ = writeln!(s, "== {title} ==");
    let _ = writeln!(s, "observations: {}", r.observations);
    let _ = writeln!(
        s,
        "equation, regressor, coefficient, std_error, p_value, pruned"
    );
    for i in 0..d {
        for j in 0..d {
            let _ = writeln!(
                s,
                "d{}, {}, {:.6e}, {:.3e}, {:.4}, {}",
                labels[i],
                labels[j],
                r.a[(i, j)],
                r.a_std_errors[(i, j)],
                r.p_values[(i, j)],
                r.pruned[i][j]
            );
        }
    }
    let _ = writeln!(s, "intercept (drift), std_error");
    for i in 0..d {
        let _ = writeln!(
            s,
            "d{}, {:.6e}, {:.3e}",
            labels[i], r.intercept[i], r.intercept_std_errors[i]
        );
    }
    let _ = writeln!(s, "residual covariance");
    for i in 0..d {
        let row: Vec<String> = (0..d)
            .map(|j| format!("{:.6e}", r.residual_covariance[(i, j)]))
            .collect();
        let _ = writeln!(s, "{}", row.join(", "));
    }
    let _ = writeln!(s, "eigenvalues of A + I");
    for z in &r.stationarity.eigenvalues {
        let _ = writeln!(s, "{:.6} {:+.6}i (modulus {:.6})", z.re, z.im, z.norm());
    }
    let _ = writeln!(
        s,
        "max modulus {:.6}{}",
        r.stationarity.max_modulus,
        if r.stationarity.unstable {
            " (UNSTABLE)"
        } else {
            ""
        }
    );
    if !r.rank_deficient.is_empty() {
        let eqs: Vec<&str> = r
            .rank_deficient
            .iter()
            .map(|&i| labels[i].as_str())
            .collect();
        let _ = writeln!(
            s,
            "rank-deficient designs (min-norm solution): {}",
            eqs.join(", ")
        );
    }
    if !r.zero_variance.is_empty() {
        let cols: Vec<&str> = r
            .zero_variance
            .iter()
            .map(|&j| labels[j].as_str())
            .collect();
        let _ = writeln!(
            s,
            "zero-variance regressors (coefficient held at zero): {}",
            cols.join(", ")
        );
    }
    s
}

pub fn fit(ctx: &Context, args: &FitArgs) -> CliResult<()> {
    let cfg = &ctx.config;
    let basis = cfg.basis()?;
    let shifts = cfg.shifts();
    let rows = ingest::read_quotes_file(&args.quotes)?;
    let series = ingest::read_series_file(&args.series)?;
    let mut notes: Vec<String> = Vec::new();

    let (sets, warnings) = ingest::quote_history(&rows, &basis, Some(&series))?;
    for w in &warnings {
        warn(w);
    }

    // curve factors
    let mut xs = Vec::with_capacity(sets.len());
    let mut last_day: Option<(Date, Vec<f64>, Vec<f64>)> = None;
    for (date, res) in daily_backfill(&sets, &basis) {
        let res = res.map_err(|e| dated(date, e))?;
        let l = series.as_of("L", date).ok_or_else(|| {
            CliError::Domain(format!("{date}: no policy rate on or before this date"))
        })?;
        let x = to_x(&res.coeffs, l, &shifts).map_err(|e| dated(date, e))?;
        xs.push(x.clone());
        last_day = Some((date, res.coeffs, x));
    }
    let Some((start, xi_start, x_start)) = last_day else {
        return Err(CliError::Domain("quote history has no usable days".into()));
    };
    if xs.len() < MIN_CURVE_DAYS {
        notes.push(format!(
            "curve history has {} days; at least {MIN_CURVE_DAYS} (two years) are recommended",
            xs.len()
        ));
    }
    let (curve_model, curve_report) = estimate(&xs, VarStructure::Diagonal, None)?;

    // macro factors
    let cols = [
        monthly(&series, "L")?,
        monthly(&series, "I")?,
        monthly(&series, "G")?,
    ];
    let mut ys = Vec::new();
    let mut last_month = None;
    for (idx, &(date, l)) in &cols[0] {
        let (Some(&(_, i)), Some(&(_, g))) = (cols[1].get(idx), cols[2].get(idx)) else {
            continue;
        };
        let y = to_y(l, i, g, shifts.policy).map_err(|e| dated(date, e))?;
        ys.push(y.to_vec());
        last_month = Some((date, y));
    }
    let Some((macro_date, y_start)) = last_month else {
        return Err(CliError::Domain("L, I and G share no month".into()));
    };
    if ys.len() < MIN_MACRO_MONTHS {
        notes.push(format!(
            "macro history has {} months; at least {MIN_MACRO_MONTHS} (ten years) are recommended",
            ys.len()
        ));
    }
    let (macro_model, macro_report) = estimate(&ys, VarStructure::Full, Some(cfg.fit.prune_p))?;
    if macro_report.stationarity.unstable {
        notes.push("macro model is not stationary; simulate will refuse it".into());
    }
    if curve_report.stationarity.unstable {
        notes.push("curve model is not stationary; simulate will refuse it".into());
    }
    if macro_date.month_index() != start.month_index() {
        notes.push(format!(
            "initial macro state taken from {macro_date}, curve state from {start}"
        ));
    }
    for n in &notes {
        warn(n);
    }

    let artifact = ModelArtifact {
        start,
        models: sofr_core::scenario::FactorModels {
            macro_model,
            curve_model,
            shifts,
            basis: basis.clone(),
        },
        initial: sofr_core::scenario::InitialState {
            y: y_start,
            x: x_start,
        },
        initial_xi: xi_start,
        diagnostics: notes.clone(),
    };
    artifact.save(&ctx.out("model.json"))?;

    let macro_labels = vec!["y1".to_string(), "y2".into(), "y3".into()];
    let curve_labels: Vec<String> = (1..=basis.len()).map(|k| format!("x{k}")).collect();
    let mut text = format_report("macro (monthly, full)", &macro_labels, &macro_report);
    text.push('\n');
    text.push_str(&format_report(
        "curve (daily, diagonal)",
        &curve_labels,
        &curve_report,
    ));
    if !notes.is_empty() {
        text.push_str("\n== notes ==\n");
        for n in &notes {
            text.push_str(n);
            text.push('\n');
        }
    }
    ctx.write("fit_report.txt", &text)?;
    println!(
        "fitted curve model on {} days and macro model on {} months; start {start}",
        xs.len(),
        ys.len()
    );
    Ok(())
}

// ----------------------------------------------------------------- simulate

#[derive(Debug, Clone, Default)]
pub struct SimulateArgs {
    pub model: Option<PathBuf>,
    pub scenarios: Option<usize>,
    pub extract: Option<usize>,
}

fn load_instruments(cfg: &AppConfig) -> CliResult<Vec<DerivativeSpec>> {
    match &cfg.pricing.instruments {
        Some(p) => read_instruments(p),
        None => Ok(reference::instruments()),
    }
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct InstrumentFile {
    instrument: Vec<DerivativeSpec>,
}

/// `[[instrument]]` tables with `id`, `kind`, `multiplier` and the fields of
/// the kind.
pub fn read_instruments(path: &Path) -> CliResult<Vec<DerivativeSpec>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: InstrumentFile = toml::from_str(&text)?;
    for spec in &file.instrument {
        spec.validate()?;
    }
    Ok(file.instrument)
}

fn meetings(cfg: &AppConfig) -> CliResult<Option<Schedule>> {
    let Some(path) = &cfg.simulation.meetings else {
        return Ok(None);
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(Some(Schedule::new(
        parse_date_list(&text)?,
        ScheduleKind::Fomc,
    )?))
}

fn simulation_config(
    cfg: &AppConfig,
    start: Date,
    scenarios: usize,
    horizon: u32,
    seed: u64,
    curve_days: CurveDays,
) -> CliResult<SimulationConfig> {
    let s = &cfg.simulation;
    let mut sc = SimulationConfig::new(scenarios, start, horizon, seed);
    sc.antithetic = s.antithetic;
    sc.policy_rounding = s.policy_rounding;
    sc.meetings = meetings(cfg)?;
    sc.curve_days = curve_days;
    Ok(sc)
}

/// Model with the configured median views applied, if enabled.
fn steered(
    cfg: &AppConfig,
    artifact: &ModelArtifact,
    horizon: u32,
) -> CliResult<sofr_core::scenario::FactorModels> {
    if !cfg.views.enabled {
        return Ok(artifact.models.clone());
    }
    Ok(apply_views(
        &artifact.models,
        &artifact.initial,
        &cfg.views.views(),
        &artifact.initial_curve()?,
        artifact.start,
        horizon,
    )?)
}

pub fn simulate(ctx: &Context, args: &SimulateArgs) -> CliResult<()> {
    let cfg = &ctx.config;
    let artifact = ModelArtifact::load_or_reference(args.model.as_deref(), cfg)?;
    let horizon = cfg.simulation.horizon_days;
    let n = args.scenarios.unwrap_or(cfg.simulation.scenarios);

    let curve_days = match &cfg.simulation.curve_days {
        CurveDays::None => {
            let mut days: Vec<u32> = load_instruments(cfg)?
                .iter()
                .filter_map(|s| s.curve_day())
                .filter(|&d| d <= horizon)
                .collect();
            days.sort_unstable();
            days.dedup();
            if days.is_empty() {
                CurveDays::None
            } else {
                CurveDays::List(days)
            }
        }
        other => other.clone(),
    };
    let models = steered(cfg, &artifact, horizon)?;
    let sc = simulation_config(cfg, artifact.start, n, horizon, ctx.seed(), curve_days)?;
    let engine = Engine::new(models, artifact.initial.clone(), sc)?;
    let set = match ctx.threads {
        Some(t) => engine.run_with_threads(t)?,
        None => engine.run(),
    };

    let bin = ctx.out("scenarios.bin");
    let mut w = create(&bin)?;
    set.write_binary(&mut w)?;
    w.flush().map_err(|e| CliError::io(&bin, e))?;

    let mut variables = vec![
        Variable::Policy,
        Variable::Inflation,
        Variable::Growth,
        Variable::Sofr,
    ];
    if !set.meta().curve_days.is_empty() {
        variables.extend((0..set.meta().k()).map(Variable::Xi));
    }
    if set.len() < 100 {
        warn(&format!(
            "{} scenarios are too few for quantile bands; none written",
            set.len()
        ));
    } else {
        for v in variables {
            let bands = quantile_bands(&set, v, &cfg.simulation.band_levels)?;
            ctx.write(&format!("bands_{}.csv", v.name()), &bands.to_csv())?;
        }
    }
    if let Some(k) = args.extract {
        let path = ctx.out("scenario_extract.csv");
        let mut w = create(&path)?;
        set.write_csv(&mut w, Some(k))?;
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    println!(
        "simulated {} scenarios over {horizon} days from {} (seed {})",
        set.len(),
        artifact.start,
        ctx.seed()
    );
    Ok(())
}

// -------------------------------------------------------------------- price

#[derive(Debug, Clone, Default)]
pub struct PriceArgs {
    pub scenarios: Option<PathBuf>,
    pub instruments: Option<PathBuf>,
}

/// Equal-width histogram rows `id,lower,upper,count,density`.
fn histogram(id: &str, values: &[f64], bins: usize, out: &mut String) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = values.len() as f64;
    if !(hi > lo) || bins <= 1 {
        let _ = writeln!(out, "{id},{lo},{hi},{},{}", values.len(), f64::NAN);
        return;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    for (b, c) in counts.iter().enumerate() {
        let a = lo + b as f64 * width;
        let _ = writeln!(
            out,
            "{id},{a},{},{c},{}",
            a + width,
            *c as f64 / (n * width)
        );
    }
}

pub fn price(ctx: &Context, args: &PriceArgs) -> CliResult<()> {
    let cfg = &ctx.config;
    let path = args
        .scenarios
        .clone()
        .unwrap_or_else(|| ctx.out("scenarios.bin"));
    let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
    let set = ScenarioSet::read_binary(BufReader::new(file))?;
    let instruments = match &args.instruments {
        Some(p) => read_instruments(p)?,
        None => load_instruments(cfg)?,
    };

    let mut rows = Vec::new();
    let mut hist = String::from("id,lower,upper,count,density\n");
    for spec in &instruments {
        let (payouts, rollovers) = payout_sample(spec, set.scenarios())?;
        histogram(&spec.id, &payouts, cfg.pricing.histogram_bins, &mut hist);
        for &rho in &cfg.pricing.rho {
            for &wealth in &cfg.pricing.wealth {
                rows.push(PriceRow {
                    id: spec.id.clone(),
                    rho,
                    wealth,
                    price: indifference_price(spec, &payouts, &rollovers, rho, wealth)?,
                });
            }
        }
    }
    ctx.write("prices.csv", &price_report_csv(&rows))?;
    ctx.write("payouts.csv", &hist)?;
    println!(
        "priced {} instruments on {} scenarios ({} rows)",
        instruments.len(),
        set.len(),
        rows.len()
    );
    Ok(())
}

// ---------------------------------------------------------------- check-arb

#[derive(Debug, Clone, Default)]
pub struct CheckArbArgs {
    pub model: Option<PathBuf>,
    pub t: u32,
    pub samples: Option<usize>,
    pub epsilon: Option<f64>,
    pub kind: Option<ArbKind>,
}

/// The next `j` quarterly reference periods starting on or after `from`, as
/// offsets from `start`.
pub fn quarterly_grid(start: Date, from: Date, j: usize) -> CliResult<Vec<(u32, u32)>> {
    let mut out = Vec::with_capacity(j);
    let mut idx = from.year() * 12 + from.month() as i32 - 1;
    while out.len() < j {
        let (y, m) = (idx.div_euclid(12), idx.rem_euclid(12) as u32 + 1);
        if m % 3 == 0 {
            let (s, e) = three_month_reference_period(y, m)?;
            if s >= from {
                out.push((start.days_until(s) as u32, start.days_until(e) as u32));
            }
        }
        idx += 1;
    }
    Ok(out)
}

pub fn check_arb(ctx: &Context, args: &CheckArbArgs) -> CliResult<()> {
    let cfg = &ctx.config;
    let a = &cfg.arbitrage;
    let artifact = ModelArtifact::load_or_reference(args.model.as_deref(), cfg)?;
    let t = args.t;
    let horizon = cfg.simulation.horizon_days.max(t + 1);
    let models = steered(cfg, &artifact, horizon)?;
    let sc = simulation_config(cfg, artifact.start, 2, horizon, ctx.seed(), CurveDays::None)?;
    let engine = Engine::new(models, artifact.initial.clone(), sc)?;
    let state = engine.state_at(0, t)?;

    let eps = args.epsilon.unwrap_or(a.epsilon);
    let m = args.samples.unwrap_or(a.samples);
    let kind = args.kind.unwrap_or(a.kind);
    let verdict = match kind {
        ArbKind::Futures => {
            let from = artifact.start.add_days(t as i32 + 1);
            let periods = quarterly_grid(artifact.start, from, a.periods)?;
            let grid = FuturesGrid::new(periods, artifact.models.basis.clone())?;
            check_futures_noarb(&engine, &state, &grid, eps, m)?
        }
        ArbKind::Zcb => check_zcb_noarb(&engine, &state, a.zcb_days, eps, m)?,
    };
    let row = VerdictRow {
        t,
        kind: match kind {
            ArbKind::Futures => CheckKind::Futures,
            ArbKind::Zcb => CheckKind::Zcb,
        },
        verdict,
        epsilon: eps,
    };
    ctx.write("verdict.csv", &verdict_csv(std::slice::from_ref(&row)))?;
    println!(
        "day {t}: {} (margin {:.3e}, {} draws)",
        row.verdict.status.as_str(),
        row.verdict.margin,
        row.verdict.samples
    );
    Ok(())
}
