//! Joint Monte Carlo simulation of the monthly macro factors and the daily
//! curve factors.
//!
//! Per scenario the macro model steps at every month-end, the policy rate `L`
//! is reset on meeting days to the latest monthly value, and the curve factors
//! step on every calendar day. The day's curve is `from_x(x_t, L_t)` and the
//! overnight rate is read off its first coefficient.
//!
//! Draws come from counter-based streams keyed by `(seed, pair)`, where a pair
//! is one scenario, or two antithetic scenarios sharing negated draws. Output
//! therefore does not depend on scheduling or thread count.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{Date, Schedule};
use crate::curve::{spot_from_forward, BasisFamily, BasisKind, CurveError, ForwardCurve};
use crate::pricing::RateScenario;
use crate::rng::NormalStream;
use crate::transforms::{
    from_x_into, policy_rate_from_y1, to_x, to_y, ShiftConfig, TransformError,
};
use crate::var::{median_path, median_path_drift, MedianTargets, TargetPoint, VarError, VarModel};

pub const MIN_BAND_SCENARIOS: usize = 100;

const MAGIC: &[u8; 8] = b"SOFRSCEN";
const FORMAT_VERSION: u32 = 1;

const STREAM_MACRO: u64 = 0;
const STREAM_CURVE: u64 = 1;
/// Streams from this index on are used for conditional one-day draws.
pub const STREAM_CONDITIONAL: u64 = 1 << 32;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("{model} model is not stable: max |eig(A+I)| = {max_modulus}")]
    UnstableModel { model: String, max_modulus: f64 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("need at least {needed} scenarios, got {got}")]
    TooFewScenarios { got: usize, needed: usize },
    #[error("malformed scenario file: {0}")]
    Format(String),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Var(#[from] VarError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Days on which whole curves are stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CurveDays {
    #[default]
    None,
    All,
    /// Day 0 and every multiple of the stride.
    Every(u32),
    List(Vec<u32>),
}

impl CurveDays {
    fn resolve(&self, horizon: u32) -> Vec<u32> {
        let mut days: Vec<u32> = match self {
            CurveDays::None => vec![],
            CurveDays::All => (0..=horizon).collect(),
            CurveDays::Every(k) => (0..=horizon).step_by((*k).max(1) as usize).collect(),
            CurveDays::List(v) => v.iter().copied().filter(|&d| d <= horizon).collect(),
        };
        days.sort_unstable();
        days.dedup();
        days
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub scenarios: usize,
    pub start: Date,
    pub horizon_days: u32,
    /// Days on which `L` may change; month-ends when absent.
    pub meetings: Option<Schedule>,
    pub seed: u64,
    pub antithetic: bool,
    /// Round `L` to this increment on meeting days.
    pub policy_rounding: Option<f64>,
    pub curve_days: CurveDays,
    pub record_sofr: bool,
    pub allow_unstable: bool,
}

impl SimulationConfig {
    pub fn new(scenarios: usize, start: Date, horizon_days: u32, seed: u64) -> Self {
        Self {
            scenarios,
            start,
            horizon_days,
            meetings: None,
            seed,
            antithetic: true,
            policy_rounding: None,
            curve_days: CurveDays::None,
            record_sofr: true,
            allow_unstable: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModels {
    pub macro_model: VarModel,
    pub curve_model: VarModel,
    pub shifts: ShiftConfig,
    pub basis: BasisFamily,
}

/// Starting point in model space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub y: [f64; 3],
    pub x: Vec<f64>,
}

impl InitialState {
    pub fn from_observables(
        policy: f64,
        inflation: f64,
        growth: f64,
        xi: &[f64],
        shifts: &ShiftConfig,
    ) -> Result<Self, TransformError> {
        Ok(Self {
            y: to_y(policy, inflation, growth, shifts.policy)?,
            x: to_x(xi, policy, shifts)?,
        })
    }

    pub fn policy(&self, shifts: &ShiftConfig) -> f64 {
        policy_rate_from_y1(self.y[0], shifts.policy)
    }
}

/// Long-run medians in observable units and the steering horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Views {
    /// `(L, I, G)`.
    pub macro_long_run: [f64; 3],
    pub xi_long_run: Vec<f64>,
    /// Keep the median short rate on the initial forward curve up to this day.
    pub anchor_days: u32,
    /// Relaxation window in months.
    pub macro_relaxation: usize,
    /// Relaxation window in days.
    pub curve_relaxation: usize,
}

impl Default for Views {
    fn default() -> Self {
        Self {
            macro_long_run: crate::reference::MACRO_LONG_RUN,
            xi_long_run: crate::reference::XI_LONG_RUN.to_vec(),
            anchor_days: 1825,
            macro_relaxation: 12,
            curve_relaxation: 360,
        }
    }
}

/// Month-end day offsets after `start`, up to `horizon` days.
pub fn month_end_days(start: Date, horizon: u32) -> Vec<u32> {
    let months = (horizon / 28 + 2) as usize;
    let schedule = Schedule::monthly(start, months).expect("month-ends are increasing");
    schedule
        .dates()
        .iter()
        .map(|d| start.days_until(*d))
        .filter(|&d| d > 0 && d as u32 <= horizon)
        .map(|d| d as u32)
        .collect()
}

/// Monthly `ln(L + cL)` targets keeping the median short forward on
/// `curve`: `L_h = F_0(d_h) + c1 - exp(m_x1(d_h))`.
pub fn sofr_anchor_targets(
    curve: &ForwardCurve,
    macro_days: &[u32],
    x1_median: &[f64],
    shifts: &ShiftConfig,
    anchor_days: u32,
) -> Result<Vec<TargetPoint>, VarError> {
    let mut out = Vec::new();
    for (h, &day) in macro_days.iter().enumerate() {
        if day > anchor_days {
            break;
        }
        let f = curve
            .eval(day.min(curve.cutoff()))
            .map_err(|e| VarError::TargetOutOfRange(e.to_string()))?;
        let m_x1 = *x1_median
            .get(day as usize)
            .ok_or_else(|| VarError::TargetOutOfRange(format!("no x1 median on day {day}")))?;
        let policy = f + shifts.curve[0] - m_x1.exp();
        let arg = policy + shifts.policy;
        if !(arg > 0.0) {
            return Err(VarError::TargetOutOfRange(format!(
                "policy target {policy} on day {day} below -cL"
            )));
        }
        out.push(TargetPoint {
            horizon: h + 1,
            component: 0,
            value: arg.ln(),
        });
    }
    Ok(out)
}

/// Replace both drift schedules so that medians follow `views`.
pub fn apply_views(
    models: &FactorModels,
    init: &InitialState,
    views: &Views,
    initial_curve: &ForwardCurve,
    start: Date,
    horizon_days: u32,
) -> Result<FactorModels, SimulationError> {
    let [l, i, g] = views.macro_long_run;
    let y_inf = to_y(l, i, g, models.shifts.policy)?;
    let x_inf = to_x(&views.xi_long_run, l, &models.shifts)?;

    let curve_targets = MedianTargets::asymptotic(x_inf, views.curve_relaxation);
    let curve_drift = median_path_drift(&models.curve_model, &curve_targets, &init.x)?;
    let (x_path, _) = median_path(&models.curve_model, &curve_targets, &init.x)?;
    let last = x_path
        .last()
        .expect("path starts at the initial state")
        .clone();
    let reach = horizon_days.max(views.anchor_days) as usize;
    let x1_median: Vec<f64> = (0..=reach)
        .map(|d| x_path.get(d).unwrap_or(&last)[0])
        .collect();

    let macro_days = month_end_days(start, horizon_days.max(views.anchor_days));
    let points = sofr_anchor_targets(
        initial_curve,
        &macro_days,
        &x1_median,
        &models.shifts,
        views.anchor_days,
    )?;
    let macro_targets = MedianTargets {
        points,
        asymptotic: Some(y_inf.to_vec()),
        relaxation: views.macro_relaxation,
    };
    let macro_drift = median_path_drift(&models.macro_model, &macro_targets, &init.y)?;
    Ok(FactorModels {
        macro_model: models.macro_model.clone().with_drift(macro_drift)?,
        curve_model: models.curve_model.clone().with_drift(curve_drift)?,
        shifts: models.shifts.clone(),
        basis: models.basis.clone(),
    })
}

/// Layout and calendar shared by every scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioMeta {
    pub start: Date,
    pub horizon_days: u32,
    pub basis: BasisFamily,
    pub policy_shift: f64,
    pub initial_policy: f64,
    pub curve_days: Vec<u32>,
    pub macro_days: Vec<u32>,
    pub meeting_days: Vec<u32>,
    pub record_sofr: bool,
    pub seed: u64,
    pub antithetic: bool,
}

impl ScenarioMeta {
    pub fn k(&self) -> usize {
        self.basis.len()
    }

    fn sofr_len(&self) -> usize {
        if self.record_sofr {
            self.horizon_days as usize + 1
        } else {
            0
        }
    }

    fn curve_offset(&self) -> usize {
        0
    }

    fn sofr_offset(&self) -> usize {
        self.curve_days.len() * self.k()
    }

    fn macro_offset(&self) -> usize {
        self.sofr_offset() + self.sofr_len()
    }

    fn meeting_offset(&self) -> usize {
        self.macro_offset() + 3 * self.macro_days.len()
    }

    /// Floats per scenario.
    pub fn block_len(&self) -> usize {
        self.meeting_offset() + self.meeting_days.len()
    }
}

/// Simulated scenarios stored scenario-major in one buffer.
///
/// Per scenario: curve coefficients on the recorded curve days, the daily
/// overnight rate (if recorded), `(L, I, G)` at each month-end where `L` is
/// the monthly model value, and the effective `L` after each meeting.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    meta: ScenarioMeta,
    n: usize,
    data: Vec<f64>,
}

impl ScenarioSet {
    pub fn meta(&self) -> &ScenarioMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn block(&self, i: usize) -> &[f64] {
        let b = self.meta.block_len();
        &self.data[i * b..(i + 1) * b]
    }

    pub fn scenario(&self, i: usize) -> ScenarioRef<'_> {
        assert!(i < self.n, "scenario index out of range");
        ScenarioRef {
            set: self,
            index: i,
        }
    }

    pub fn scenarios(&self) -> impl Iterator<Item = ScenarioRef<'_>> + '_ {
        (0..self.n).map(move |i| self.scenario(i))
    }

    /// Curve coefficients on a recorded curve day.
    pub fn xi(&self, i: usize, day: u32) -> Option<&[f64]> {
        let slot = self.meta.curve_days.binary_search(&day).ok()?;
        let k = self.meta.k();
        let off = self.meta.curve_offset() + slot * k;
        Some(&self.block(i)[off..off + k])
    }

    pub fn sofr_path(&self, i: usize) -> &[f64] {
        let off = self.meta.sofr_offset();
        &self.block(i)[off..off + self.meta.sofr_len()]
    }

    /// `(L, I, G)` after macro step `h` (0-based).
    pub fn macro_values(&self, i: usize, h: usize) -> [f64; 3] {
        let off = self.meta.macro_offset() + 3 * h;
        let b = self.block(i);
        [b[off], b[off + 1], b[off + 2]]
    }

    /// Effective `L` after each meeting.
    pub fn meeting_policy(&self, i: usize) -> &[f64] {
        let off = self.meta.meeting_offset();
        &self.block(i)[off..off + self.meta.meeting_days.len()]
    }

    /// Effective `L` on `day`.
    pub fn policy_on_day(&self, i: usize, day: u32) -> f64 {
        let m = self.meta.meeting_days.partition_point(|&d| d <= day);
        if m == 0 {
            self.meta.initial_policy
        } else {
            self.meeting_policy(i)[m - 1]
        }
    }

    /// Values of `variable` for scenario `i` on each of the variable's days.
    pub fn series(&self, i: usize, variable: Variable) -> Vec<f64> {
        let days = self.days_of(variable);
        match variable {
            Variable::Policy => days.iter().map(|&d| self.policy_on_day(i, d)).collect(),
            Variable::Inflation => (0..days.len())
                .map(|h| self.macro_values(i, h)[1])
                .collect(),
            Variable::Growth => (0..days.len())
                .map(|h| self.macro_values(i, h)[2])
                .collect(),
            Variable::Sofr => self.sofr_path(i).to_vec(),
            Variable::Xi(k) => days
                .iter()
                .map(|&d| self.xi(i, d).expect("recorded")[k])
                .collect(),
        }
    }

    /// Day offsets on which `variable` is available.
    pub fn days_of(&self, variable: Variable) -> Vec<u32> {
        match variable {
            Variable::Policy | Variable::Inflation | Variable::Growth => {
                self.meta.macro_days.clone()
            }
            Variable::Sofr => (0..self.meta.sofr_len() as u32).collect(),
            Variable::Xi(_) => self.meta.curve_days.clone(),
        }
    }

    /// Long-format CSV `scenario,date,variable,value` for the first `limit`
    /// scenarios.
    pub fn write_csv<W: Write>(
        &self,
        mut w: W,
        limit: Option<usize>,
    ) -> Result<(), SimulationError> {
        writeln!(w, "scenario,date,variable,value")?;
        let n = limit.unwrap_or(self.n).min(self.n);
        let m = &self.meta;
        for i in 0..n {
            for (h, &d) in m.macro_days.iter().enumerate() {
                let date = m.start.add_days(d as i32);
                let v = self.macro_values(i, h);
                writeln!(w, "{i},{date},L_monthly,{}", v[0])?;
                writeln!(w, "{i},{date},I,{}", v[1])?;
                writeln!(w, "{i},{date},G,{}", v[2])?;
            }
            for (j, &d) in m.meeting_days.iter().enumerate() {
                writeln!(
                    w,
                    "{i},{},L,{}",
                    m.start.add_days(d as i32),
                    self.meeting_policy(i)[j]
                )?;
            }
            for (d, r) in self.sofr_path(i).iter().enumerate() {
                writeln!(w, "{i},{},SOFR,{r}", m.start.add_days(d as i32))?;
            }
            for &d in &m.curve_days {
                let date = m.start.add_days(d as i32);
                for (k, v) in self.xi(i, d).expect("recorded").iter().enumerate() {
                    writeln!(w, "{i},{date},xi{},{v}", k + 1)?;
                }
            }
        }
        Ok(())
    }

    /// Binary layout, all integers and floats little-endian:
    ///
    /// ```text
    /// magic "SOFRSCEN" | version u32
    /// N, days, K, n_curve_days, n_macro, n_meetings, seed, flags : u64
    /// start (days since 1970-01-01) i32 | basis kind u32
    /// policy shift f64 | initial L f64
    /// tenors K x u32 | curve days | macro days | meeting days : u32
    /// N x block f64, scenario-major
    /// ```
    ///
    /// `days` is the horizon in days; flags bit 0 marks antithetic pairs and
    /// bit 1 a recorded daily overnight rate.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), SimulationError> {
        let m = &self.meta;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        let flags = (m.antithetic as u64) | ((m.record_sofr as u64) << 1);
        for v in [
            self.n as u64,
            m.horizon_days as u64,
            m.k() as u64,
            m.curve_days.len() as u64,
            m.macro_days.len() as u64,
            m.meeting_days.len() as u64,
            m.seed,
            flags,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&m.start.offset().to_le_bytes())?;
        let kind: u32 = match m.basis.kind() {
            BasisKind::PiecewiseConstant => 0,
            BasisKind::PiecewiseLinear => 1,
        };
        w.write_all(&kind.to_le_bytes())?;
        w.write_all(&m.policy_shift.to_le_bytes())?;
        w.write_all(&m.initial_policy.to_le_bytes())?;
        for list in [
            m.basis.tenors(),
            &m.curve_days,
            &m.macro_days,
            &m.meeting_days,
        ] {
            for v in list {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        let mut buf = Vec::with_capacity(8 * m.block_len());
        for i in 0..self.n {
            buf.clear();
            for v in self.block(i) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, SimulationError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SimulationError::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(SimulationError::Format(format!(
                "unsupported version {version}"
            )));
        }
        let mut h = [0u64; 8];
        for v in &mut h {
            *v = read_u64(&mut r)?;
        }
        let [n, days, k, n_curve, n_macro, n_meet, seed, flags] = h;
        let start = Date::from_offset(read_i32(&mut r)?);
        let kind = match read_u32(&mut r)? {
            0 => BasisKind::PiecewiseConstant,
            1 => BasisKind::PiecewiseLinear,
            other => return Err(SimulationError::Format(format!("basis kind {other}"))),
        };
        let policy_shift = read_f64(&mut r)?;
        let initial_policy = read_f64(&mut r)?;
        let mut list = |len: u64| -> Result<Vec<u32>, SimulationError> {
            (0..len).map(|_| Ok(read_u32(&mut r)?)).collect()
        };
        let tenors = list(k)?;
        let curve_days = list(n_curve)?;
        let macro_days = list(n_macro)?;
        let meeting_days = list(n_meet)?;
        let basis = BasisFamily::new(kind, tenors)?;
        let meta = ScenarioMeta {
            start,
            horizon_days: u32::try_from(days)
                .map_err(|_| SimulationError::Format("horizon".into()))?,
            basis,
            policy_shift,
            initial_policy,
            curve_days,
            macro_days,
            meeting_days,
            record_sofr: flags & 2 != 0,
            seed,
            antithetic: flags & 1 != 0,
        };
        let total = (n as usize)
            .checked_mul(meta.block_len())
            .ok_or_else(|| SimulationError::Format("size overflow".into()))?;
        let mut bytes = vec![0u8; total * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self {
            meta,
            n: n as usize,
            data,
        })
    }
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_i32<R: Read>(r: &mut R) -> std::io::Result<i32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(i32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// One scenario of a [`ScenarioSet`].
#[derive(Debug, Clone, Copy)]
pub struct ScenarioRef<'a> {
    set: &'a ScenarioSet,
    index: usize,
}

impl ScenarioRef<'_> {
    pub fn index(&self) -> usize {
        self.index
    }
}

impl RateScenario for ScenarioRef<'_> {
    fn last_day(&self) -> u32 {
        if self.set.meta.record_sofr {
            self.set.meta.horizon_days
        } else {
            0
        }
    }

    fn sofr(&self, day: u32) -> Option<f64> {
        self.set.sofr_path(self.index).get(day as usize).copied()
    }

    fn curve(&self, day: u32) -> Option<ForwardCurve> {
        let xi = self.set.xi(self.index, day)?;
        ForwardCurve::new(self.set.meta.basis.clone(), xi.to_vec())
            .ok()
            .map(|c| c.with_date(self.set.meta.start.add_days(day as i32)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variable {
    Policy,
    Inflation,
    Growth,
    Sofr,
    Xi(usize),
}

impl Variable {
    pub fn name(&self) -> String {
        match self {
            Variable::Policy => "L".into(),
            Variable::Inflation => "I".into(),
            Variable::Growth => "G".into(),
            Variable::Sofr => "SOFR".into(),
            Variable::Xi(k) => format!("xi{}", k + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub level: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBands {
    pub variable: String,
    pub dates: Vec<Date>,
    pub median: Vec<f64>,
    pub bands: Vec<Band>,
}

impl QuantileBands {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,median");
        for b in &self.bands {
            out.push_str(&format!(",lower_{0},upper_{0}", b.level));
        }
        out.push('\n');
        for (t, d) in self.dates.iter().enumerate() {
            out.push_str(&format!("{d},{}", self.median[t]));
            for b in &self.bands {
                out.push_str(&format!(",{},{}", b.lower[t], b.upper[t]));
            }
            out.push('\n');
        }
        out
    }
}

/// Quantile of sorted data with linear interpolation between order
/// statistics at position `(n - 1) p`.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median and central bands at each confidence `level` (e.g. 0.95 gives the
/// 2.5% and 97.5% quantiles).
pub fn quantile_bands(
    set: &ScenarioSet,
    variable: Variable,
    levels: &[f64],
) -> Result<QuantileBands, SimulationError> {
    if set.len() < MIN_BAND_SCENARIOS {
        return Err(SimulationError::TooFewScenarios {
            got: set.len(),
            needed: MIN_BAND_SCENARIOS,
        });
    }
    if let Variable::Xi(k) = variable {
        if k >= set.meta.k() {
            return Err(SimulationError::InvalidConfig(format!(
                "no coefficient {k}"
            )));
        }
    }
    if levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(SimulationError::InvalidConfig(
            "levels must lie in (0, 1)".into(),
        ));
    }
    let days = set.days_of(variable);
    let columns: Vec<Vec<f64>> = (0..set.len()).map(|i| set.series(i, variable)).collect();
    let per_day: Vec<(f64, Vec<(f64, f64)>)> = (0..days.len())
        .into_par_iter()
        .map(|t| {
            let mut v: Vec<f64> = columns.iter().map(|c| c[t]).collect();
            v.sort_by(|a, b| a.total_cmp(b));
            let med = empirical_quantile(&v, 0.5);
            let b = levels
                .iter()
                .map(|l| {
                    (
                        empirical_quantile(&v, (1.0 - l) / 2.0),
                        empirical_quantile(&v, (1.0 + l) / 2.0),
                    )
                })
                .collect();
            (med, b)
        })
        .collect();
    let bands = levels
        .iter()
        .enumerate()
        .map(|(j, &level)| Band {
            level,
            lower: per_day.iter().map(|p| p.1[j].0).collect(),
            upper: per_day.iter().map(|p| p.1[j].1).collect(),
        })
        .collect();
    Ok(QuantileBands {
        variable: variable.name(),
        dates: days
            .iter()
            .map(|&d| set.meta.start.add_days(d as i32))
            .collect(),
        median: per_day.iter().map(|p| p.0).collect(),
        bands,
    })
}

/// Model state at the end of a day.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    pub day: u32,
    pub y: [f64; 3],
    pub x: Vec<f64>,
    /// Effective `L`.
    pub policy: f64,
    /// Latest monthly model value of `L`.
    pub monthly_policy: f64,
    macro_step: usize,
    meeting: usize,
}

/// Daily values of one scenario, for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTrace {
    pub x: Vec<Vec<f64>>,
    pub xi: Vec<Vec<f64>>,
    pub policy: Vec<f64>,
    pub sofr: Vec<f64>,
    pub y: Vec<[f64; 3]>,
}

trait Sink {
    fn macro_step(&mut self, h: usize, state: &EngineState);
    fn meeting(&mut self, m: usize, policy: f64);
    fn day(&mut self, day: u32, x: &[f64], policy: f64);
}

struct BlockSink<'a> {
    engine: &'a Engine,
    block: &'a mut [f64],
}

impl Sink for BlockSink<'_> {
    fn macro_step(&mut self, h: usize, s: &EngineState) {
        let off = self.engine.meta.macro_offset() + 3 * h;
        self.block[off] = s.monthly_policy;
        self.block[off + 1] = s.y[1];
        self.block[off + 2] = s.y[2];
    }

    fn meeting(&mut self, m: usize, policy: f64) {
        self.block[self.engine.meta.meeting_offset() + m] = policy;
    }

    #[inline]
    fn day(&mut self, day: u32, x: &[f64], policy: f64) {
        let e = self.engine;
        if e.meta.record_sofr {
            let xi1 = x[0].exp() + policy - e.shifts[0];
            self.block[e.meta.sofr_offset() + day as usize] = spot_from_forward(xi1);
        }
        let slot = e.curve_slot[day as usize];
        if slot != u32::MAX {
            let k = e.k;
            let off = e.meta.curve_offset() + slot as usize * k;
            from_x_into(x, policy, &e.shifts, &mut self.block[off..off + k]);
        }
    }
}

struct TraceSink {
    trace: ScenarioTrace,
    shifts: Vec<f64>,
}

impl Sink for TraceSink {
    fn macro_step(&mut self, _h: usize, s: &EngineState) {
        self.trace.y.push(s.y);
    }

    fn meeting(&mut self, _m: usize, _policy: f64) {}

    fn day(&mut self, _day: u32, x: &[f64], policy: f64) {
        let mut xi = vec![0.0; x.len()];
        from_x_into(x, policy, &self.shifts, &mut xi);
        self.trace.sofr.push(spot_from_forward(xi[0]));
        self.trace.x.push(x.to_vec());
        self.trace.xi.push(xi);
        self.trace.policy.push(policy);
    }
}

/// Prepared simulation: models, initial state, calendar and storage layout.
#[derive(Debug, Clone)]
pub struct Engine {
    models: FactorModels,
    init: InitialState,
    cfg: SimulationConfig,
    meta: ScenarioMeta,
    shifts: Vec<f64>,
    k: usize,
    /// Per day: index of the curve slot, `u32::MAX` when not recorded.
    curve_slot: Vec<u32>,
    /// Per day: 1 if a macro step happens, 2 if a meeting, 3 both.
    events: Vec<u8>,
    macro_chol: [[f64; 3]; 3],
    curve_chol: Vec<f64>,
    curve_a: Vec<f64>,
    curve_diagonal: bool,
}

const EVENT_MACRO: u8 = 1;
const EVENT_MEETING: u8 = 2;

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    (0..r)
        .flat_map(|i| (0..c).map(move |j| m[(i, j)]))
        .collect()
}

impl Engine {
    pub fn new(
        models: FactorModels,
        init: InitialState,
        cfg: SimulationConfig,
    ) -> Result<Self, SimulationError> {
        let k = models.basis.len();
        if cfg.scenarios == 0 {
            return Err(SimulationError::InvalidConfig(
                "need at least one scenario".into(),
            ));
        }
        if cfg.antithetic && cfg.scenarios % 2 != 0 {
            return Err(SimulationError::InvalidConfig(
                "antithetic sampling needs an even scenario count".into(),
            ));
        }
        if models.macro_model.dim() != 3 {
            return Err(SimulationError::InvalidConfig(
                "macro model must have dimension 3".into(),
            ));
        }
        if models.curve_model.dim() != k || models.shifts.len() != k || init.x.len() != k {
            return Err(SimulationError::InvalidConfig(format!(
                "curve model, shifts, initial state and basis must all have {k} components"
            )));
        }
        if let Some(inc) = cfg.policy_rounding {
            if !(inc > 0.0 && inc.is_finite()) {
                return Err(SimulationError::InvalidConfig(
                    "rounding increment must be positive".into(),
                ));
            }
        }
        if !cfg.allow_unstable {
            for (name, m) in [
                ("macro", &models.macro_model),
                ("curve", &models.curve_model),
            ] {
                let s = m.stationarity();
                if s.unstable {
                    return Err(SimulationError::UnstableModel {
                        model: name.into(),
                        max_modulus: s.max_modulus,
                    });
                }
            }
        }
        if init.x.iter().chain(init.y.iter()).any(|v| !v.is_finite()) {
            return Err(SimulationError::InvalidConfig(
                "non-finite initial state".into(),
            ));
        }
        let horizon = cfg.horizon_days;
        let end = cfg.start.add_days(horizon as i32);
        let macro_days = month_end_days(cfg.start, horizon);
        let meeting_days: Vec<u32> = match &cfg.meetings {
            None => macro_days.clone(),
            Some(s) => s
                .window(cfg.start, end)
                .iter()
                .map(|d| cfg.start.days_until(*d) as u32)
                .collect(),
        };
        let curve_days = cfg.curve_days.resolve(horizon);
        let mut curve_slot = vec![u32::MAX; horizon as usize + 1];
        for (slot, &d) in curve_days.iter().enumerate() {
            curve_slot[d as usize] = slot as u32;
        }
        let mut events = vec![0u8; horizon as usize + 1];
        for &d in &macro_days {
            events[d as usize] |= EVENT_MACRO;
        }
        for &d in &meeting_days {
            events[d as usize] |= EVENT_MEETING;
        }
        let mc = models.macro_model.cholesky();
        let macro_chol = [
            [mc[(0, 0)], mc[(0, 1)], mc[(0, 2)]],
            [mc[(1, 0)], mc[(1, 1)], mc[(1, 2)]],
            [mc[(2, 0)], mc[(2, 1)], mc[(2, 2)]],
        ];
        let curve_a = models.curve_model.a();
        let curve_diagonal = (0..k).all(|i| (0..k).all(|j| i == j || curve_a[(i, j)] == 0.0));
        let meta = ScenarioMeta {
            start: cfg.start,
            horizon_days: horizon,
            basis: models.basis.clone(),
            policy_shift: models.shifts.policy,
            initial_policy: init.policy(&models.shifts),
            curve_days,
            macro_days,
            meeting_days,
            record_sofr: cfg.record_sofr,
            seed: cfg.seed,
            antithetic: cfg.antithetic,
        };
        Ok(Self {
            shifts: models.shifts.curve.clone(),
            k,
            curve_slot,
            events,
            macro_chol,
            curve_chol: row_major(models.curve_model.cholesky()),
            curve_a: row_major(curve_a),
            curve_diagonal,
            meta,
            models,
            init,
            cfg,
        })
    }

    pub fn meta(&self) -> &ScenarioMeta {
        &self.meta
    }

    pub fn models(&self) -> &FactorModels {
        &self.models
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.cfg
    }

    fn pair_of(&self, scenario: usize) -> (u64, f64) {
        if self.cfg.antithetic {
            (
                (scenario / 2) as u64,
                if scenario % 2 == 0 { 1.0 } else { -1.0 },
            )
        } else {
            (scenario as u64, 1.0)
        }
    }

    pub fn initial_state(&self) -> EngineState {
        let policy = self.init.policy(&self.models.shifts);
        EngineState {
            day: 0,
            y: self.init.y,
            x: self.init.x.clone(),
            policy,
            monthly_policy: policy,
            macro_step: 0,
            meeting: 0,
        }
    }

    /// Advance `s` by one day. `z_macro` is used only on macro-step days.
    #[inline]
    fn step_day<S: Sink>(
        &self,
        s: &mut EngineState,
        z_macro: &[f64],
        z_curve: &[f64],
        sign: f64,
        scratch: &mut [f64],
        sink: &mut S,
    ) {
        let day = s.day + 1;
        let ev = self.events.get(day as usize).copied().unwrap_or(0);
        if ev & EVENT_MACRO != 0 {
            s.macro_step += 1;
            let c = &self.macro_chol;
            let mut eps = [0.0; 3];
            for (i, e) in eps.iter_mut().enumerate() {
                *e = sign * (c[i][0] * z_macro[0] + c[i][1] * z_macro[1] + c[i][2] * z_macro[2]);
            }
            let y = s.y;
            self.models
                .macro_model
                .step_into(&y, s.macro_step, &eps, &mut s.y);
            s.monthly_policy = policy_rate_from_y1(s.y[0], self.models.shifts.policy);
            sink.macro_step(s.macro_step - 1, s);
        }
        if ev & EVENT_MEETING != 0 {
            s.policy = match self.cfg.policy_rounding {
                Some(inc) => (s.monthly_policy / inc).round() * inc,
                None => s.monthly_policy,
            };
            sink.meeting(s.meeting, s.policy);
            s.meeting += 1;
        }
        let k = self.k;
        let drift = self.models.curve_model.drift().at(day as usize);
        let (eps, next) = scratch.split_at_mut(k);
        for i in 0..k {
            let row = &self.curve_chol[i * k..i * k + i + 1];
            let mut e = 0.0;
            for (l, z) in row.iter().zip(z_curve) {
                e += l * z;
            }
            eps[i] = sign * e;
        }
        if self.curve_diagonal {
            for i in 0..k {
                s.x[i] += self.curve_a[i * k + i] * s.x[i] + drift[i] + eps[i];
            }
        } else {
            for i in 0..k {
                let row = &self.curve_a[i * k..(i + 1) * k];
                let ax: f64 = row.iter().zip(&s.x).map(|(a, x)| a * x).sum();
                next[i] = s.x[i] + ax + drift[i] + eps[i];
            }
            s.x.copy_from_slice(&next[..k]);
        }
        s.day = day;
        sink.day(day, &s.x, s.policy);
    }

    fn draw_pair(&self, pair: u64, z_macro: &mut [f64], z_curve: &mut [f64]) {
        NormalStream::new(self.cfg.seed, pair, STREAM_MACRO).fill(z_macro);
        NormalStream::new(self.cfg.seed, pair, STREAM_CURVE).fill(z_curve);
    }

    fn run_path<S: Sink>(
        &self,
        z_macro: &[f64],
        z_curve: &[f64],
        sign: f64,
        until: u32,
        scratch: &mut [f64],
        sink: &mut S,
    ) -> EngineState {
        let mut s = self.initial_state();
        sink.day(0, &s.x, s.policy);
        let k = self.k;
        for day in 1..=until {
            let zc = &z_curve[(day as usize - 1) * k..day as usize * k];
            let h = s.macro_step;
            let zm = z_macro.get(3 * h..3 * h + 3).unwrap_or(&[0.0; 3]);
            self.step_day(&mut s, zm, zc, sign, scratch, sink);
        }
        s
    }

    /// Simulate all scenarios on the current rayon pool.
    pub fn run(&self) -> ScenarioSet {
        let block = self.meta.block_len();
        let n = self.cfg.scenarios;
        let per_pair = if self.cfg.antithetic { 2 } else { 1 };
        let mut data = vec![0.0; n * block];
        let horizon = self.meta.horizon_days as usize;
        let n_macro = self.meta.macro_days.len();
        let k = self.k;
        let body = |scratch: &mut (Vec<f64>, Vec<f64>, Vec<f64>),
                    (pair, chunk): (usize, &mut [f64])| {
            let (zm, zc, work) = scratch;
            self.draw_pair(pair as u64, zm, zc);
            for (j, out) in chunk.chunks_mut(block.max(1)).enumerate() {
                let sign = if j == 0 { 1.0 } else { -1.0 };
                let mut sink = BlockSink {
                    engine: self,
                    block: out,
                };
                self.run_path(zm, zc, sign, horizon as u32, work, &mut sink);
            }
        };
        let init = || {
            (
                vec![0.0; 3 * n_macro],
                vec![0.0; horizon * k],
                vec![0.0; 2 * k],
            )
        };
        if block == 0 {
            return ScenarioSet {
                meta: self.meta.clone(),
                n,
                data,
            };
        }
        data.par_chunks_mut(per_pair * block)
            .enumerate()
            .for_each_init(init, body);
        ScenarioSet {
            meta: self.meta.clone(),
            n,
            data,
        }
    }

    /// Simulate on a dedicated pool with `threads` workers.
    pub fn run_with_threads(&self, threads: usize) -> Result<ScenarioSet, SimulationError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| SimulationError::InvalidConfig(e.to_string()))?;
        Ok(pool.install(|| self.run()))
    }

    /// Full daily detail of one scenario, identical to the stored values.
    pub fn trace(&self, scenario: usize) -> ScenarioTrace {
        let (pair, sign) = self.pair_of(scenario);
        let horizon = self.meta.horizon_days as usize;
        let mut zm = vec![0.0; 3 * self.meta.macro_days.len()];
        let mut zc = vec![0.0; horizon * self.k];
        self.draw_pair(pair, &mut zm, &mut zc);
        let mut sink = TraceSink {
            trace: ScenarioTrace {
                x: vec![],
                xi: vec![],
                policy: vec![],
                sofr: vec![],
                y: vec![],
            },
            shifts: self.shifts.clone(),
        };
        let mut work = vec![0.0; 2 * self.k];
        self.run_path(&zm, &zc, sign, horizon as u32, &mut work, &mut sink);
        sink.trace
    }

    /// State of `scenario` at the end of `day`.
    pub fn state_at(&self, scenario: usize, day: u32) -> Result<EngineState, SimulationError> {
        if day > self.meta.horizon_days {
            return Err(SimulationError::InvalidConfig(format!(
                "day {day} beyond horizon {}",
                self.meta.horizon_days
            )));
        }
        let (pair, sign) = self.pair_of(scenario);
        let horizon = self.meta.horizon_days as usize;
        let mut zm = vec![0.0; 3 * self.meta.macro_days.len()];
        let mut zc = vec![0.0; horizon * self.k];
        self.draw_pair(pair, &mut zm, &mut zc);
        let mut work = vec![0.0; 2 * self.k];
        Ok(self.run_path(&zm, &zc, sign, day, &mut work, &mut NullSink))
    }

    /// One-day move from `state` with draws from conditional stream
    /// `stream`, independent of every scenario stream.
    pub fn advance(&self, state: &EngineState, stream: u64) -> EngineState {
        let mut draws = NormalStream::new(self.cfg.seed, u64::MAX, STREAM_CONDITIONAL + stream);
        let mut z = vec![0.0; 3 + self.k];
        draws.fill(&mut z);
        let mut s = state.clone();
        let mut work = vec![0.0; 2 * self.k];
        self.step_day(&mut s, &z[..3], &z[3..], 1.0, &mut work, &mut NullSink);
        s
    }

    /// Curve implied by a state.
    pub fn curve(&self, state: &EngineState) -> ForwardCurve {
        let mut xi = vec![0.0; self.k];
        from_x_into(&state.x, state.policy, &self.shifts, &mut xi);
        ForwardCurve::new(self.meta.basis.clone(), xi)
            .expect("coefficient count matches basis")
            .with_date(self.meta.start.add_days(state.day as i32))
    }
}

struct NullSink;

impl Sink for NullSink {
    fn macro_step(&mut self, _h: usize, _s: &EngineState) {}
    fn meeting(&mut self, _m: usize, _policy: f64) {}
    fn day(&mut self, _day: u32, _x: &[f64], _policy: f64) {}
}

/// Build the engine and simulate on the current rayon pool.
pub fn simulate(
    models: &FactorModels,
    init: &InitialState,
    cfg: &SimulationConfig,
) -> Result<ScenarioSet, SimulationError> {
    Ok(Engine::new(models.clone(), init.clone(), cfg.clone())?.run())
}
