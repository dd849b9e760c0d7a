//! TOML configuration. Every key is optional; missing keys fall back to the
//! reference parameter set, so an empty file (or no file) is a valid config.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sofr_core::arbitrage::DEFAULT_EPSILON;
use sofr_core::calendar::Date;
use sofr_core::curve::{BasisFamily, BasisKind};
use sofr_core::reference;
use sofr_core::scenario::{CurveDays, Views};
use sofr_core::transforms::ShiftConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub basis: BasisSection,
    pub shifts: ShiftSection,
    pub initial: InitialSection,
    pub views: ViewsSection,
    pub fit: FitSection,
    pub simulation: SimulationSection,
    pub pricing: PricingSection,
    pub arbitrage: ArbitrageSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisSection {
    pub kind: BasisKind,
    /// Day offsets of the tenor points.
    pub tenors: Vec<u32>,
}

impl Default for BasisSection {
    fn default() -> Self {
        Self {
            kind: BasisKind::PiecewiseLinear,
            tenors: reference::TENORS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftSection {
    pub curve: Vec<f64>,
    pub policy: f64,
}

impl Default for ShiftSection {
    fn default() -> Self {
        Self {
            curve: reference::SHIFTS.to_vec(),
            policy: reference::POLICY_SHIFT,
        }
    }
}

/// Observables at the simulation start, used when no fitted model is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub policy: f64,
    pub inflation: f64,
    pub growth: f64,
    pub xi: Vec<f64>,
}

impl Default for InitialSection {
    fn default() -> Self {
        let [policy, inflation, growth] = reference::MACRO_START;
        Self {
            policy,
            inflation,
            growth,
            xi: reference::XI_START.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewsSection {
    pub enabled: bool,
    /// Long-run `(L, I, G)`; `L` as a decimal, `I` and `G` in percent.
    pub macro_long_run: [f64; 3],
    pub xi_long_run: Vec<f64>,
    pub anchor_days: u32,
    pub macro_relaxation_months: usize,
    pub curve_relaxation_days: usize,
}

impl Default for ViewsSection {
    fn default() -> Self {
        let v = Views::default();
        Self {
            enabled: true,
            macro_long_run: v.macro_long_run,
            xi_long_run: v.xi_long_run,
            anchor_days: v.anchor_days,
            macro_relaxation_months: v.macro_relaxation,
            curve_relaxation_days: v.curve_relaxation,
        }
    }
}

impl ViewsSection {
    pub fn views(&self) -> Views {
        Views {
            macro_long_run: self.macro_long_run,
            xi_long_run: self.xi_long_run.clone(),
            anchor_days: self.anchor_days,
            macro_relaxation: self.macro_relaxation_months,
            curve_relaxation: self.curve_relaxation_days,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Macro coefficients with a p-value above this are pruned.
    pub prune_p: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        Self { prune_p: 0.10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub scenarios: usize,
    /// Start date when no fitted model supplies one.
    pub start: Date,
    pub horizon_days: u32,
    pub seed: u64,
    pub antithetic: bool,
    pub policy_rounding: Option<f64>,
    /// File with one meeting date per line; month-ends when absent.
    pub meetings: Option<PathBuf>,
    /// Extra days with stored curves, on top of those the instruments need.
    pub curve_days: CurveDays,
    /// Confidence levels of the emitted bands.
    pub band_levels: Vec<f64>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let start = reference::start_date();
        let end = Date::from_ymd(start.year() + 10, start.month(), 1)
            .expect("valid date")
            .month_end();
        Self {
            scenarios: 20_000,
            start,
            horizon_days: start.days_until(end) as u32,
            seed: 20240828,
            antithetic: true,
            policy_rounding: None,
            meetings: None,
            curve_days: CurveDays::None,
            band_levels: vec![0.5, 0.95],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PricingSection {
    pub rho: Vec<f64>,
    pub wealth: Vec<f64>,
    pub histogram_bins: usize,
    /// Instrument file; the reference instruments when absent.
    pub instruments: Option<PathBuf>,
}

impl Default for PricingSection {
    fn default() -> Self {
        Self {
            rho: (1..=10).map(|k| k as f64 * 1e-4).collect(),
            wealth: vec![0.0, 1e3, 1e4, 1e5],
            histogram_bins: 50,
            instruments: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ArbKind {
    #[default]
    Futures,
    Zcb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArbitrageSection {
    pub kind: ArbKind,
    pub epsilon: f64,
    pub samples: usize,
    /// Number of consecutive quarterly futures periods.
    pub periods: usize,
    /// Maturities in the zero-coupon check.
    pub zcb_days: usize,
}

impl Default for ArbitrageSection {
    fn default() -> Self {
        Self {
            kind: ArbKind::Futures,
            epsilon: DEFAULT_EPSILON,
            samples: 500,
            periods: 4,
            zcb_days: 5,
        }
    }
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: AppConfig = toml::from_str(&text)?;
        // relative paths inside the file are relative to the file
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.simulation.meetings, &mut cfg.pricing.instruments]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let k = self.basis.tenors.len();
        if self.basis.tenors.windows(2).any(|w| w[0] >= w[1]) || k == 0 {
            return Err(CliError::Config(
                "basis tenors must be strictly increasing".into(),
            ));
        }
        if self.shifts.curve.len() != k
            || self.initial.xi.len() != k
            || self.views.xi_long_run.len() != k
        {
            return Err(CliError::Config(format!(
                "shifts, initial xi and long-run xi need {k} entries, one per tenor"
            )));
        }
        if self
            .simulation
            .band_levels
            .iter()
            .any(|l| !(*l > 0.0 && *l < 1.0))
        {
            return Err(CliError::Config("band levels must lie in (0, 1)".into()));
        }
        if self.pricing.rho.iter().any(|r| !(*r > 0.0)) {
            return Err(CliError::Config("risk aversions must be positive".into()));
        }
        if !(self.fit.prune_p > 0.0 && self.fit.prune_p <= 1.0) {
            return Err(CliError::Config("prune_p must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn basis(&self) -> CliResult<BasisFamily> {
        Ok(BasisFamily::new(
            self.basis.kind,
            self.basis.tenors.clone(),
        )?)
    }

    pub fn shifts(&self) -> ShiftConfig {
        ShiftConfig::new(self.shifts.curve.clone(), self.shifts.policy)
    }
}
