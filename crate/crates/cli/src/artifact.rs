//! Fitted model file shared by `simulate` and `check-arb`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use sofr_core::calendar::Date;
use sofr_core::curve::ForwardCurve;
use sofr_core::reference;
use sofr_core::scenario::{FactorModels, InitialState};

use crate::config::AppConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    /// Date of the initial state.
    pub start: Date,
    pub models: FactorModels,
    pub initial: InitialState,
    /// Curve coefficients on the start date.
    pub initial_xi: Vec<f64>,
    /// Free-form estimation notes.
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl ModelArtifact {
    /// Published macro and curve models with the configured start state.
    pub fn reference(cfg: &AppConfig) -> CliResult<Self> {
        let basis = cfg.basis()?;
        if basis != reference::basis() {
            return Err(CliError::Config(
                "the built-in model needs the default basis; pass --model for other bases".into(),
            ));
        }
        let shifts = cfg.shifts();
        let init = &cfg.initial;
        let initial = InitialState::from_observables(
            init.policy,
            init.inflation,
            init.growth,
            &init.xi,
            &shifts,
        )?;
        Ok(Self {
            start: cfg.simulation.start,
            models: FactorModels {
                macro_model: reference::macro_model(),
                curve_model: reference::curve_model(),
                shifts,
                basis,
            },
            initial,
            initial_xi: init.xi.clone(),
            diagnostics: vec!["built-in reference parameters".into()],
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let a: ModelArtifact = serde_json::from_str(&text)?;
        a.validate()?;
        Ok(a)
    }

    /// The configured artifact file, or the built-in model.
    pub fn load_or_reference(path: Option<&Path>, cfg: &AppConfig) -> CliResult<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Self::reference(cfg),
        }
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn validate(&self) -> CliResult<()> {
        let k = self.models.basis.len();
        let bad = |what: &str| CliError::Domain(format!("model file: {what}"));
        if self.models.macro_model.dim() != 3 {
            return Err(bad("macro model must be three-dimensional"));
        }
        if self.models.curve_model.dim() != k || self.models.shifts.len() != k {
            return Err(bad("curve model, shifts and basis disagree in size"));
        }
        if self.initial.x.len() != k || self.initial_xi.len() != k {
            return Err(bad("initial state does not match the basis"));
        }
        Ok(())
    }

    pub fn initial_curve(&self) -> CliResult<ForwardCurve> {
        Ok(
            ForwardCurve::new(self.models.basis.clone(), self.initial_xi.clone())?
                .with_date(self.start),
        )
    }
}
