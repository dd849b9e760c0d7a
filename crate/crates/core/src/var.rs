//! Difference-form vector autoregressions `dy_t = A y_{t-1} + a_t + eps_t`.
//!
//! Estimation is per-equation OLS with an intercept, optional one-pass
//! pruning of insignificant entries of `A`, and Gaussian innovations with the
//! sample covariance of the final residuals. The drift sequence `a_t` can be
//! steered so that the noiseless recursion (the componentwise median under
//! Gaussian innovations) passes through user targets.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::linalg::{psd_cholesky, pseudo_inverse};

const RANK_RTOL: f64 = 1e-12;
const CHOLESKY_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VarError {
    #[error("design matrix could not be factorised")]
    SingularDesign,
    #[error("series too short: {rows} rows for dimension {dim}")]
    TooShort { rows: usize, dim: usize },
    #[error("series contains a non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("model is not stable: max |eig(A+I)| = {max_modulus}")]
    UnstableModel { max_modulus: f64 },
    #[error("invalid target: {0}")]
    TargetOutOfRange(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VarStructure {
    #[default]
    Full,
    Diagonal,
}

/// Drift `a_t` for steps `t = 1, 2, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftSchedule {
    Constant(Vec<f64>),
    /// `steps[t - 1]` for `t <= steps.len()`, `tail` afterwards.
    Sequence {
        steps: Vec<Vec<f64>>,
        tail: Vec<f64>,
    },
}

impl DriftSchedule {
    #[inline]
    pub fn at(&self, t: usize) -> &[f64] {
        match self {
            DriftSchedule::Constant(a) => a,
            DriftSchedule::Sequence { steps, tail } => {
                if t >= 1 && t <= steps.len() {
                    &steps[t - 1]
                } else {
                    tail
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DriftSchedule::Constant(a) => a.len(),
            DriftSchedule::Sequence { tail, .. } => tail.len(),
        }
    }

    fn consistent(&self, d: usize) -> bool {
        match self {
            DriftSchedule::Constant(a) => a.len() == d,
            DriftSchedule::Sequence { steps, tail } => {
                tail.len() == d && steps.iter().all(|s| s.len() == d)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VarModelData {
    structure: VarStructure,
    a: Vec<Vec<f64>>,
    drift: DriftSchedule,
    covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VarModelData", into = "VarModelData")]
pub struct VarModel {
    structure: VarStructure,
    a: DMatrix<f64>,
    drift: DriftSchedule,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
}

fn rows_to_matrix(rows: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>, VarError> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(VarError::InvalidModel(format!("expected a {d}x{d} matrix")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

impl TryFrom<VarModelData> for VarModel {
    type Error = VarError;

    fn try_from(v: VarModelData) -> Result<Self, VarError> {
        let d = v.a.len();
        VarModel::new(
            rows_to_matrix(&v.a, d)?,
            v.drift,
            rows_to_matrix(&v.covariance, d)?,
            v.structure,
        )
    }
}

impl From<VarModel> for VarModelData {
    fn from(m: VarModel) -> Self {
        VarModelData {
            structure: m.structure,
            a: matrix_to_rows(&m.a),
            drift: m.drift,
            covariance: matrix_to_rows(&m.cov),
        }
    }
}

impl VarModel {
    pub fn new(
        a: DMatrix<f64>,
        drift: DriftSchedule,
        cov: DMatrix<f64>,
        structure: VarStructure,
    ) -> Result<Self, VarError> {
        let d = a.nrows();
        if a.ncols() != d || cov.shape() != (d, d) || !drift.consistent(d) {
            return Err(VarError::InvalidModel("dimension mismatch".into()));
        }
        if a.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(VarError::InvalidModel("non-finite entry".into()));
        }
        if structure == VarStructure::Diagonal
            && (0..d).any(|i| (0..d).any(|j| i != j && a[(i, j)] != 0.0))
        {
            return Err(VarError::InvalidModel(
                "diagonal model with off-diagonal entries".into(),
            ));
        }
        let scale = cov.amax().max(1.0);
        if (&cov - cov.transpose()).amax() > 1e-12 * scale {
            return Err(VarError::InvalidModel("covariance not symmetric".into()));
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        let chol = psd_cholesky(&cov, CHOLESKY_TOL)
            .ok_or_else(|| VarError::InvalidModel("covariance not positive semidefinite".into()))?;
        Ok(Self {
            structure,
            a,
            drift,
            cov,
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower factor `L` with `L L^T = Sigma`.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn drift(&self) -> &DriftSchedule {
        &self.drift
    }

    pub fn structure(&self) -> VarStructure {
        self.structure
    }

    pub fn with_drift(mut self, drift: DriftSchedule) -> Result<Self, VarError> {
        if !drift.consistent(self.dim()) {
            return Err(VarError::InvalidModel("drift dimension mismatch".into()));
        }
        self.drift = drift;
        Ok(self)
    }

    /// Same dynamics with every innovation switched off.
    pub fn noiseless(mut self) -> Self {
        let d = self.dim();
        self.cov = DMatrix::zeros(d, d);
        self.chol = DMatrix::zeros(d, d);
        self
    }

    /// `state + A state + a_t + eps`.
    pub fn step(&self, state: &[f64], t: usize, eps: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.step_into(state, t, eps, &mut out);
        out
    }

    #[inline]
    pub fn step_into(&self, state: &[f64], t: usize, eps: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let a_t = self.drift.at(t);
        for i in 0..d {
            let mut v = state[i] + a_t[i] + eps[i];
            for j in 0..d {
                v += self.a[(i, j)] * state[j];
            }
            out[i] = v;
        }
    }

    /// Deterministic path `y_0, y_1, ..., y_steps` with zero innovations.
    pub fn noiseless_path(&self, initial: &[f64], steps: usize) -> Vec<Vec<f64>> {
        let zero = vec![0.0; self.dim()];
        let mut path = Vec::with_capacity(steps + 1);
        path.push(initial.to_vec());
        for t in 1..=steps {
            let next = self.step(&path[t - 1], t, &zero);
            path.push(next);
        }
        path
    }

    pub fn stationarity(&self) -> Stationarity {
        stationarity_eigenvalues(&self.a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stationarity {
    pub eigenvalues: Vec<Complex<f64>>,
    pub max_modulus: f64,
    /// Set when `max |eig(A+I)| >= 1`.
    pub unstable: bool,
}

/// Eigenvalues of `A + I`, sorted by descending modulus, then descending
/// imaginary part.
pub fn stationarity_eigenvalues(a: &DMatrix<f64>) -> Stationarity {
    let d = a.nrows();
    let m = a + DMatrix::identity(d, d);
    let mut eigenvalues: Vec<Complex<f64>> = if d == 0 {
        vec![]
    } else {
        m.complex_eigenvalues().iter().copied().collect()
    };
    eigenvalues.sort_by(|x, y| y.norm().total_cmp(&x.norm()).then(y.im.total_cmp(&x.im)));
    let max_modulus = eigenvalues.iter().map(|e| e.norm()).fold(0.0, f64::max);
    Stationarity {
        eigenvalues,
        max_modulus,
        unstable: max_modulus >= 1.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub a: DMatrix<f64>,
    pub intercept: DVector<f64>,
    /// Standard errors of the final fit; zero for pruned entries.
    pub a_std_errors: DMatrix<f64>,
    pub intercept_std_errors: DVector<f64>,
    /// Two-sided p-values of the unpruned fit that decided the pruning.
    pub p_values: DMatrix<f64>,
    pub pruned: Vec<Vec<bool>>,
    /// `(T - 1) x d` residuals of the final fit.
    pub residuals: DMatrix<f64>,
    pub residual_covariance: DMatrix<f64>,
    pub stationarity: Stationarity,
    /// Equations whose design was rank deficient and solved in the
    /// minimum-norm sense.
    pub rank_deficient: Vec<usize>,
    /// Equations with zero residual variance.
    pub zero_variance: Vec<usize>,
    pub observations: usize,
}

struct EquationFit {
    coef: DVector<f64>,
    std_err: DVector<f64>,
    p_values: DVector<f64>,
    residuals: DVector<f64>,
    rank_deficient: bool,
}

fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<EquationFit, VarError> {
    let (n, p) = x.shape();
    let (pinv, rank) = pseudo_inverse(x, RANK_RTOL).ok_or(VarError::SingularDesign)?;
    let coef = &pinv * y;
    let residuals = y - x * &coef;
    let df = n.saturating_sub(rank);
    let sigma2 = if df > 0 {
        residuals.norm_squared() / df as f64
    } else {
        f64::NAN
    };
    // (X^T X)^+ = X^+ X^+^T
    let xtx_inv = &pinv * pinv.transpose();
    let std_err = DVector::from_iterator(p, (0..p).map(|i| (sigma2 * xtx_inv[(i, i)]).sqrt()));
    let tdist = if df > 0 {
        StudentsT::new(0.0, 1.0, df as f64).ok()
    } else {
        None
    };
    let p_values = DVector::from_iterator(
        p,
        (0..p).map(|i| {
            let (c, se) = (coef[i], std_err[i]);
            match &tdist {
                None => f64::NAN,
                Some(_) if se == 0.0 => {
                    if c == 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Some(t) => {
                    let stat = (c / se).abs();
                    (2.0 * (1.0 - t.cdf(stat))).clamp(0.0, 1.0)
                }
            }
        }),
    );
    Ok(EquationFit {
        coef,
        std_err,
        p_values,
        residuals,
        rank_deficient: rank < p,
    })
}

/// Fit `dy_t = A y_{t-1} + c + eps_t` to the rows of `series` (one row per
/// time step). With `prune_p = Some(p)`, entries of `A` whose p-value exceeds
/// `p` are set to zero and the equation is re-fitted once on the remaining
/// regressors. The intercept becomes the constant drift of the model.
pub fn estimate(
    series: &[Vec<f64>],
    structure: VarStructure,
    prune_p: Option<f64>,
) -> Result<(VarModel, EstimationReport), VarError> {
    fit(series, structure, None, prune_p)
}

/// [`estimate`] with `mask[i][j] = false` excluding `y_j` from equation `i`
/// before any pruning.
pub fn estimate_masked(
    series: &[Vec<f64>],
    mask: &[Vec<bool>],
    prune_p: Option<f64>,
) -> Result<(VarModel, EstimationReport), VarError> {
    let d = series.first().map_or(0, |r| r.len());
    if mask.len() != d || mask.iter().any(|r| r.len() != d) {
        return Err(VarError::InvalidModel(format!("mask must be {d} x {d}")));
    }
    fit(series, VarStructure::Full, Some(mask), prune_p)
}

fn fit(
    series: &[Vec<f64>],
    structure: VarStructure,
    mask: Option<&[Vec<bool>]>,
    prune_p: Option<f64>,
) -> Result<(VarModel, EstimationReport), VarError> {
    let t_len = series.len();
    let d = series.first().map_or(0, |r| r.len());
    if d == 0 || t_len < d + 2 {
        return Err(VarError::TooShort {
            rows: t_len,
            dim: d,
        });
    }
    for (row, r) in series.iter().enumerate() {
        if r.len() != d {
            return Err(VarError::InvalidModel(format!(
                "row {row} has {} columns",
                r.len()
            )));
        }
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(VarError::NonFinite { row, col });
        }
    }
    let n = t_len - 1;

    let mut a = DMatrix::zeros(d, d);
    let mut a_se = DMatrix::zeros(d, d);
    let mut p_values = DMatrix::from_element(d, d, f64::NAN);
    let mut pruned = vec![vec![false; d]; d];
    let mut intercept = DVector::zeros(d);
    let mut intercept_se = DVector::zeros(d);
    let mut residuals = DMatrix::zeros(n, d);
    let mut rank_deficient = Vec::new();

    for i in 0..d {
        let dy = DVector::from_iterator(n, (1..t_len).map(|t| series[t][i] - series[t - 1][i]));
        let mut regs: Vec<usize> = match (mask, structure) {
            (Some(m), _) => (0..d).filter(|&j| m[i][j]).collect(),
            (None, VarStructure::Full) => (0..d).collect(),
            (None, VarStructure::Diagonal) => vec![i],
        };
        let design = |regs: &[usize]| {
            DMatrix::from_fn(n, regs.len() + 1, |r, c| {
                if c == 0 {
                    1.0
                } else {
                    series[r][regs[c - 1]]
                }
            })
        };
        let mut fit = ols(&design(&regs), &dy)?;
        for (c, &j) in regs.iter().enumerate() {
            p_values[(i, j)] = fit.p_values[c + 1];
        }
        if let Some(threshold) = prune_p {
            let keep: Vec<usize> = regs
                .iter()
                .enumerate()
                .filter(|&(c, _)| !(fit.p_values[c + 1] > threshold))
                .map(|(_, &j)| j)
                .collect();
            if keep.len() < regs.len() {
                for &j in &regs {
                    if !keep.contains(&j) {
                        pruned[i][j] = true;
                    }
                }
                regs = keep;
                fit = ols(&design(&regs), &dy)?;
            }
        }
        intercept[i] = fit.coef[0];
        intercept_se[i] = fit.std_err[0];
        for (c, &j) in regs.iter().enumerate() {
            a[(i, j)] = fit.coef[c + 1];
            a_se[(i, j)] = fit.std_err[c + 1];
        }
        residuals.set_column(i, &fit.residuals);
        if fit.rank_deficient {
            rank_deficient.push(i);
        }
    }

    let residual_covariance = (residuals.transpose() * &residuals) / n as f64;
    let zero_variance = (0..d)
        .filter(|&i| residual_covariance[(i, i)] == 0.0)
        .collect();
    let model = VarModel::new(
        a.clone(),
        DriftSchedule::Constant(intercept.iter().copied().collect()),
        residual_covariance.clone(),
        structure,
    )?;
    let report = EstimationReport {
        stationarity: stationarity_eigenvalues(&a),
        a,
        intercept,
        a_std_errors: a_se,
        intercept_std_errors: intercept_se,
        p_values,
        pruned,
        residuals,
        residual_covariance,
        rank_deficient,
        zero_variance,
        observations: n,
    };
    Ok((model, report))
}

/// Constant drift `a = -A m` making `m` a fixed point of the noiseless
/// recursion.
pub fn stationary_drift(model: &VarModel, target: &[f64]) -> Vec<f64> {
    let m = DVector::from_column_slice(target);
    (-(model.a() * m)).iter().copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPoint {
    /// Step index `t >= 1`; the target applies to `y_t`.
    pub horizon: usize,
    pub component: usize,
    pub value: f64,
}

/// Median views in model space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MedianTargets {
    pub points: Vec<TargetPoint>,
    pub asymptotic: Option<Vec<f64>>,
    /// Steps over which the path is blended into the asymptotic target after
    /// the last explicit horizon.
    pub relaxation: usize,
}

impl MedianTargets {
    pub fn asymptotic(target: Vec<f64>, relaxation: usize) -> Self {
        Self {
            points: vec![],
            asymptotic: Some(target),
            relaxation,
        }
    }

    pub fn last_horizon(&self) -> usize {
        self.points.iter().map(|p| p.horizon).max().unwrap_or(0)
    }
}

fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a + w * (b - a)
}

/// Target median path `m_0 = initial, m_1, ...` up to the point where the
/// drift becomes constant, together with that final constant drift.
pub fn median_path(
    model: &VarModel,
    targets: &MedianTargets,
    initial: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<f64>), VarError> {
    let d = model.dim();
    if initial.len() != d {
        return Err(VarError::TargetOutOfRange(format!(
            "initial state has {} components, expected {d}",
            initial.len()
        )));
    }
    if let Some(m) = &targets.asymptotic {
        if m.len() != d || m.iter().any(|v| !v.is_finite()) {
            return Err(VarError::TargetOutOfRange("asymptotic target".into()));
        }
    }
    // per-component knots, starting at (0, initial)
    let mut knots: Vec<Vec<(usize, f64)>> = (0..d).map(|c| vec![(0, initial[c])]).collect();
    let mut sorted = targets.points.clone();
    sorted.sort_by_key(|p| (p.component, p.horizon));
    for p in &sorted {
        if p.component >= d || p.horizon == 0 || !p.value.is_finite() {
            return Err(VarError::TargetOutOfRange(format!(
                "component {} horizon {} value {}",
                p.component, p.horizon, p.value
            )));
        }
        let k = &mut knots[p.component];
        if k.last().map_or(false, |&(h, _)| h >= p.horizon) {
            return Err(VarError::TargetOutOfRange(format!(
                "repeated horizon {} for component {}",
                p.horizon, p.component
            )));
        }
        k.push((p.horizon, p.value));
    }
    let horizon = targets.last_horizon();
    // drift used by components outside their targeted range
    let base: Vec<f64> = match &targets.asymptotic {
        Some(m) => stationary_drift(model, m),
        None => model.drift().at(1).to_vec(),
    };

    let mut path = Vec::with_capacity(horizon + targets.relaxation + 1);
    path.push(initial.to_vec());
    let mut seg = vec![0usize; d];
    for t in 1..=horizon {
        let prev = &path[t - 1];
        let mut next = vec![0.0; d];
        for c in 0..d {
            let k = &knots[c];
            let last = k[k.len() - 1].0;
            if t <= last {
                while k[seg[c] + 1].0 < t {
                    seg[c] += 1;
                }
                let (h0, v0) = k[seg[c]];
                let (h1, v1) = k[seg[c] + 1];
                next[c] = if t == h1 {
                    v1
                } else {
                    lerp(v0, v1, (t - h0) as f64 / (h1 - h0) as f64)
                };
            } else {
                let mut v = prev[c] + base[c];
                for j in 0..d {
                    v += model.a()[(c, j)] * prev[j];
                }
                next[c] = v;
            }
        }
        path.push(next);
    }

    let tail = match &targets.asymptotic {
        Some(m) => {
            let from = path[horizon].clone();
            let w = targets.relaxation;
            for s in 1..=w {
                let frac = s as f64 / w as f64;
                path.push(
                    (0..d)
                        .map(|c| {
                            if s == w {
                                m[c]
                            } else {
                                lerp(from[c], m[c], frac)
                            }
                        })
                        .collect(),
                );
            }
            if w == 0 {
                path.push(m.clone());
            }
            stationary_drift(model, m)
        }
        None => stationary_drift(model, &path[horizon]),
    };
    Ok((path, tail))
}

/// Drift sequence `a_t = m_t - m_{t-1} - A m_{t-1}` whose noiseless recursion
/// follows [`median_path`], constant afterwards.
pub fn median_path_drift(
    model: &VarModel,
    targets: &MedianTargets,
    initial: &[f64],
) -> Result<DriftSchedule, VarError> {
    let (path, tail) = median_path(model, targets, initial)?;
    let d = model.dim();
    let steps = path
        .windows(2)
        .map(|w| {
            let (prev, cur) = (&w[0], &w[1]);
            (0..d)
                .map(|i| {
                    let mut ap = 0.0;
                    for j in 0..d {
                        ap += model.a()[(i, j)] * prev[j];
                    }
                    cur[i] - prev[i] - ap
                })
                .collect()
        })
        .collect();
    Ok(DriftSchedule::Sequence { steps, tail })
}
