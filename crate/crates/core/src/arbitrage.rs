//! Sampled no-arbitrage checks.
//!
//! The futures and zero-coupon conditions ask that today's (transformed)
//! prices lie in the relative interior of the convex hull of tomorrow's
//! conditional support. The support is replaced by `M` conditional draws
//! from the simulation engine, so a verdict certifies the simulated model
//! only, at the stated sample size.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{BasisFamily, CurveError, ForwardCurve};
use crate::scenario::{Engine, EngineState};
use crate::DELTA;

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const MAX_ZCB_DIMENSION: usize = 64;

const PIVOT_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArbitrageError {
    #[error("all samples coincide")]
    DegenerateSamples,
    #[error("dimension {dim} exceeds the cap of {cap}")]
    DimensionTooLarge { dim: usize, cap: usize },
    #[error("period [{t0}, {t1}) not strictly after day {t}")]
    OutOfRange { t: u32, t0: u32, t1: u32 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("linear program did not terminate")]
    NumericalFailure,
    #[error(transparent)]
    Curve(#[from] CurveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HullStatus {
    Interior,
    Boundary,
    Outside,
}

impl HullStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            HullStatus::Interior => "interior",
            HullStatus::Boundary => "boundary",
            HullStatus::Outside => "outside",
        }
    }
}

/// `margin` is the smallest distance the point can move along a coordinate
/// axis and stay in the sampled hull; negative when the point is outside,
/// where it is minus the scaled L1 infeasibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullVerdict {
    pub status: HullStatus,
    pub margin: f64,
    pub samples: usize,
}

/// Three-month futures reference periods `[t0, t1)` as day offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuturesGrid {
    pub periods: Vec<(u32, u32)>,
    pub basis: BasisFamily,
}

impl FuturesGrid {
    pub fn new(periods: Vec<(u32, u32)>, basis: BasisFamily) -> Result<Self, ArbitrageError> {
        if periods.is_empty() {
            return Err(ArbitrageError::InvalidInput("no periods".into()));
        }
        if periods.iter().any(|(a, b)| b <= a) {
            return Err(ArbitrageError::InvalidInput("empty period".into()));
        }
        Ok(Self { periods, basis })
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    fn relative(&self, t: u32) -> Result<Vec<(u32, u32)>, ArbitrageError> {
        self.periods
            .iter()
            .map(|&(t0, t1)| {
                if t0 < t {
                    Err(ArbitrageError::OutOfRange { t, t0, t1 })
                } else {
                    Ok((t0 - t, t1 - t))
                }
            })
            .collect()
    }

    /// `Phi_t[j, k] = delta * sum_{s = t0_j - t}^{t1_j - t - 1} phi_k(s)`.
    pub fn phi(&self, t: u32) -> Result<DMatrix<f64>, ArbitrageError> {
        let rel = self.relative(t)?;
        let k = self.basis.len();
        let mut m = DMatrix::zeros(rel.len(), k);
        for (j, &(a, b)) in rel.iter().enumerate() {
            for (c, v) in self.basis.period_row(a, b).into_iter().enumerate() {
                m[(j, c)] = v;
            }
        }
        Ok(m)
    }
}

/// `G_t^j = sum_{s = t0_j - t}^{t1_j - t - 1} F_t(s) delta` for the day-`t`
/// curve.
pub fn g_vector(
    curve: &ForwardCurve,
    t: u32,
    grid: &FuturesGrid,
) -> Result<Vec<f64>, ArbitrageError> {
    grid.relative(t)?
        .into_iter()
        .map(|(a, b)| Ok(curve.forward_sum(a, b)?))
        .collect()
}

/// `H(f)_i = exp(-delta * sum_{s <= i} f_s)`.
pub fn h_map(forwards: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    forwards
        .iter()
        .map(|f| {
            acc += f * DELTA;
            (-acc).exp()
        })
        .collect()
}

enum Lp {
    Infeasible(f64),
    Optimal(f64),
    Unbounded,
}

/// Dense two-phase simplex with Bland's rule for
/// `min c'x  s.t.  A x = b, x >= 0`. Without `c` only feasibility is decided.
fn simplex(a: &DMatrix<f64>, b: &[f64], c: Option<&[f64]>) -> Result<Lp, ArbitrageError> {
    let (m, n) = a.shape();
    let width = n + m + 1;
    let rhs = n + m;
    let mut t = vec![0.0; (m + 1) * width];
    let mut basis: Vec<usize> = (n..n + m).collect();
    let b_scale = b.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * width + j] = sign * a[(i, j)];
        }
        t[i * width + n + i] = 1.0;
        t[i * width + rhs] = sign * b[i];
    }
    let obj = m * width;
    for i in 0..m {
        for j in 0..n {
            t[obj + j] -= t[i * width + j];
        }
        t[obj + rhs] -= t[i * width + rhs];
    }

    let mut pivots = 0;
    let mut run =
        |t: &mut [f64], basis: &mut [usize], cols: usize| -> Result<bool, ArbitrageError> {
            loop {
                let Some(e) = (0..cols).find(|&j| t[obj + j] < -PIVOT_TOL) else {
                    return Ok(true);
                };
                let mut leave: Option<(usize, f64)> = None;
                for i in 0..m {
                    let p = t[i * width + e];
                    if p > PIVOT_TOL {
                        let ratio = t[i * width + rhs] / p;
                        leave = match leave {
                            None => Some((i, ratio)),
                            Some((r, best)) => {
                                if ratio < best - 1e-14
                                    || (ratio <= best + 1e-14 && basis[i] < basis[r])
                                {
                                    Some((i, ratio))
                                } else {
                                    Some((r, best))
                                }
                            }
                        };
                    }
                }
                let Some((r, _)) = leave else {
                    return Ok(false);
                };
                pivot(t, width, m, r, e);
                basis[r] = e;
                pivots += 1;
                if pivots > MAX_PIVOTS {
                    return Err(ArbitrageError::NumericalFailure);
                }
            }
        };

    run(&mut t, &mut basis, n)?;
    let infeasibility = -t[obj + rhs];
    if infeasibility > 1e-9 * b_scale {
        return Ok(Lp::Infeasible(infeasibility));
    }
    let Some(c) = c else {
        return Ok(Lp::Optimal(0.0));
    };

    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i * width + j].abs() > 1e-9) {
                pivot(&mut t, width, m, i, j);
                basis[i] = j;
            }
        }
    }
    for j in 0..width {
        t[obj + j] = 0.0;
    }
    t[obj..obj + n].copy_from_slice(c);
    for i in 0..m {
        let cb = if basis[i] < n { c[basis[i]] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..width {
                t[obj + j] -= cb * t[i * width + j];
            }
        }
    }
    if !run(&mut t, &mut basis, n)? {
        return Ok(Lp::Unbounded);
    }
    Ok(Lp::Optimal(-t[obj + rhs]))
}

fn pivot(t: &mut [f64], width: usize, m: usize, r: usize, e: usize) {
    let p = t[r * width + e];
    for v in &mut t[r * width..(r + 1) * width] {
        *v /= p;
    }
    let (before, rest) = t.split_at_mut(r * width);
    let (row, after) = rest.split_at_mut(width);
    let row = &*row;
    let eliminate = |other: &mut [f64]| {
        let f = other[e];
        if f != 0.0 {
            for (o, v) in other.iter_mut().zip(row) {
                *o -= f * v;
            }
            other[e] = 0.0;
        }
    };
    before.chunks_mut(width).for_each(eliminate);
    after.chunks_mut(width).take(m - r).for_each(eliminate);
}

/// Samples centred on their mean and scaled per coordinate.
struct Cloud {
    design: DMatrix<f64>,
    center: Vec<f64>,
    scale: Vec<f64>,
}

impl Cloud {
    fn new(samples: &[Vec<f64>], dim: usize) -> Result<Self, ArbitrageError> {
        let m = samples.len() as f64;
        let center: Vec<f64> = (0..dim)
            .map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / m)
            .collect();
        let scale: Vec<f64> = (0..dim)
            .map(|j| {
                let v = samples
                    .iter()
                    .map(|s| (s[j] - center[j]).powi(2))
                    .sum::<f64>()
                    / m;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut design = DMatrix::zeros(dim + 1, samples.len());
        for (i, s) in samples.iter().enumerate() {
            for j in 0..dim {
                design[(j, i)] = (s[j] - center[j]) / scale[j];
            }
            design[(dim, i)] = 1.0;
        }
        Ok(Self {
            design,
            center,
            scale,
        })
    }

    fn rhs(&self, point: &[f64], axis: Option<(usize, f64)>) -> Vec<f64> {
        let mut b: Vec<f64> = point
            .iter()
            .enumerate()
            .map(|(j, p)| (p - self.center[j]) / self.scale[j])
            .collect();
        if let Some((j, step)) = axis {
            b[j] += step / self.scale[j];
        }
        b.push(1.0);
        b
    }

    /// Phase-1 infeasibility of `point`, zero when inside.
    fn infeasibility(
        &self,
        point: &[f64],
        axis: Option<(usize, f64)>,
    ) -> Result<f64, ArbitrageError> {
        match simplex(&self.design, &self.rhs(point, axis), None)? {
            Lp::Infeasible(v) => Ok(v),
            _ => Ok(0.0),
        }
    }

    /// Largest `tau` with `point + tau * sign * e_j` in the hull.
    fn reach(&self, point: &[f64], j: usize, sign: f64) -> Result<f64, ArbitrageError> {
        let (rows, cols) = self.design.shape();
        let mut a = DMatrix::zeros(rows, cols + 1);
        a.view_mut((0, 0), (rows, cols)).copy_from(&self.design);
        a[(j, cols)] = -sign / self.scale[j];
        let mut c = vec![0.0; cols + 1];
        c[cols] = -1.0;
        match simplex(&a, &self.rhs(point, None), Some(&c))? {
            Lp::Optimal(v) => Ok(-v),
            Lp::Infeasible(_) => Ok(0.0),
            Lp::Unbounded => Ok(f64::INFINITY),
        }
    }
}

/// Sampled relative-interior test: `point` and its `2J` axis perturbations
/// by `eps` are each tested for membership in the convex hull of `samples`.
pub fn hull_membership(
    point: &[f64],
    samples: &[Vec<f64>],
    eps: f64,
) -> Result<HullVerdict, ArbitrageError> {
    let dim = point.len();
    if dim == 0 || samples.is_empty() {
        return Err(ArbitrageError::InvalidInput("empty point or sample".into()));
    }
    if !(eps > 0.0) {
        return Err(ArbitrageError::InvalidInput(
            "epsilon must be positive".into(),
        ));
    }
    if samples.iter().any(|s| s.len() != dim) {
        return Err(ArbitrageError::InvalidInput(
            "sample dimension mismatch".into(),
        ));
    }
    if point
        .iter()
        .chain(samples.iter().flatten())
        .any(|v| !v.is_finite())
    {
        return Err(ArbitrageError::InvalidInput("non-finite coordinate".into()));
    }
    if samples.iter().all(|s| s == &samples[0]) {
        return Err(ArbitrageError::DegenerateSamples);
    }
    let cloud = Cloud::new(samples, dim)?;
    let base = cloud.infeasibility(point, None)?;
    if base > 0.0 {
        return Ok(HullVerdict {
            status: HullStatus::Outside,
            margin: -base,
            samples: samples.len(),
        });
    }
    let axes: Vec<(usize, f64)> = (0..dim).flat_map(|j| [(j, 1.0), (j, -1.0)]).collect();
    let perturbed: Vec<f64> = axes
        .par_iter()
        .map(|&(j, s)| cloud.infeasibility(point, Some((j, s * eps))))
        .collect::<Result<_, _>>()?;
    if perturbed.iter().any(|&v| v > 0.0) {
        return Ok(HullVerdict {
            status: HullStatus::Boundary,
            margin: 0.0,
            samples: samples.len(),
        });
    }
    let reaches: Vec<f64> = axes
        .par_iter()
        .map(|&(j, s)| cloud.reach(point, j, s))
        .collect::<Result<_, _>>()?;
    Ok(HullVerdict {
        status: HullStatus::Interior,
        margin: reaches.into_iter().fold(f64::INFINITY, f64::min).max(eps),
        samples: samples.len(),
    })
}

/// Verdict when every sample is the same point: boundary if `point`
/// coincides with it, outside otherwise.
fn degenerate_verdict(point: &[f64], sample: &[f64], eps: f64, m: usize) -> HullVerdict {
    let gap = point
        .iter()
        .zip(sample)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if gap <= eps {
        HullVerdict {
            status: HullStatus::Boundary,
            margin: 0.0,
            samples: m,
        }
    } else {
        HullVerdict {
            status: HullStatus::Outside,
            margin: -gap,
            samples: m,
        }
    }
}

fn membership_or_degenerate(
    point: &[f64],
    samples: &[Vec<f64>],
    eps: f64,
) -> Result<HullVerdict, ArbitrageError> {
    match hull_membership(point, samples, eps) {
        Err(ArbitrageError::DegenerateSamples) => {
            Ok(degenerate_verdict(point, &samples[0], eps, samples.len()))
        }
        other => other,
    }
}

/// Day-`t + 1` curves from `m` one-day moves out of `state`.
pub fn conditional_curves(engine: &Engine, state: &EngineState, m: usize) -> Vec<ForwardCurve> {
    (0..m as u64)
        .into_par_iter()
        .map(|i| engine.curve(&engine.advance(state, i)))
        .collect()
}

/// Futures condition at the state's day `t`: `exp(G_t)` against
/// `exp(G_{t+1})` over `m` conditional draws.
pub fn check_futures_noarb(
    engine: &Engine,
    state: &EngineState,
    grid: &FuturesGrid,
    eps: f64,
    m: usize,
) -> Result<HullVerdict, ArbitrageError> {
    if m == 0 {
        return Err(ArbitrageError::InvalidInput(
            "need at least one draw".into(),
        ));
    }
    let t = state.day;
    grid.relative(t + 1)?;
    let exp = |v: Vec<f64>| v.into_iter().map(f64::exp).collect::<Vec<_>>();
    let point = exp(g_vector(&engine.curve(state), t, grid)?);
    let samples = conditional_curves(engine, state, m)
        .iter()
        .map(|c| g_vector(c, t + 1, grid).map(exp))
        .collect::<Result<Vec<_>, _>>()?;
    membership_or_degenerate(&point, &samples, eps)
}

/// Zero-coupon condition on `t_bar` maturities: `H(F_t(1..=T))` against
/// `H(F_{t+1}(0..T))` over `m` conditional draws.
pub fn check_zcb_noarb(
    engine: &Engine,
    state: &EngineState,
    t_bar: usize,
    eps: f64,
    m: usize,
) -> Result<HullVerdict, ArbitrageError> {
    if t_bar > MAX_ZCB_DIMENSION {
        return Err(ArbitrageError::DimensionTooLarge {
            dim: t_bar,
            cap: MAX_ZCB_DIMENSION,
        });
    }
    if t_bar == 0 || m == 0 {
        return Err(ArbitrageError::InvalidInput(
            "need a positive dimension and draw count".into(),
        ));
    }
    let today = engine.curve(state);
    let f: Vec<f64> = (1..=t_bar as u32)
        .map(|s| today.eval(s))
        .collect::<Result<_, _>>()?;
    let point = h_map(&f);
    let samples = conditional_curves(engine, state, m)
        .iter()
        .map(|c| {
            let f: Vec<f64> = (0..t_bar as u32)
                .map(|s| c.eval(s))
                .collect::<Result<_, _>>()?;
            Ok(h_map(&f))
        })
        .collect::<Result<Vec<_>, ArbitrageError>>()?;
    membership_or_degenerate(&point, &samples, eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Futures,
    Zcb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub t: u32,
    pub kind: CheckKind,
    pub verdict: HullVerdict,
    pub epsilon: f64,
}

pub const VERDICT_CSV_HEADER: &str = "t,kind,status,margin,M,epsilon";

pub fn verdict_csv(rows: &[VerdictRow]) -> String {
    let mut out = String::from(VERDICT_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let kind = match r.kind {
            CheckKind::Futures => "futures",
            CheckKind::Zcb => "zcb",
        };
        out.push_str(&format!(
            "{},{},{},{:e},{},{:e}\n",
            r.t,
            kind,
            r.verdict.status.as_str(),
            r.verdict.margin,
            r.verdict.samples,
            r.epsilon
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::BasisKind;

    fn cross() -> Vec<Vec<f64>> {
        vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ]
    }

    #[test]
    fn cross_polytope_examples() {
        let s = cross();
        let v = hull_membership(&[0.0, 0.0], &s, 0.1).unwrap();
        assert_eq!(v.status, HullStatus::Interior);
        assert!((v.margin - 1.0).abs() < 1e-9);
        assert_eq!(
            hull_membership(&[1.0, 0.0], &s, 0.1).unwrap().status,
            HullStatus::Boundary
        );
        let out = hull_membership(&[2.0, 0.0], &s, 0.1).unwrap();
        assert_eq!(out.status, HullStatus::Outside);
        assert!(out.margin < 0.0);
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let s = vec![vec![1.0, 2.0]; 5];
        assert_eq!(
            hull_membership(&[1.0, 2.0], &s, 1e-3),
            Err(ArbitrageError::DegenerateSamples)
        );
        assert_eq!(
            degenerate_verdict(&[1.0, 2.0], &s[0], 1e-3, 5).status,
            HullStatus::Boundary
        );
        assert_eq!(
            degenerate_verdict(&[1.1, 2.0], &s[0], 1e-3, 5).status,
            HullStatus::Outside
        );
    }

    #[test]
    fn lower_dimensional_hull_has_no_interior() {
        let s = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]];
        assert_eq!(
            hull_membership(&[1.0, 0.0], &s, 1e-3).unwrap().status,
            HullStatus::Boundary
        );
        assert_eq!(
            hull_membership(&[1.0, 0.5], &s, 1e-3).unwrap().status,
            HullStatus::Outside
        );
    }

    #[test]
    fn simplex_optimises() {
        // min -x1 - x2, x1 + 2 x2 + s1 = 4, 3 x1 + x2 + s2 = 6
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 1.0, 0.0, 3.0, 1.0, 0.0, 1.0]);
        match simplex(&a, &[4.0, 6.0], Some(&[-1.0, -1.0, 0.0, 0.0])).unwrap() {
            Lp::Optimal(v) => assert!((v + 2.8).abs() < 1e-12),
            _ => panic!(),
        }
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        assert!(matches!(
            simplex(&a, &[1.0], Some(&[0.0, -1.0])).unwrap(),
            Lp::Unbounded
        ));
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(matches!(
            simplex(&a, &[-1.0], None).unwrap(),
            Lp::Infeasible(_)
        ));
    }

    #[test]
    fn g_vector_on_flat_curve() {
        let basis = BasisFamily::new(BasisKind::PiecewiseConstant, vec![100, 200]).unwrap();
        let curve = ForwardCurve::new(basis.clone(), vec![0.04, 0.04])
            .unwrap()
            .with_cutoff(400);
        let grid = FuturesGrid::new(vec![(10, 100), (100, 190)], basis).unwrap();
        let g = g_vector(&curve, 0, &grid).unwrap();
        assert!((g[0] - 0.04 * 90.0 * DELTA).abs() < 1e-15);
        assert!((g[1] - 0.04 * 90.0 * DELTA).abs() < 1e-15);
        let phi = grid.phi(0).unwrap();
        assert!((phi[(0, 0)] - 90.0 * DELTA).abs() < 1e-15);
        assert_eq!(phi[(0, 1)], 0.0);
        assert!((phi[(1, 0)] - DELTA).abs() < 1e-15);
        assert!((phi[(1, 1)] - 89.0 * DELTA).abs() < 1e-15);
        assert!(matches!(
            g_vector(&curve, 11, &grid),
            Err(ArbitrageError::OutOfRange { .. })
        ));
    }

    #[test]
    fn h_map_is_decreasing() {
        let h = h_map(&[0.05, 0.04, 0.06]);
        assert!(h[0] < 1.0 && h[0] > h[1] && h[1] > h[2] && h[2] > 0.0);
        assert!((h[2] - (-0.15 * DELTA).exp()).abs() < 1e-15);
    }

    #[test]
    fn csv_row_format() {
        let rows = [VerdictRow {
            t: 0,
            kind: CheckKind::Zcb,
            verdict: HullVerdict {
                status: HullStatus::Interior,
                margin: 0.5,
                samples: 200,
            },
            epsilon: 1e-8,
        }];
        assert_eq!(
            verdict_csv(&rows),
            "t,kind,status,margin,M,epsilon\n0,zcb,interior,5e-1,200,1e-8\n"
        );
    }
}
