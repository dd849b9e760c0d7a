//! Forward-curve calibration to futures quotes.
//!
//! Each quote on a period `[t0, t1)` contributes one row of the linear system
//! `A xi ~ b` with `A[j][k] = delta * sum_{t0 <= s < t1} phi_k(s)` and
//! `b[j] = ln(1 + F (t1 - t0) delta)`. Mid quotes are fitted by the
//! minimum-norm least-squares solution. Bid/ask quotes give bands
//! `b_bid <= A xi + e <= b_ask` and the squared violation `|e|^2` is
//! minimised; this is solved in its unconstrained piecewise-quadratic form
//! `sum_j dist(A xi, [b_bid, b_ask])_j^2` by a semismooth Newton iteration
//! with exact line search, followed by a minimum-norm selection within the
//! optimal set.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::Date;
use crate::curve::{forward_from_spot, log_growth, BasisFamily};
use crate::linalg::{min_norm_solve, pseudo_inverse};

/// Singular values below `RANK_RTOL * sigma_max` count as zero.
pub const RANK_RTOL: f64 = 1e-10;
const MAX_NEWTON_ITERATIONS: usize = 500;
const MAX_ACTIVE_SET_ITERATIONS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("no quotes to calibrate")]
    EmptyQuoteSet,
    #[error("quote {index} period [{t0}, {t1}) outside curve range [0, {cutoff}]")]
    QuoteOutOfRange {
        index: usize,
        t0: u32,
        t1: u32,
        cutoff: u32,
    },
    #[error("invalid quote {index}: {reason}")]
    InvalidQuote { index: usize, reason: String },
    #[error("fixed coefficient index {0} out of range")]
    InvalidConstraint(usize),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuoteKind {
    #[serde(rename = "1M")]
    OneMonth,
    #[serde(rename = "3M")]
    ThreeMonth,
}

/// Futures quote on the half-open day period `[t0, t1)` relative to the curve
/// date, with rates in decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub t0: u32,
    pub t1: u32,
    pub kind: QuoteKind,
    pub bid: f64,
    pub ask: f64,
    pub mid: Option<f64>,
}

impl Quote {
    pub fn new(t0: u32, t1: u32, kind: QuoteKind, bid: f64, ask: f64) -> Self {
        Self {
            t0,
            t1,
            kind,
            bid,
            ask,
            mid: None,
        }
    }

    /// Zero-spread quote.
    pub fn at(t0: u32, t1: u32, kind: QuoteKind, rate: f64) -> Self {
        Self::new(t0, t1, kind, rate, rate)
    }

    pub fn mid_rate(&self) -> f64 {
        self.mid.unwrap_or(0.5 * (self.bid + self.ask))
    }

    pub fn days(&self) -> u32 {
        self.t1 - self.t0
    }
}

/// Quotes observed on one date, optionally with the overnight fixing used to
/// pin the first coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteSet {
    pub date: Date,
    pub quotes: Vec<Quote>,
    pub anchor_sofr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSystem {
    pub design: DMatrix<f64>,
    pub mid: DVector<f64>,
    pub bid: DVector<f64>,
    pub ask: DVector<f64>,
    /// Coefficients held at fixed values, `(index, value)`.
    pub fixed: Vec<(usize, f64)>,
    /// Rows from one-month (arithmetic-average) contracts, fitted through the
    /// geometric consistency relation as an approximation.
    pub approximate_rows: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub coeffs: Vec<f64>,
    /// `e` with `b_bid <= A xi + e <= b_ask` (bid/ask) or `e = b - A xi` (mid).
    pub residuals: Vec<f64>,
    pub objective: f64,
    pub rank: usize,
    pub iterations: usize,
}

pub fn build_system(
    quotes: &[Quote],
    basis: &BasisFamily,
    anchor_sofr: Option<f64>,
) -> Result<CalibrationSystem, CalibrationError> {
    build_system_with_cutoff(quotes, basis, anchor_sofr, basis.last_tenor())
}

pub fn build_system_with_cutoff(
    quotes: &[Quote],
    basis: &BasisFamily,
    anchor_sofr: Option<f64>,
    cutoff: u32,
) -> Result<CalibrationSystem, CalibrationError> {
    if quotes.is_empty() {
        return Err(CalibrationError::EmptyQuoteSet);
    }
    let (j, k) = (quotes.len(), basis.len());
    let mut design = DMatrix::zeros(j, k);
    let mut mid = DVector::zeros(j);
    let mut bid = DVector::zeros(j);
    let mut ask = DVector::zeros(j);
    let mut approximate_rows = Vec::with_capacity(j);
    for (index, q) in quotes.iter().enumerate() {
        if q.t0 >= q.t1 {
            return Err(CalibrationError::InvalidQuote {
                index,
                reason: format!("empty period [{}, {})", q.t0, q.t1),
            });
        }
        if !(q.bid.is_finite() && q.ask.is_finite()) || q.bid > q.ask {
            return Err(CalibrationError::InvalidQuote {
                index,
                reason: format!("bid {} above ask {}", q.bid, q.ask),
            });
        }
        if q.t1 > cutoff {
            return Err(CalibrationError::QuoteOutOfRange {
                index,
                t0: q.t0,
                t1: q.t1,
                cutoff,
            });
        }
        let row = basis.period_row(q.t0, q.t1);
        for (c, v) in row.into_iter().enumerate() {
            design[(index, c)] = v;
        }
        mid[index] = log_growth(q.mid_rate(), q.days());
        bid[index] = log_growth(q.bid, q.days());
        ask[index] = log_growth(q.ask, q.days());
        approximate_rows.push(q.kind == QuoteKind::OneMonth);
    }
    let fixed = anchor_sofr
        .map(|r| vec![(0, forward_from_spot(r))])
        .unwrap_or_default();
    Ok(CalibrationSystem {
        design,
        mid,
        bid,
        ask,
        fixed,
        approximate_rows,
    })
}

/// The system restricted to free coefficients, bands shifted by the fixed
/// contribution.
struct Reduced {
    a: DMatrix<f64>,
    shift: DVector<f64>,
    free: Vec<usize>,
}

impl CalibrationSystem {
    fn reduce(&self) -> Result<Reduced, CalibrationError> {
        let k = self.design.ncols();
        let mut is_fixed = vec![false; k];
        let mut shift = DVector::zeros(self.design.nrows());
        for &(idx, value) in &self.fixed {
            if idx >= k {
                return Err(CalibrationError::InvalidConstraint(idx));
            }
            is_fixed[idx] = true;
            shift += self.design.column(idx) * value;
        }
        let free: Vec<usize> = (0..k).filter(|&c| !is_fixed[c]).collect();
        let a = self.design.select_columns(free.iter());
        Ok(Reduced { a, shift, free })
    }

    fn assemble(&self, free: &[usize], xi_free: &DVector<f64>) -> Vec<f64> {
        let mut xi = vec![0.0; self.design.ncols()];
        for &(idx, v) in &self.fixed {
            xi[idx] = v;
        }
        for (i, &c) in free.iter().enumerate() {
            xi[c] = xi_free[i];
        }
        xi
    }

    /// Gradient of `sum_j dist((A xi)_j, [bid_j, ask_j])^2` with respect to the
    /// free coefficients.
    pub fn band_gradient(&self, coeffs: &[f64]) -> Vec<f64> {
        let xi = DVector::from_column_slice(coeffs);
        let z = &self.design * xi;
        let e = band_residual(&z, &self.bid, &self.ask);
        let g = self.design.transpose() * e * -2.0;
        let fixed: Vec<usize> = self.fixed.iter().map(|f| f.0).collect();
        (0..coeffs.len())
            .filter(|c| !fixed.contains(c))
            .map(|c| g[c])
            .collect()
    }
}

/// `clamp(z, lo, hi) - z` componentwise.
fn band_residual(z: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        z.len(),
        z.iter()
            .zip(lo.iter().zip(hi.iter()))
            .map(|(&zj, (&l, &h))| zj.clamp(l, h) - zj),
    )
}

/// Minimum-norm least-squares fit to mid quotes.
pub fn solve_mid(system: &CalibrationSystem) -> Result<CalibrationResult, CalibrationError> {
    let red = system.reduce()?;
    let rhs = &system.mid - &red.shift;
    let (xi_free, rank) = min_norm_solve(&red.a, &rhs, RANK_RTOL)
        .ok_or_else(|| CalibrationError::NumericalFailure("SVD did not converge".into()))?;
    let coeffs = system.assemble(&red.free, &xi_free);
    let e = &system.mid - &system.design * DVector::from_column_slice(&coeffs);
    Ok(CalibrationResult {
        objective: e.norm_squared(),
        residuals: e.iter().copied().collect(),
        coeffs,
        rank,
        iterations: 1,
    })
}

/// Least-squares fit to bid/ask bands.
pub fn solve_bidask(system: &CalibrationSystem) -> Result<CalibrationResult, CalibrationError> {
    let red = system.reduce()?;
    let lo = &system.bid - &red.shift;
    let hi = &system.ask - &red.shift;
    if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
        return Err(CalibrationError::InvalidQuote {
            index: 0,
            reason: "bid band above ask band".into(),
        });
    }
    let a = &red.a;
    let (pinv, rank) = pseudo_inverse(a, RANK_RTOL)
        .ok_or_else(|| CalibrationError::NumericalFailure("SVD did not converge".into()))?;

    let mid = (&lo + &hi) * 0.5;
    let mut xi = &pinv * &mid;
    let mut iterations = 0;
    let scale = 1.0 + lo.amax().max(hi.amax());
    for _ in 0..MAX_NEWTON_ITERATIONS {
        iterations += 1;
        let z = a * &xi;
        let e = band_residual(&z, &lo, &hi);
        let grad = a.transpose() * &e * -2.0;
        if grad.norm() <= 1e-15 * scale {
            break;
        }
        // Newton step: least squares on the currently violated rows
        let active: Vec<usize> = (0..e.len()).filter(|&j| e[j] != 0.0).collect();
        let a_s = a.select_rows(active.iter());
        let e_s = DVector::from_iterator(active.len(), active.iter().map(|&j| e[j]));
        let mut step = match min_norm_solve(&a_s, &e_s, RANK_RTOL) {
            Some((p, _)) => p,
            None => -grad.clone(),
        };
        if grad.dot(&step) >= 0.0 {
            step = -grad.clone();
        }
        let w = a * &step;
        let alpha = exact_line_search(&z, &w, &lo, &hi);
        if alpha <= 0.0 {
            break;
        }
        let next = &xi + &step * alpha;
        if next == xi {
            break;
        }
        xi = next;
    }
    let grad_norm = |x: &DVector<f64>| (a.transpose() * band_residual(&(a * x), &lo, &hi)).norm();
    if grad_norm(&xi) > 1e-13 * scale {
        // Newton stalled on a degenerate face
        if let Ok((polished, extra)) = bounded_least_squares(a, &lo, &hi, &xi) {
            iterations += extra;
            if grad_norm(&polished) < grad_norm(&xi) {
                xi = polished;
            }
        }
    }
    if xi.iter().any(|v| !v.is_finite()) {
        return Err(CalibrationError::NumericalFailure(
            "non-finite coefficients".into(),
        ));
    }

    // The optimal residual r = z - clamp(z) is unique; every xi with
    // A xi - r inside the bands is optimal. Pick the least-norm one.
    let z = a * &xi;
    let r = -band_residual(&z, &lo, &hi);
    let lo_opt = &lo + &r;
    let hi_opt = &hi + &r;
    let (xi_min, extra) = min_norm_in_band(a, &lo_opt, &hi_opt)
        .or_else(|_| {
            // degenerate optimal face: retry with the bands opened by rounding level
            let slack = 1e-13 * scale;
            min_norm_in_band(a, &lo_opt.add_scalar(-slack), &hi_opt.add_scalar(slack))
        })
        .unwrap_or_else(|_| (xi.clone(), 0));
    iterations += extra;
    let xi_min = toward(
        a,
        &lo_opt,
        &hi_opt,
        &xi,
        &xi_min,
        4.0 * f64::EPSILON * scale,
    );
    let xi_min = if grad_norm(&xi_min) <= grad_norm(&xi).max(1e-13 * scale) {
        xi_min
    } else {
        xi
    };

    let coeffs = system.assemble(&red.free, &xi_min);
    let z_full = &system.design * DVector::from_column_slice(&coeffs);
    let e = band_residual(&z_full, &system.bid, &system.ask);
    Ok(CalibrationResult {
        objective: e.norm_squared(),
        residuals: e.iter().copied().collect(),
        coeffs,
        rank,
        iterations,
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// `min |A xi - v|^2` over free `xi` and `lo <= v <= hi` by bounded-variable
/// least squares, started from the clamp pattern of `xi0`.
fn bounded_least_squares(
    a: &DMatrix<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    xi0: &DVector<f64>,
) -> Result<(DVector<f64>, usize), CalibrationError> {
    let (m, n) = a.shape();
    let z0 = a * xi0;
    let mut state = vec![Bound::Free; m];
    let mut v = DVector::zeros(m);
    for j in 0..m {
        if lo[j] == hi[j] || z0[j] <= lo[j] {
            state[j] = Bound::Lower;
            v[j] = lo[j];
        } else if z0[j] >= hi[j] {
            state[j] = Bound::Upper;
            v[j] = hi[j];
        } else {
            v[j] = z0[j];
        }
    }
    let mut xi = xi0.clone();
    let tol = 1e-14 * (1.0 + a.amax()) * (1.0 + lo.amax().max(hi.amax()));

    // least squares over xi and the free v with the bound v fixed
    let solve = |state: &[Bound],
                 v: &DVector<f64>|
     -> Result<(DVector<f64>, DVector<f64>), CalibrationError> {
        let free: Vec<usize> = (0..m).filter(|&j| state[j] == Bound::Free).collect();
        let fixed: Vec<usize> = (0..m).filter(|&j| state[j] != Bound::Free).collect();
        // free rows are fitted exactly, so xi only answers to the fixed rows
        let a_b = a.select_rows(fixed.iter());
        let v_b = DVector::from_iterator(fixed.len(), fixed.iter().map(|&j| v[j]));
        let xi = if fixed.is_empty() {
            DVector::zeros(n)
        } else {
            min_norm_solve(&a_b, &v_b, RANK_RTOL)
                .ok_or_else(|| CalibrationError::NumericalFailure("SVD did not converge".into()))?
                .0
        };
        let z = a * &xi;
        let mut out = v.clone();
        for &j in &free {
            out[j] = z[j];
        }
        Ok((xi, out))
    };

    let mut rejected = vec![false; m];
    let mut best = f64::INFINITY;
    for it in 0..MAX_ACTIVE_SET_ITERATIONS {
        let (cand_xi, cand_v) = solve(&state, &v)?;
        let feasible =
            (0..m).all(|j| state[j] != Bound::Free || (cand_v[j] >= lo[j] && cand_v[j] <= hi[j]));
        if !feasible {
            // move towards the candidate until the first free v reaches a bound
            let mut alpha: f64 = 1.0;
            for j in 0..m {
                if state[j] != Bound::Free {
                    continue;
                }
                let d = cand_v[j] - v[j];
                if cand_v[j] < lo[j] && d < 0.0 {
                    alpha = alpha.min((lo[j] - v[j]) / d);
                } else if cand_v[j] > hi[j] && d > 0.0 {
                    alpha = alpha.min((hi[j] - v[j]) / d);
                }
            }
            let alpha = alpha.clamp(0.0, 1.0);
            xi += (&cand_xi - &xi) * alpha;
            for j in 0..m {
                if state[j] == Bound::Free {
                    v[j] += alpha * (cand_v[j] - v[j]);
                    if v[j] <= lo[j] + tol {
                        state[j] = Bound::Lower;
                        v[j] = lo[j];
                    } else if v[j] >= hi[j] - tol {
                        state[j] = Bound::Upper;
                        v[j] = hi[j];
                    }
                }
            }
            continue;
        }
        let value = (a * &cand_xi - &cand_v).norm_squared();
        if value < best * (1.0 - 1e-12) {
            best = value;
            rejected.iter_mut().for_each(|r| *r = false);
        }
        xi = cand_xi;
        v = cand_v;
        // a bound v wants to move inside when A xi lies on the inner side;
        // lowest index first to avoid cycling on degenerate faces
        let z = a * &xi;
        let pick = (0..m)
            .filter(|&j| !rejected[j] && lo[j] < hi[j])
            .filter_map(|j| match state[j] {
                Bound::Lower if z[j] - lo[j] > tol => Some((j, z[j] - lo[j])),
                Bound::Upper if hi[j] - z[j] > tol => Some((j, hi[j] - z[j])),
                _ => None,
            })
            .next();
        let Some((t, _)) = pick else {
            return Ok((xi, it));
        };
        let previous = state[t];
        state[t] = Bound::Free;
        let (_, trial_v) = solve(&state, &v)?;
        let inward = match previous {
            Bound::Lower => trial_v[t] > lo[t],
            _ => trial_v[t] < hi[t],
        };
        if !inward {
            state[t] = previous;
            rejected[t] = true;
        }
    }
    Err(CalibrationError::NumericalFailure(
        "bounded least-squares iteration limit".into(),
    ))
}

/// Furthest point from `from` towards `to` that stays within the bands,
/// allowing `tol` of slack beyond whatever `from` already violates.
fn toward(
    a: &DMatrix<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    from: &DVector<f64>,
    to: &DVector<f64>,
    tol: f64,
) -> DVector<f64> {
    let z = a * from;
    let w = a * (to - from);
    let mut t: f64 = 1.0;
    for j in 0..z.len() {
        let lo_j = lo[j].min(z[j]) - tol;
        let hi_j = hi[j].max(z[j]) + tol;
        if w[j] > 0.0 {
            t = t.min((hi_j - z[j]) / w[j]);
        } else if w[j] < 0.0 {
            t = t.min((lo_j - z[j]) / w[j]);
        }
    }
    from + (to - from) * t.max(0.0)
}

/// Minimiser over `alpha >= 0` of the convex piecewise quadratic
/// `sum_j dist(z_j + alpha w_j, [lo_j, hi_j])^2`.
fn exact_line_search(
    z: &DVector<f64>,
    w: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> f64 {
    let slope = |alpha: f64| -> f64 {
        z.iter()
            .zip(w.iter())
            .zip(lo.iter().zip(hi.iter()))
            .map(|((&zj, &wj), (&l, &h))| {
                let v = zj + alpha * wj;
                2.0 * wj * (v - v.clamp(l, h))
            })
            .sum()
    };
    if slope(0.0) >= 0.0 {
        return 0.0;
    }
    let mut breaks: Vec<f64> = Vec::new();
    for j in 0..z.len() {
        if w[j] != 0.0 {
            for bound in [lo[j], hi[j]] {
                let t = (bound - z[j]) / w[j];
                if t > 0.0 && t.is_finite() {
                    breaks.push(t);
                }
            }
        }
    }
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();
    let mut left = 0.0;
    let mut s_left = slope(0.0);
    for &b in &breaks {
        let s_b = slope(b);
        if s_b >= 0.0 {
            // slope is linear on [left, b]
            return left + (b - left) * (-s_left) / (s_b - s_left);
        }
        left = b;
        s_left = s_b;
    }
    // beyond the last breakpoint the slope is linear with the final active set
    let s_next = slope(left + 1.0);
    if s_next > s_left {
        left + (-s_left) / (s_next - s_left)
    } else {
        left
    }
}

/// `min |xi|^2` subject to `lo <= A xi <= hi` as a least-distance problem:
/// with constraints `C xi >= d`, the non-negative least-squares solution `u`
/// of `[C^T; d^T] u ~ e_{n+1}` gives residual `r` and `xi = -r[..n] / r[n]`.
fn min_norm_in_band(
    a: &DMatrix<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Result<(DVector<f64>, usize), CalibrationError> {
    let (jn, n) = a.shape();
    if n == 0 {
        return Ok((DVector::zeros(0), 0));
    }
    let m = 2 * jn;
    let mut e = DMatrix::zeros(n + 1, m);
    for j in 0..jn {
        for k in 0..n {
            e[(k, j)] = a[(j, k)];
            e[(k, jn + j)] = -a[(j, k)];
        }
        e[(n, j)] = lo[j];
        e[(n, jn + j)] = -hi[j];
    }
    let mut f = DVector::zeros(n + 1);
    f[n] = 1.0;
    let (u, iterations) = nnls(&e, &f)?;
    let r = &e * u - f;
    if r[n].abs() <= 1e-14 {
        return Err(CalibrationError::NumericalFailure(
            "bands have no common point".into(),
        ));
    }
    let xi = DVector::from_iterator(n, (0..n).map(|k| -r[k] / r[n]));
    Ok((polish(a, lo, hi, xi), iterations))
}

/// Re-solve the least-norm point on the binding constraints of `xi`, which
/// removes the rounding left by the non-negative least-squares detour.
fn polish(
    a: &DMatrix<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    xi: DVector<f64>,
) -> DVector<f64> {
    let z = a * &xi;
    let scale = 1.0 + lo.amax().max(hi.amax());
    let band_tol = 1e-7 * scale;
    let mut rows = Vec::new();
    let mut target = Vec::new();
    for j in 0..z.len() {
        if z[j] - lo[j] <= band_tol {
            rows.push(j);
            target.push(lo[j]);
        } else if hi[j] - z[j] <= band_tol {
            rows.push(j);
            target.push(hi[j]);
        }
    }
    if rows.is_empty() {
        return DVector::zeros(xi.len());
    }
    let sub = a.select_rows(rows.iter());
    let Some((candidate, _)) = min_norm_solve(&sub, &DVector::from_vec(target), RANK_RTOL) else {
        return xi;
    };
    let zc = a * &candidate;
    let violation = |z: &DVector<f64>| {
        (0..z.len())
            .map(|j| (lo[j] - z[j]).max(z[j] - hi[j]).max(0.0))
            .fold(0.0, f64::max)
    };
    let close = (&candidate - &xi).norm() <= 1e-6 * (1.0 + xi.norm());
    if close && violation(&zc) <= violation(&z).max(1e-15 * scale) {
        candidate
    } else {
        xi
    }
}

/// Lawson-Hanson active-set solver for `min |E u - f|`, `u >= 0`.
fn nnls(e: &DMatrix<f64>, f: &DVector<f64>) -> Result<(DVector<f64>, usize), CalibrationError> {
    let m = e.ncols();
    let mut u = DVector::zeros(m);
    let mut passive = vec![false; m];
    let tol = 1e-13 * (1.0 + e.amax()) * (1.0 + f.amax());
    let solve_passive = |passive: &[bool]| -> Result<DVector<f64>, CalibrationError> {
        let idx: Vec<usize> = (0..m).filter(|&j| passive[j]).collect();
        let sub = e.select_columns(idx.iter());
        let (z, _) = min_norm_solve(&sub, f, RANK_RTOL)
            .ok_or_else(|| CalibrationError::NumericalFailure("SVD did not converge".into()))?;
        let mut full = DVector::zeros(m);
        for (c, &j) in idx.iter().enumerate() {
            full[j] = z[c];
        }
        Ok(full)
    };
    // columns whose entry gave a non-positive coefficient; retried once `u` moves
    let mut rejected = vec![false; m];
    for it in 0..MAX_ACTIVE_SET_ITERATIONS {
        let w = e.transpose() * (f - e * &u);
        let Some(t) = (0..m)
            .filter(|&j| !passive[j] && !rejected[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]))
        else {
            return Ok((u, it));
        };
        passive[t] = true;
        let mut first = true;
        loop {
            let z = solve_passive(&passive)?;
            if first && z[t] <= 0.0 {
                passive[t] = false;
                rejected[t] = true;
                break;
            }
            if first {
                rejected.iter_mut().for_each(|r| *r = false);
                first = false;
            }
            if (0..m).all(|j| !passive[j] || z[j] > 0.0) {
                u = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for j in 0..m {
                if passive[j] && z[j] <= 0.0 {
                    alpha = alpha.min(u[j] / (u[j] - z[j]));
                }
            }
            u += (&z - &u) * alpha;
            for j in 0..m {
                if passive[j] && u[j] <= 1e-15 {
                    passive[j] = false;
                    u[j] = 0.0;
                }
            }
        }
    }
    Err(CalibrationError::NumericalFailure(
        "active-set iteration limit".into(),
    ))
}

/// Calibrate each day independently with [`solve_mid`]. Results keep the
/// input order; a failing day does not stop the others.
pub fn daily_backfill(
    history: &[QuoteSet],
    basis: &BasisFamily,
) -> Vec<(Date, Result<CalibrationResult, CalibrationError>)> {
    history
        .par_iter()
        .map(|day| {
            let res =
                build_system(&day.quotes, basis, day.anchor_sofr).and_then(|sys| solve_mid(&sys));
            (day.date, res)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{BasisKind, ForwardCurve};
    use crate::DELTA;
    use approx::assert_abs_diff_eq;

    fn manual_system(a: &[f64], rows: usize, bid: &[f64], ask: &[f64]) -> CalibrationSystem {
        let design = DMatrix::from_row_slice(rows, a.len() / rows, a);
        let bid = DVector::from_column_slice(bid);
        let ask = DVector::from_column_slice(ask);
        CalibrationSystem {
            design,
            mid: (&bid + &ask) * 0.5,
            bid,
            ask,
            fixed: vec![],
            approximate_rows: vec![false; rows],
        }
    }

    #[test]
    fn constant_basis_row_is_indicator_sum() {
        let basis = BasisFamily::new(BasisKind::PiecewiseConstant, vec![0, 100, 200]).unwrap();
        let sys = build_system(
            &[Quote::at(110, 200, QuoteKind::ThreeMonth, 0.05)],
            &basis,
            None,
        )
        .unwrap();
        assert_abs_diff_eq!(sys.design[(0, 2)], 90.0 * DELTA, epsilon = 1e-15);
        assert_eq!(sys.design[(0, 0)], 0.0);
        assert_eq!(sys.design[(0, 1)], 0.0);
        assert_eq!(sys.bid[0], sys.ask[0]);
        assert_abs_diff_eq!(
            sys.bid[0],
            (1.0 + 0.05 * 90.0 * DELTA).ln(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn linear_basis_row_matches_direct_sum() {
        let basis = BasisFamily::new(BasisKind::PiecewiseLinear, vec![0, 30, 91, 182]).unwrap();
        let sys = build_system(
            &[Quote::at(20, 110, QuoteKind::ThreeMonth, 0.05)],
            &basis,
            None,
        )
        .unwrap();
        // hat functions evaluated by hand
        let hat = |k: usize, s: f64| -> f64 {
            let t = [0.0, 30.0, 91.0, 182.0];
            let left = if k == 0 { f64::NEG_INFINITY } else { t[k - 1] };
            let right = if k == 3 { f64::INFINITY } else { t[k + 1] };
            if s <= left || s >= right {
                0.0
            } else if s <= t[k] {
                if k == 0 {
                    1.0
                } else {
                    (s - left) / (t[k] - left)
                }
            } else if k == 3 {
                1.0
            } else {
                (right - s) / (right - t[k])
            }
        };
        for k in 0..4 {
            let expect: f64 = (20..110).map(|s| hat(k, s as f64)).sum::<f64>() * DELTA;
            assert_abs_diff_eq!(sys.design[(0, k)], expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn build_errors() {
        let basis = BasisFamily::new(BasisKind::PiecewiseLinear, vec![0, 30]).unwrap();
        assert_eq!(
            build_system(&[], &basis, None),
            Err(CalibrationError::EmptyQuoteSet)
        );
        assert!(matches!(
            build_system(&[Quote::at(0, 31, QuoteKind::OneMonth, 0.05)], &basis, None),
            Err(CalibrationError::QuoteOutOfRange { .. })
        ));
        assert!(matches!(
            build_system(
                &[Quote::new(0, 20, QuoteKind::OneMonth, 0.06, 0.05)],
                &basis,
                None
            ),
            Err(CalibrationError::InvalidQuote { .. })
        ));
    }

    #[test]
    fn mid_min_norm_underdetermined() {
        let sys = manual_system(&[1.0, 0.0], 1, &[2.0], &[2.0]);
        let r = solve_mid(&sys).unwrap();
        assert_abs_diff_eq!(r.coeffs[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.coeffs[1], 0.0, epsilon = 1e-14);
        assert_eq!(r.rank, 1);
    }

    #[test]
    fn mid_square_exact_fit() {
        let sys = manual_system(&[2.0, 1.0, 1.0, 3.0], 2, &[1.0, 2.0], &[1.0, 2.0]);
        let r = solve_mid(&sys).unwrap();
        assert_abs_diff_eq!(r.coeffs[0], 0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(r.coeffs[1], 0.6, epsilon = 1e-14);
        assert!(r.objective < 1e-28);
    }

    #[test]
    fn bidask_contradictory_quotes() {
        let sys = manual_system(&[1.0, 1.0], 2, &[1.0, 4.0], &[2.0, 5.0]);
        let r = solve_bidask(&sys).unwrap();
        assert_abs_diff_eq!(r.coeffs[0], 3.0, epsilon = 1e-12);
        // b_bid <= A xi + e <= b_ask
        assert_abs_diff_eq!(r.residuals[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.residuals[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.objective, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn bidask_feasible_interior_is_min_norm() {
        // one quote, one coefficient achievable: band [1, 3] on xi0 + xi1
        let sys = manual_system(&[1.0, 1.0], 1, &[1.0], &[3.0]);
        let r = solve_bidask(&sys).unwrap();
        assert_abs_diff_eq!(r.residuals[0], 0.0, epsilon = 1e-14);
        // least-norm xi with xi0 + xi1 >= 1 is (0.5, 0.5)
        assert_abs_diff_eq!(r.coeffs[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.coeffs[1], 0.5, epsilon = 1e-12);

        // band containing zero: least-norm point is the origin
        let sys = manual_system(&[1.0, 2.0], 1, &[-1.0], &[3.0]);
        let r = solve_bidask(&sys).unwrap();
        assert!(r.coeffs.iter().all(|c| c.abs() < 1e-14));
    }

    #[test]
    fn anchored_first_coefficient_is_exact() {
        let basis = BasisFamily::new(BasisKind::PiecewiseLinear, vec![0, 30, 91]).unwrap();
        let quotes = [Quote::new(0, 30, QuoteKind::OneMonth, 0.051, 0.0515)];
        let sys = build_system(&quotes, &basis, Some(0.0532)).unwrap();
        for r in [solve_mid(&sys).unwrap(), solve_bidask(&sys).unwrap()] {
            let target = (0.0532 * DELTA).ln_1p() / DELTA;
            assert!(
                (r.coeffs[0] - target).abs() <= 1e-14,
                "{} vs {target}",
                r.coeffs[0]
            );
        }
    }

    #[test]
    fn zero_spread_round_trip() {
        let basis =
            BasisFamily::new(BasisKind::PiecewiseLinear, vec![0, 30, 91, 182, 365]).unwrap();
        let truth =
            ForwardCurve::new(basis.clone(), vec![0.053, 0.052, 0.049, 0.045, 0.04]).unwrap();
        let periods = [
            (0, 30),
            (30, 61),
            (20, 111),
            (111, 202),
            (202, 293),
            (293, 365),
            (61, 91),
        ];
        let quotes: Vec<Quote> = periods
            .iter()
            .map(|&(a, b)| {
                Quote::at(
                    a,
                    b,
                    QuoteKind::ThreeMonth,
                    truth.implied_futures_rate(a, b).unwrap(),
                )
            })
            .collect();
        let sys = build_system(&quotes, &basis, Some(truth.spot_sofr())).unwrap();
        for r in [solve_mid(&sys).unwrap(), solve_bidask(&sys).unwrap()] {
            let fitted = ForwardCurve::new(basis.clone(), r.coeffs.clone()).unwrap();
            for q in &quotes {
                let implied = fitted.implied_futures_rate(q.t0, q.t1).unwrap();
                assert!((implied - q.bid).abs() < 1e-10, "{implied} vs {}", q.bid);
            }
        }
    }

    #[test]
    fn line_search_finds_kink_minimum() {
        let z = DVector::from_vec(vec![0.0, 0.0]);
        let w = DVector::from_vec(vec![1.0, 1.0]);
        let lo = DVector::from_vec(vec![1.0, 4.0]);
        let hi = DVector::from_vec(vec![2.0, 5.0]);
        assert_abs_diff_eq!(exact_line_search(&z, &w, &lo, &hi), 3.0, epsilon = 1e-14);
    }
}
