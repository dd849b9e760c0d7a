//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Moore-Penrose pseudoinverse with singular values below `rtol * sigma_max`
/// treated as zero. Returns `None` if the SVD fails to converge.
pub fn pseudo_inverse(a: &DMatrix<f64>, rtol: f64) -> Option<(DMatrix<f64>, usize)> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Some((DMatrix::zeros(n, m), 0));
    }
    // faer's SVD is accurate to rounding on rank-deficient designs, where the
    // nalgebra one can lose several digits
    let svd = faer::Mat::from_fn(m, n, |i, j| a[(i, j)]).thin_svd().ok()?;
    let (u, sigma, v) = (svd.U(), svd.S(), svd.V());
    let k = sigma.dim();
    let sigma_max = (0..k).map(|l| sigma[l]).fold(0.0, f64::max);
    let cutoff = rtol * sigma_max;
    let mut pinv = DMatrix::zeros(n, m);
    let mut rank = 0;
    for l in 0..k {
        let s = sigma[l];
        if s > cutoff && s > 0.0 {
            rank += 1;
            for r in 0..n {
                let scale = v[(r, l)] / s;
                for c in 0..m {
                    pinv[(r, c)] += scale * u[(c, l)];
                }
            }
        }
    }
    Some((pinv, rank))
}

/// Minimum-norm least-squares solution of `a x ~ b`.
pub fn min_norm_solve(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    rtol: f64,
) -> Option<(DVector<f64>, usize)> {
    let (pinv, rank) = pseudo_inverse(a, rtol)?;
    Some((pinv * b, rank))
}

/// Lower Cholesky factor of a symmetric positive semidefinite matrix.
///
/// Pivots at or below `tol * max_diag` are treated as exact zeros and their
/// columns zeroed, so singular covariances (including the zero matrix) are
/// accepted. Returns `None` on a clearly negative pivot.
pub fn psd_cholesky(m: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return None;
    }
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    let eps = tol * scale.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -eps.max(1e-12 * scale) {
            return None;
        }
        if d <= eps {
            continue;
        }
        let piv = d.sqrt();
        l[(j, j)] = piv;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / piv;
        }
    }
    Some(l)
}
