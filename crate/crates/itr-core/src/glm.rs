//! Nuisance models: linear regression for the outcome surface m̂(x) and
//! logistic regression for the propensity score π̂(x).
//!
//! Both fit with an intercept (stored last) and solve their least-squares
//! subproblems through a rank-revealing column-pivoted QR — a rank-deficient
//! design is reported as an error rather than silently pseudo-inverted.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// The standard logistic function 1 / (1 + e^{-x}).
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Ordinary / weighted linear regression fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// Length p+1, intercept last.
    pub coefficients: DVector<f64>,
    /// Residual sum of squares divided by (n − p − 1).
    pub residual_variance: f64,
}

impl LinearModel {
    /// Fitted values for new rows.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let design = with_intercept(x);
        if design.ncols() != self.coefficients.len() {
            return Err(Error::Invalid(format!(
                "model has {} coefficients but data implies {}",
                self.coefficients.len(),
                design.ncols()
            )));
        }
        Ok(&design * &self.coefficients)
    }
}

/// Logistic regression fit by iteratively reweighted least squares.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    /// Length p+1, intercept last.
    pub coefficients: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// ∞-norm of the score vector at the returned coefficients.
    pub max_score: f64,
}

impl LogisticModel {
    /// Class-1 probabilities, clipped into [clip, 1−clip].
    ///
    /// Clipping keeps downstream inverse-probability weights bounded; `clip`
    /// must lie in (0, 0.5).
    pub fn predict_proba(&self, x: &DMatrix<f64>, clip: f64) -> Result<Vec<f64>> {
        if !(clip > 0.0 && clip < 0.5) {
            return Err(Error::Invalid(format!(
                "clip must lie in (0, 0.5), got {clip}"
            )));
        }
        let design = with_intercept(x);
        if design.ncols() != self.coefficients.len() {
            return Err(Error::Invalid(format!(
                "model has {} coefficients but data implies {}",
                self.coefficients.len(),
                design.ncols()
            )));
        }
        let lin = &design * &self.coefficients;
        Ok(lin
            .iter()
            .map(|&v| logistic(v).clamp(clip, 1.0 - clip))
            .collect())
    }
}

/// Options for [`fit_logistic_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    /// Stop when the score vector's ∞-norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Ridge penalty on the covariate coefficients (never the intercept);
    /// 0 disables it. A small value rescues quasi-separated data.
    pub ridge: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            tol: 1e-8,
            max_iter: 100,
            ridge: 0.0,
        }
    }
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    DMatrix::from_fn(n, p + 1, |i, j| if j < p { x[(i, j)] } else { 1.0 })
}

fn check_weights(weights: Option<&[f64]>, n: usize) -> Result<()> {
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::Invalid(format!(
                "weights length {} does not match {n} rows",
                w.len()
            )));
        }
        if w.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::Invalid(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::Invalid("weights are all zero".into()));
        }
    }
    Ok(())
}

/// Numerical rank via column-pivoted QR with a scaled diagonal tolerance.
pub(crate) fn matrix_rank(m: &DMatrix<f64>) -> usize {
    let k = m.ncols();
    let r = m.clone().col_piv_qr().r();
    let max_diag = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let tol = max_diag * (m.nrows().max(k) as f64) * f64::EPSILON * 16.0;
    (0..k).filter(|&i| r[(i, i)].abs() > tol).count()
}

/// Least-squares solve of `design·β ≈ rhs` via column-pivoted QR, erroring on
/// rank deficiency with the indices of linearly dependent columns.
fn ls_solve(design: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let m = design.ncols();
    let qr = design.clone().col_piv_qr();
    let r = qr.r();
    let max_diag = (0..m).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let tol = max_diag * (design.nrows().max(m) as f64) * f64::EPSILON * 16.0;
    let rank = (0..m).filter(|&i| r[(i, i)].abs() > tol).count();
    if rank < m {
        let deps = dependent_columns(design, rank);
        return Err(Error::Invalid(format!(
            "design matrix is rank deficient (rank {rank} of {m}); linearly dependent \
             columns (0-based, intercept last): {deps:?}"
        )));
    }
    let qt_b = qr.q().transpose() * rhs;
    let mut z = r
        .solve_upper_triangular(&qt_b)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    qr.p().inv_permute_rows(&mut z);
    Ok(z)
}

/// Columns whose removal does not lower the design's rank (i.e. members of a
/// linearly dependent set). Only called on the error path.
pub(crate) fn dependent_columns(design: &DMatrix<f64>, full_rank: usize) -> Vec<usize> {
    let m = design.ncols();
    let mut deps = Vec::new();
    for j in 0..m {
        let reduced = design.clone().remove_column(j);
        if matrix_rank(&reduced) == full_rank {
            deps.push(j);
        }
    }
    deps
}

/// Fits y ≈ X·β + intercept by (weighted) least squares.
///
/// Requires n > p+1. Uniform weights reproduce the unweighted fit exactly.
pub fn fit_linear(x: &DMatrix<f64>, y: &[f64], weights: Option<&[f64]>) -> Result<LinearModel> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Invalid(format!(
            "outcome length {} does not match {n} rows",
            y.len()
        )));
    }
    if n <= p + 1 {
        return Err(Error::Invalid(format!(
            "need more rows than coefficients: n = {n}, p + 1 = {}",
            p + 1
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("outcome contains non-finite values".into()));
    }
    check_weights(weights, n)?;

    let mut design = with_intercept(x);
    let mut rhs = DVector::from_column_slice(y);
    if let Some(w) = weights {
        for i in 0..n {
            let s = w[i].sqrt();
            design.row_mut(i).scale_mut(s);
            rhs[i] *= s;
        }
    }
    let coefficients = ls_solve(&design, &rhs)?;
    let resid = &rhs - &design * &coefficients;
    let dof = (n - p - 1) as f64;
    let residual_variance = resid.norm_squared() / dof;
    Ok(LinearModel {
        coefficients,
        residual_variance,
    })
}

/// Fits a logistic regression of the binary vector `a` on `x` with the
/// default options; see [`fit_logistic_with`].
pub fn fit_logistic(
    x: &DMatrix<f64>,
    a: &[u8],
    weights: Option<&[f64]>,
) -> Result<LogisticModel> {
    fit_logistic_with(x, a, weights, &LogisticOptions::default())
}

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares.
///
/// Stops when the score vector's ∞-norm drops below `tol` or after
/// `max_iter` sweeps (the `converged` flag records which). Coefficients
/// exceeding 1e3 in magnitude abort with a quasi-separation error, since the
/// likelihood is then flat and the MLE effectively infinite.
pub fn fit_logistic_with(
    x: &DMatrix<f64>,
    a: &[u8],
    weights: Option<&[f64]>,
    opts: &LogisticOptions,
) -> Result<LogisticModel> {
    let (n, p) = x.shape();
    if a.len() != n {
        return Err(Error::Invalid(format!(
            "response length {} does not match {n} rows",
            a.len()
        )));
    }
    if n <= p + 1 {
        return Err(Error::Invalid(format!(
            "need more rows than coefficients: n = {n}, p + 1 = {}",
            p + 1
        )));
    }
    if a.iter().any(|&v| v > 1) {
        return Err(Error::Invalid("response values must be 0 or 1".into()));
    }
    let ones = a.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == n {
        return Err(Error::Invalid(format!(
            "single-class response: all {n} values are {}",
            if ones == 0 { 0 } else { 1 }
        )));
    }
    check_weights(weights, n)?;
    let base_w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; n],
    };

    let design = with_intercept(x);
    let m = p + 1;
    let mut beta = DVector::zeros(m);
    let mut max_score = f64::INFINITY;

    for iter in 0..opts.max_iter {
        let lin = &design * &beta;
        let prob: Vec<f64> = lin.iter().map(|&v| logistic(v)).collect();

        // Score of the (penalized) log-likelihood at the current coefficients.
        let mut score = DVector::zeros(m);
        for i in 0..n {
            let r = base_w[i] * (a[i] as f64 - prob[i]);
            for j in 0..m {
                score[j] += r * design[(i, j)];
            }
        }
        if opts.ridge > 0.0 {
            for j in 0..p {
                score[j] -= opts.ridge * beta[j];
            }
        }
        max_score = score.amax();
        if max_score < opts.tol {
            return Ok(LogisticModel {
                coefficients: beta,
                converged: true,
                iterations: iter,
                max_score,
            });
        }

        // Weighted least squares on the working response.
        let extra = if opts.ridge > 0.0 { p } else { 0 };
        let mut wd = DMatrix::zeros(n + extra, m);
        let mut wz = DVector::zeros(n + extra);
        for i in 0..n {
            let pq = (prob[i] * (1.0 - prob[i])).max(1e-12);
            let wi = (base_w[i] * pq).max(1e-300);
            let s = wi.sqrt();
            let z = lin[i] + (a[i] as f64 - prob[i]) / pq;
            for j in 0..m {
                wd[(i, j)] = s * design[(i, j)];
            }
            wz[i] = s * z;
        }
        if opts.ridge > 0.0 {
            let s = opts.ridge.sqrt();
            for j in 0..p {
                wd[(n + j, j)] = s;
            }
        }
        let next = ls_solve(&wd, &wz)?;
        if next.amax() > 1e3 {
            return Err(Error::Numerical(
                "quasi-separation detected while fitting the logistic model \
                 (|coefficient| exceeded 1e3); the classes are (almost) perfectly \
                 separable — consider a small ridge penalty"
                    .into(),
            ));
        }
        beta = next;
    }

    Ok(LogisticModel {
        coefficients: beta,
        converged: false,
        iterations: opts.max_iter,
        max_score,
    })
}
