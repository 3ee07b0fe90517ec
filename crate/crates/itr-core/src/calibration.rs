//! Entropy-balancing calibration weights.
//!
//! Reweights source units so that weighted covariate moments match the target
//! population, by minimizing the Kullback–Leibler divergence from uniform
//! weights subject to the moment constraints. The solver works in the dual:
//! weights take the exponential form `wᵢ ∝ exp(−λ·g(Xᵢ))`, and a damped Newton
//! iteration drives the constraint residual to zero.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, Population};
use crate::error::{Error, Result};
use crate::glm;

/// Default ∞-norm tolerance on the raw-scale constraint residual.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default Newton iteration cap.
pub const DEFAULT_MAX_ITER: usize = 200;

/// Moment targets computed from the target population.
///
/// `values` holds the per-covariate first moments, followed (when `order == 2`)
/// by the per-covariate uncentered second moments.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MomentTargets {
    pub values: Vec<f64>,
    pub order: u8,
}

impl MomentTargets {
    /// Number of balance constraints (not counting the sum-to-one constraint).
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The first-moment (mean) targets.
    pub fn means(&self) -> &[f64] {
        let p = self.values.len() / self.order as usize;
        &self.values[..p]
    }
}

/// Calibration weights over the source sample, with the dual solution on the
/// raw covariate scale: `wᵢ = exp(−dual·g(Xᵢ)) / Σⱼ exp(−dual·g(Xⱼ))`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CalibrationWeights {
    pub weights: Vec<f64>,
    pub dual: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Final ∞-norm of the raw-scale constraint residual.
    pub residual: f64,
}

impl CalibrationWeights {
    /// Kish effective sample size, `1 / Σwᵢ²`; equals n for uniform weights.
    pub fn effective_sample_size(&self) -> f64 {
        let s: f64 = self.weights.iter().map(|w| w * w).sum();
        1.0 / s
    }
}

/// Per-covariate balance summary before and after weighting.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BalanceRow {
    pub unweighted_mean: f64,
    pub weighted_mean: f64,
    pub target_mean: f64,
    /// Standardized mean difference (source sd denominator) before weighting.
    pub smd_before: f64,
    /// Standardized mean difference after weighting.
    pub smd_after: f64,
}

/// Balance diagnostics for every covariate column.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BalanceReport {
    pub rows: Vec<BalanceRow>,
}

impl BalanceReport {
    /// Largest absolute post-weighting standardized mean difference.
    pub fn max_smd_after(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.smd_after.abs())
            .fold(0.0, f64::max)
    }
}

/// Computes moment targets from the target rows of a dataset.
///
/// Order 1 yields covariate means; order 2 appends uncentered second moments.
pub fn target_moments(ds: &Dataset, order: u8) -> Result<MomentTargets> {
    if !(order == 1 || order == 2) {
        return Err(Error::Invalid(format!(
            "moment order must be 1 or 2, got {order}"
        )));
    }
    let x = ds.covariate_matrix(Some(Population::Target));
    if x.nrows() == 0 {
        return Err(Error::Invalid(
            "cannot compute moment targets: no target rows".into(),
        ));
    }
    let n = x.nrows() as f64;
    let p = x.ncols();
    let mut values = Vec::with_capacity(p * order as usize);
    for j in 0..p {
        values.push(x.column(j).sum() / n);
    }
    if order == 2 {
        for j in 0..p {
            values.push(x.column(j).map(|v| v * v).sum() / n);
        }
    }
    Ok(MomentTargets { values, order })
}

/// Constraint matrix g(X) for the requested order: the covariate columns,
/// followed (order 2) by their squares.
fn constraint_matrix(source_x: &DMatrix<f64>, order: u8) -> DMatrix<f64> {
    let (n, p) = source_x.shape();
    DMatrix::from_fn(n, p * order as usize, |i, j| {
        if j < p {
            source_x[(i, j)]
        } else {
            let v = source_x[(i, j - p)];
            v * v
        }
    })
}

/// Solves for entropy-balancing weights on the source sample.
///
/// Minimizes `Σ wᵢ log(n₀ wᵢ)` subject to `Σ wᵢ = 1` and `Σ wᵢ g(Xᵢ) = targets`,
/// via damped Newton on the dual. Constraint columns are standardized
/// internally for conditioning; the convergence criterion and the returned
/// residual are on the raw covariate scale. Deterministic.
pub fn solve_entropy_balance(
    source_x: &DMatrix<f64>,
    targets: &MomentTargets,
    tol: f64,
    max_iter: usize,
) -> Result<CalibrationWeights> {
    let (n, p) = source_x.shape();
    if n == 0 || p == 0 {
        return Err(Error::Invalid("source matrix is empty".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::Invalid("max_iter must be at least 1".into()));
    }
    if !(targets.order == 1 || targets.order == 2) {
        return Err(Error::Invalid(format!(
            "moment order must be 1 or 2, got {}",
            targets.order
        )));
    }
    let k = p * targets.order as usize;
    if targets.values.len() != k {
        return Err(Error::Invalid(format!(
            "got {} moment targets but the source matrix with {} covariates at order {} \
             requires {k}",
            targets.values.len(),
            p,
            targets.order
        )));
    }
    if source_x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("source matrix has non-finite entries".into()));
    }
    if targets.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("moment targets have non-finite entries".into()));
    }

    let g = constraint_matrix(source_x, targets.order);

    // Standardize each constraint column by its source mean and sd so the
    // Newton system is well conditioned regardless of covariate units.
    let mut col_mean = vec![0.0; k];
    let mut col_sd = vec![0.0; k];
    for j in 0..k {
        let c = g.column(j);
        let m = c.sum() / n as f64;
        col_mean[j] = m;
        if n > 1 {
            let ss: f64 = c.iter().map(|v| (v - m) * (v - m)).sum();
            col_sd[j] = (ss / (n as f64 - 1.0)).sqrt();
        }
    }
    if let Some(j) = col_sd.iter().position(|&s| s == 0.0) {
        let what = if j < p {
            format!("covariate column {j}")
        } else {
            format!("second-moment column for covariate {}", j - p)
        };
        return Err(Error::Invalid(format!(
            "{what} is constant in the source sample, so its balance constraint is \
             collinear with the sum-to-one constraint; drop it"
        )));
    }

    // c_ij = (g_ij − target_j) / sd_j: standardized constraint rows centered at
    // the (standardized) targets. The Newton residual is then Σᵢ wᵢ cᵢ.
    let c = DMatrix::from_fn(n, k, |i, j| (g[(i, j)] - targets.values[j]) / col_sd[j]);

    // Exact linear dependence among constraint columns makes the Hessian
    // singular everywhere; report the offending columns up front.
    let centered = {
        let mut m = c.clone();
        for j in 0..k {
            let mean = m.column(j).sum() / n as f64;
            for i in 0..n {
                m[(i, j)] -= mean;
            }
        }
        m
    };
    let rank = glm::matrix_rank(&centered);
    if rank < k {
        let deps = glm::dependent_columns(&centered, rank);
        return Err(Error::Invalid(format!(
            "balance constraints are collinear (rank {rank} of {k}); linearly dependent \
             constraint columns (0-based, means first then second moments): {deps:?}"
        )));
    }

    let weights_at = |lambda: &DVector<f64>| -> DVector<f64> {
        let mut u = -(&c * lambda);
        let umax = u.max();
        u.apply(|v| *v = (*v - umax).exp());
        let s = u.sum();
        u / s
    };
    // ∞-norm of the raw-scale constraint residual at weights w.
    let raw_residual = |w: &DVector<f64>| -> (DVector<f64>, f64) {
        let r_std = c.transpose() * w;
        let mut worst = 0.0f64;
        for j in 0..k {
            worst = worst.max((r_std[j] * col_sd[j]).abs());
        }
        (r_std, worst)
    };

    let mut lambda = DVector::zeros(k);
    let mut w = weights_at(&lambda);
    let (mut r_std, mut r_raw) = raw_residual(&w);
    let mut diverging = 0usize;

    for iter in 0..max_iter {
        if r_raw < tol {
            let dual = (0..k).map(|j| lambda[j] / col_sd[j]).collect();
            return Ok(CalibrationWeights {
                weights: w.iter().copied().collect(),
                dual,
                converged: true,
                iterations: iter,
                residual: r_raw,
            });
        }

        // H = Σ wᵢ cᵢcᵢᵀ − r rᵀ, the dual Hessian.
        let mut h = DMatrix::zeros(k, k);
        for i in 0..n {
            let row = c.row(i);
            for a in 0..k {
                let wa = w[i] * row[a];
                for b in a..k {
                    h[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..k {
            for b in a..k {
                let v = h[(a, b)] - r_std[a] * r_std[b];
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }

        let step = solve_spd(&h, &r_std)?;

        // Backtracking line search on the raw-scale residual.
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=30 {
            let cand = &lambda + t * &step;
            let wc = weights_at(&cand);
            let (rs, rr) = raw_residual(&wc);
            if rr.is_finite() && rr < r_raw {
                accepted = Some((cand, wc, rs, rr));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, wc, rs, rr)) => {
                lambda = cand;
                w = wc;
                r_std = rs;
                r_raw = rr;
                diverging = 0;
            }
            None => {
                // No step length reduced the residual; take the smallest step
                // anyway and count the stall.
                let cand = &lambda + t * &step;
                let wc = weights_at(&cand);
                let (rs, rr) = raw_residual(&wc);
                if !rr.is_finite() {
                    return Err(Error::Numerical(
                        "entropy-balance residual became non-finite".into(),
                    ));
                }
                lambda = cand;
                w = wc;
                r_std = rs;
                r_raw = rr;
                diverging += 1;
                if diverging >= 5 {
                    return Err(Error::Infeasible(format!(
                        "no progress after {} iterations; residual ∞-norm {r_raw:.3e} \
                         (tolerance {tol:.1e}); the target moments likely lie outside \
                         the convex hull of the source moments",
                        iter + 1
                    )));
                }
            }
        }
    }

    if r_raw < tol {
        let dual = (0..k).map(|j| lambda[j] / col_sd[j]).collect();
        return Ok(CalibrationWeights {
            weights: w.iter().copied().collect(),
            dual,
            converged: true,
            iterations: max_iter,
            residual: r_raw,
        });
    }
    Err(Error::Infeasible(format!(
        "did not converge within {max_iter} iterations; residual ∞-norm {r_raw:.3e} \
         (tolerance {tol:.1e}); the target moments may lie outside the convex hull \
         of the source moments"
    )))
}

/// Solves the symmetric positive-definite Newton system, with a small ridge
/// escalation if the factorization fails near degeneracy.
fn solve_spd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let k = h.ncols();
    let mut ridge = 1e-12 * (h.trace() / k as f64).max(1.0);
    for _ in 0..4 {
        let mut reg = h.clone();
        for j in 0..k {
            reg[(j, j)] += ridge;
        }
        if let Some(chol) = reg.cholesky() {
            return Ok(chol.solve(rhs));
        }
        ridge *= 100.0;
    }
    Err(Error::Numerical(
        "entropy-balance Newton system is not positive definite".into(),
    ))
}

/// Balance diagnostics for a weight vector against first-moment targets.
///
/// The standardized mean difference uses the unweighted source standard
/// deviation as denominator, before and after weighting alike; a constant
/// column with a matching target reports zero.
pub fn balance_diagnostics(
    source_x: &DMatrix<f64>,
    weights: &[f64],
    targets: &MomentTargets,
) -> Result<BalanceReport> {
    let (n, p) = source_x.shape();
    if weights.len() != n {
        return Err(Error::Invalid(format!(
            "got {} weights for {n} source rows",
            weights.len()
        )));
    }
    if n == 0 {
        return Err(Error::Invalid("source matrix is empty".into()));
    }
    let means = targets.means();
    if means.len() != p {
        return Err(Error::Invalid(format!(
            "got {} mean targets for {p} covariates",
            means.len()
        )));
    }
    let wsum: f64 = weights.iter().sum();
    if !(wsum > 0.0) || !wsum.is_finite() {
        return Err(Error::Invalid("weights must have a positive finite sum".into()));
    }
    let smd = |diff: f64, sd: f64| -> f64 {
        if sd > 0.0 {
            diff / sd
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY * diff.signum()
        }
    };
    let mut rows = Vec::with_capacity(p);
    for j in 0..p {
        let col = source_x.column(j);
        let um = col.sum() / n as f64;
        let wm = col
            .iter()
            .zip(weights)
            .map(|(v, w)| v * w)
            .sum::<f64>()
            / wsum;
        let sd = if n > 1 {
            (col.iter().map(|v| (v - um) * (v - um)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
        } else {
            0.0
        };
        rows.push(BalanceRow {
            unweighted_mean: um,
            weighted_mean: wm,
            target_mean: means[j],
            smd_before: smd(um - means[j], sd),
            smd_after: smd(wm - means[j], sd),
        });
    }
    Ok(BalanceReport { rows })
}

/// Writes `id,weight` rows for audit.
pub fn write_weights_csv_to<W: std::io::Write>(
    ids: &[String],
    weights: &[f64],
    out: W,
) -> Result<()> {
    if ids.len() != weights.len() {
        return Err(Error::Invalid(format!(
            "got {} ids for {} weights",
            ids.len(),
            weights.len()
        )));
    }
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["id", "weight"])?;
    for (id, w) in ids.iter().zip(weights) {
        wtr.write_record([id.as_str(), &format!("{w}")])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `id,weight` rows to a file path.
pub fn write_weights_csv(path: &std::path::Path, ids: &[String], weights: &[f64]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| {
        Error::Invalid(format!("cannot create {}: {e}", path.display()))
    })?;
    write_weights_csv_to(ids, weights, f)
}

/// Reads an `id,weight` file back, in file order.
///
/// Accepts exactly the format [`write_weights_csv`] produces: a header with
/// both columns (in either order, other columns ignored) and one finite
/// weight per row.
pub fn read_weights_csv(path: &std::path::Path) -> Result<(Vec<String>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Invalid(format!(
                "{} has no `{name}` column (found {:?})",
                path.display(),
                headers.iter().collect::<Vec<_>>()
            ))
        })
    };
    let id_col = col("id")?;
    let weight_col = col("weight")?;

    let mut ids = Vec::new();
    let mut weights = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let cell = record.get(weight_col).unwrap_or("");
        let w: f64 = cell.parse().map_err(|_| {
            Error::Invalid(format!("row {} has a non-numeric weight `{cell}`", row + 2))
        })?;
        if !w.is_finite() {
            return Err(Error::Invalid(format!(
                "row {} has a non-finite weight {w}",
                row + 2
            )));
        }
        ids.push(record.get(id_col).unwrap_or("").to_string());
        weights.push(w);
    }
    if ids.is_empty() {
        return Err(Error::Invalid(format!(
            "{} holds no weight rows",
            path.display()
        )));
    }
    Ok((ids, weights))
}
