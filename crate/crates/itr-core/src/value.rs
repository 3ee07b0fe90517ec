//! Calibrated AIPW policy value.
//!
//! For a candidate rule d the estimator is
//!
//! ```text
//! V̂(d; ŵ) = Σᵢ ŵᵢ·( [ Aᵢ·dᵢ/π̂ᵢ + (1−Aᵢ)(1−dᵢ)/(1−π̂ᵢ) ]·(Yᵢ − m̂(Xᵢ)) + m̂(Xᵢ) )
//! ```
//!
//! summed over source units, with calibration weights ŵ standing in for the
//! target covariate distribution (uniform weights recover the plain
//! source-sample value). This is the single objective the rule optimizer
//! maximizes, so the per-unit terms are precomputed once and each candidate
//! evaluation is a selection-and-sum.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rule::LinearItr;

/// Outcome predictions fed into the value: one shared regression, or one per
/// treatment arm (in which case the policy's assigned arm selects the model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OutcomePredictions {
    Pooled(Vec<f64>),
    ArmSpecific { treated: Vec<f64>, control: Vec<f64> },
}

impl OutcomePredictions {
    fn check(&self, n: usize) -> Result<()> {
        let all = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            OutcomePredictions::Pooled(m) => {
                if m.len() != n {
                    return Err(Error::Invalid(format!(
                        "outcome predictions have length {} but there are {n} source rows",
                        m.len()
                    )));
                }
                if !all(m) {
                    return Err(Error::Invalid("outcome predictions must be finite".into()));
                }
            }
            OutcomePredictions::ArmSpecific { treated, control } => {
                if treated.len() != n || control.len() != n {
                    return Err(Error::Invalid(format!(
                        "arm-specific predictions have lengths {}/{} but there are {n} \
                         source rows",
                        treated.len(),
                        control.len()
                    )));
                }
                if !all(treated) || !all(control) {
                    return Err(Error::Invalid("outcome predictions must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Per-unit predictions under treatment and under control.
    fn per_arm(&self, i: usize) -> (f64, f64) {
        match self {
            OutcomePredictions::Pooled(m) => (m[i], m[i]),
            OutcomePredictions::ArmSpecific { treated, control } => (treated[i], control[i]),
        }
    }
}

/// The estimated value of one rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub value: f64,
    pub rule: LinearItr,
    /// True when calibration weights were used, false for uniform weights.
    pub weighted: bool,
    pub n_source_used: usize,
}

/// Precomputed per-unit value terms, built once per dataset and reused for
/// every candidate rule the optimizer proposes.
#[derive(Debug, Clone)]
pub struct PolicyValueData {
    /// `wᵢ·(Aᵢ/π̂ᵢ·(Yᵢ−m̂₁ᵢ) + m̂₁ᵢ)` — the term a unit contributes when treated.
    treat_terms: Vec<f64>,
    /// `wᵢ·((1−Aᵢ)/(1−π̂ᵢ)·(Yᵢ−m̂₀ᵢ) + m̂₀ᵢ)` — its term when sent to control.
    control_terms: Vec<f64>,
    weighted: bool,
}

impl PolicyValueData {
    /// Validates the inputs and precomputes both per-unit terms.
    ///
    /// `weights = None` means uniform `1/n`. Explicit weights must be finite,
    /// nonnegative, and sum to 1 within 1e-6.
    pub fn new(
        a: &[u8],
        y: &[f64],
        pi_hat: &[f64],
        m_hat: &OutcomePredictions,
        weights: Option<&[f64]>,
    ) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::Invalid("no source rows".into()));
        }
        if let Some(i) = a.iter().position(|&v| v > 1) {
            return Err(Error::Invalid(format!(
                "treatment must be 0 or 1; row {i} has {}",
                a[i]
            )));
        }
        if y.len() != n || pi_hat.len() != n {
            return Err(Error::Invalid(format!(
                "outcome ({}) and propensity ({}) lengths must match {n} source rows",
                y.len(),
                pi_hat.len()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("outcome is not finite at row {i}")));
        }
        if let Some(i) = pi_hat.iter().position(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Invalid(format!(
                "propensity must lie strictly inside (0,1); row {i} has {}; clip before \
                 evaluating",
                pi_hat[i]
            )));
        }
        m_hat.check(n)?;
        let weighted = weights.is_some();
        let w_of: Box<dyn Fn(usize) -> f64> = match weights {
            None => {
                let u = 1.0 / n as f64;
                Box::new(move |_| u)
            }
            Some(w) => {
                if w.len() != n {
                    return Err(Error::Invalid(format!(
                        "got {} weights for {n} source rows",
                        w.len()
                    )));
                }
                if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::Invalid(
                        "weights must be finite and nonnegative".into(),
                    ));
                }
                let sum: f64 = w.iter().sum();
                if (sum - 1.0).abs() > 1e-6 {
                    return Err(Error::Invalid(format!(
                        "weights must be normalized to sum 1; got {sum}"
                    )));
                }
                let w = w.to_vec();
                Box::new(move |i| w[i])
            }
        };

        let mut treat_terms = Vec::with_capacity(n);
        let mut control_terms = Vec::with_capacity(n);
        for i in 0..n {
            let (m1, m0) = m_hat.per_arm(i);
            let ai = f64::from(a[i]);
            let wi = w_of(i);
            treat_terms.push(wi * (ai / pi_hat[i] * (y[i] - m1) + m1));
            control_terms.push(wi * ((1.0 - ai) / (1.0 - pi_hat[i]) * (y[i] - m0) + m0));
        }
        Ok(PolicyValueData {
            treat_terms,
            control_terms,
            weighted,
        })
    }

    pub fn n(&self) -> usize {
        self.treat_terms.len()
    }

    pub fn weighted(&self) -> bool {
        self.weighted
    }

    /// Value of an explicit assignment vector (1 = treat).
    pub fn value_of_assignments(&self, d: &[u8]) -> Result<f64> {
        if d.len() != self.n() {
            return Err(Error::Invalid(format!(
                "assignment vector has length {} but there are {} source rows",
                d.len(),
                self.n()
            )));
        }
        let mut v = 0.0;
        for i in 0..d.len() {
            v += if d[i] == 1 {
                self.treat_terms[i]
            } else {
                self.control_terms[i]
            };
        }
        Ok(v)
    }

    /// Value of a linear rule applied to the source covariate matrix.
    pub fn value_of_rule(
        &self,
        rule: &LinearItr,
        x: &nalgebra::DMatrix<f64>,
    ) -> Result<f64> {
        if x.nrows() != self.n() {
            return Err(Error::Invalid(format!(
                "covariate matrix has {} rows but there are {} source rows",
                x.nrows(),
                self.n()
            )));
        }
        let d = rule.apply(x)?;
        self.value_of_assignments(&d)
    }

    /// Value of a rule given directly as coefficients (covariate weights
    /// first, intercept last) — the optimizer's allocation-free hot path.
    /// Agrees bit for bit with [`Self::value_of_rule`] on the same rule.
    pub fn value_of_coefficients(
        &self,
        eta: &[f64],
        x: &nalgebra::DMatrix<f64>,
    ) -> Result<f64> {
        let p = x.ncols();
        if eta.len() != p + 1 {
            return Err(Error::Invalid(format!(
                "{} coefficients cannot score {p} covariates plus an intercept",
                eta.len()
            )));
        }
        if x.nrows() != self.n() {
            return Err(Error::Invalid(format!(
                "covariate matrix has {} rows but there are {} source rows",
                x.nrows(),
                self.n()
            )));
        }
        let intercept = eta[p];
        let mut v = 0.0;
        for i in 0..x.nrows() {
            let mut s = intercept;
            for j in 0..p {
                s += eta[j] * x[(i, j)];
            }
            v += if s > 0.0 {
                self.treat_terms[i]
            } else {
                self.control_terms[i]
            };
        }
        Ok(v)
    }
}

/// One-shot evaluation of a rule's calibrated AIPW value on a dataset's
/// source rows.
pub fn caipw_value(
    rule: &LinearItr,
    source: &Dataset,
    weights: Option<&[f64]>,
    pi_hat: &[f64],
    m_hat: &OutcomePredictions,
) -> Result<ValueEstimate> {
    let view = source.source_view()?;
    if source.covariate_names() != rule.covariate_names.as_slice() {
        return Err(Error::Invalid(format!(
            "covariate order mismatch: rule expects {:?}, data provides {:?}",
            rule.covariate_names,
            source.covariate_names()
        )));
    }
    let data = PolicyValueData::new(&view.treatment, &view.outcome, pi_hat, m_hat, weights)?;
    let value = data.value_of_rule(rule, &view.x)?;
    Ok(ValueEstimate {
        value,
        rule: rule.clone(),
        weighted: weights.is_some(),
        n_source_used: view.x.nrows(),
    })
}
