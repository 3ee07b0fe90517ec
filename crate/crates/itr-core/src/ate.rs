//! Average-treatment-effect estimators over the source sample.
//!
//! Four comparable estimators: the naive arm-mean difference, inverse
//! propensity weighting (IPW), outcome regression (OR), and the augmented
//! (doubly robust) AIPW combination. Nuisance quantities are injected as
//! per-unit prediction vectors, so deliberately misspecified models can be
//! substituted in experiments.
//!
//! Every estimator reports its treated-arm and control-arm means; the effect
//! estimate is always their difference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AteMethod {
    Naive,
    Ipw,
    Or,
    Aipw,
}

impl std::fmt::Display for AteMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AteMethod::Naive => "naive",
            AteMethod::Ipw => "ipw",
            AteMethod::Or => "or",
            AteMethod::Aipw => "aipw",
        };
        f.write_str(s)
    }
}

/// One estimator's result. `tau_hat = treated_mean − control_mean` always.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub method: AteMethod,
    pub tau_hat: f64,
    pub treated_mean: f64,
    pub control_mean: f64,
    pub n_used: usize,
}

fn check_treatment(a: &[u8]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::Invalid("no rows".into()));
    }
    if let Some(i) = a.iter().position(|&v| v > 1) {
        return Err(Error::Invalid(format!(
            "treatment must be 0 or 1; row {i} has {}",
            a[i]
        )));
    }
    Ok(())
}

fn check_len(what: &str, len: usize, n: usize) -> Result<()> {
    if len != n {
        return Err(Error::Invalid(format!(
            "{what} has length {len} but there are {n} rows"
        )));
    }
    Ok(())
}

fn check_finite(what: &str, v: &[f64]) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::Invalid(format!("{what} is not finite at row {i}")));
    }
    Ok(())
}

fn check_probabilities(pi: &[f64]) -> Result<()> {
    if let Some(i) = pi.iter().position(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::Invalid(format!(
            "propensity must lie strictly inside (0,1); row {i} has {}; clip before estimating",
            pi[i]
        )));
    }
    Ok(())
}

/// Difference of observed arm means.
pub fn naive_ate(a: &[u8], y: &[f64]) -> Result<AteEstimate> {
    check_treatment(a)?;
    let n = a.len();
    check_len("outcome", y.len(), n)?;
    check_finite("outcome", y)?;
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for (&ai, &yi) in a.iter().zip(y) {
        if ai == 1 {
            s1 += yi;
            n1 += 1;
        } else {
            s0 += yi;
            n0 += 1;
        }
    }
    if n1 == 0 || n0 == 0 {
        return Err(Error::Invalid(format!(
            "naive estimator needs both arms; treated={n1}, control={n0}"
        )));
    }
    let treated_mean = s1 / n1 as f64;
    let control_mean = s0 / n0 as f64;
    Ok(AteEstimate {
        method: AteMethod::Naive,
        tau_hat: treated_mean - control_mean,
        treated_mean,
        control_mean,
        n_used: n,
    })
}

/// Inverse-propensity-weighted estimator: treated mean `(1/n)Σ AᵢYᵢ/π̂ᵢ` and
/// the mirrored control mean `(1/n)Σ (1−Aᵢ)Yᵢ/(1−π̂ᵢ)`.
pub fn ipw_ate(a: &[u8], y: &[f64], pi_hat: &[f64]) -> Result<AteEstimate> {
    check_treatment(a)?;
    let n = a.len();
    check_len("outcome", y.len(), n)?;
    check_len("propensity", pi_hat.len(), n)?;
    check_finite("outcome", y)?;
    check_probabilities(pi_hat)?;
    let mut s1 = 0.0;
    let mut s0 = 0.0;
    for i in 0..n {
        let ai = f64::from(a[i]);
        s1 += ai * y[i] / pi_hat[i];
        s0 += (1.0 - ai) * y[i] / (1.0 - pi_hat[i]);
    }
    let treated_mean = s1 / n as f64;
    let control_mean = s0 / n as f64;
    Ok(AteEstimate {
        method: AteMethod::Ipw,
        tau_hat: treated_mean - control_mean,
        treated_mean,
        control_mean,
        n_used: n,
    })
}

/// Outcome-regression estimator: mean of m̂₁ minus mean of m̂₀, both averaged
/// over every unit.
pub fn or_ate(m1: &[f64], m0: &[f64]) -> Result<AteEstimate> {
    let n = m1.len();
    if n == 0 {
        return Err(Error::Invalid("no rows".into()));
    }
    check_len("control-arm predictions", m0.len(), n)?;
    check_finite("treated-arm predictions", m1)?;
    check_finite("control-arm predictions", m0)?;
    let treated_mean = m1.iter().sum::<f64>() / n as f64;
    let control_mean = m0.iter().sum::<f64>() / n as f64;
    Ok(AteEstimate {
        method: AteMethod::Or,
        tau_hat: treated_mean - control_mean,
        treated_mean,
        control_mean,
        n_used: n,
    })
}

/// Augmented IPW estimator: per-arm mean
/// `(1/n)Σ { Aᵢ(Yᵢ−m̂₁(Xᵢ))/π̂ᵢ + m̂₁(Xᵢ) }` and its control mirror.
///
/// Setting every prediction to zero reproduces [`ipw_ate`] bit for bit;
/// predictions that interpolate the observed outcomes reproduce [`or_ate`].
pub fn aipw_ate(
    a: &[u8],
    y: &[f64],
    pi_hat: &[f64],
    m1: &[f64],
    m0: &[f64],
) -> Result<AteEstimate> {
    check_treatment(a)?;
    let n = a.len();
    check_len("outcome", y.len(), n)?;
    check_len("propensity", pi_hat.len(), n)?;
    check_len("treated-arm predictions", m1.len(), n)?;
    check_len("control-arm predictions", m0.len(), n)?;
    check_finite("outcome", y)?;
    check_finite("treated-arm predictions", m1)?;
    check_finite("control-arm predictions", m0)?;
    check_probabilities(pi_hat)?;
    let mut s1 = 0.0;
    let mut s0 = 0.0;
    for i in 0..n {
        let ai = f64::from(a[i]);
        s1 += ai * (y[i] - m1[i]) / pi_hat[i] + m1[i];
        s0 += (1.0 - ai) * (y[i] - m0[i]) / (1.0 - pi_hat[i]) + m0[i];
    }
    let treated_mean = s1 / n as f64;
    let control_mean = s0 / n as f64;
    Ok(AteEstimate {
        method: AteMethod::Aipw,
        tau_hat: treated_mean - control_mean,
        treated_mean,
        control_mean,
        n_used: n,
    })
}

/// All four estimates keyed by method name, as emitted by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteReport {
    pub naive: AteEstimate,
    pub ipw: AteEstimate,
    pub or: AteEstimate,
    pub aipw: AteEstimate,
}

impl AteReport {
    /// Runs all four estimators on one dataset's worth of inputs.
    pub fn compute(
        a: &[u8],
        y: &[f64],
        pi_hat: &[f64],
        m1: &[f64],
        m0: &[f64],
    ) -> Result<AteReport> {
        Ok(AteReport {
            naive: naive_ate(a, y)?,
            ipw: ipw_ate(a, y, pi_hat)?,
            or: or_ate(m1, m0)?,
            aipw: aipw_ate(a, y, pi_hat, m1, m0)?,
        })
    }
}
