//! End-to-end estimation: from a loaded dataset to a pair of learned rules.
//!
//! The pipeline takes one [`Dataset`] holding both source rows (covariates,
//! treatment, outcome) and target rows (covariates only) and runs:
//!
//! 1. **validate** — structural checks that estimation can proceed;
//! 2. **nuisance** — propensity and outcome regressions on standardized
//!    source covariates;
//! 3. **calibrate** — entropy-balancing weights aligning source covariate
//!    moments with the target, plus balance diagnostics;
//! 4. **ate** — the four average-effect estimators on the source sample;
//! 5. **optimize** — genetic search for the rule maximizing the doubly
//!    robust value, once with calibration weights and once without;
//! 6. **evaluate** — value estimates, covariate importance against target
//!    spreads, and display forms of the learned rules.
//!
//! Failures carry the stage they occurred in ([`StageFailure`]), so callers
//! can report *where* a run died without parsing message strings.

use crate::ate::AteReport;
use crate::calibration::{
    balance_diagnostics, solve_entropy_balance, target_moments, BalanceReport,
    CalibrationWeights, MomentTargets,
};
use crate::data::{Dataset, Population, SourceView, ValidationReport};
use crate::error::{Error, Result};
use crate::ga::{optimize_itr, GaConfig, GaResult};
use crate::glm::{fit_linear, fit_logistic, LinearModel};
use crate::rule::{covariate_importance, LinearItr, RankedCoefficient};
use crate::value::{caipw_value, OutcomePredictions, PolicyValueData, ValueEstimate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;

/// The pipeline stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Validate,
    Nuisance,
    Calibrate,
    Ate,
    Optimize,
    Evaluate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Validate => "validate",
            Stage::Nuisance => "nuisance",
            Stage::Calibrate => "calibrate",
            Stage::Ate => "ate",
            Stage::Optimize => "optimize",
            Stage::Evaluate => "evaluate",
        };
        f.write_str(name)
    }
}

/// An error tagged with the pipeline stage that produced it.
#[derive(Debug)]
pub struct StageFailure {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for StageFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Tuning knobs for a pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    /// Propensity clipping bound ε: fitted probabilities are forced into
    /// [ε, 1−ε] before any inverse weighting.
    pub clip: f64,
    /// Use separate treated/control outcome models inside the value
    /// function instead of one pooled regression.
    pub arm_specific: bool,
    /// Fit the nuisance models with the calibration weights.
    pub weighted_nuisance: bool,
    /// Calibrate means only (1) or means plus second moments (2).
    pub moments_order: u8,
    pub calibration_tol: f64,
    pub calibration_max_iter: usize,
    pub ga: GaConfig,
    /// Also search without calibration weights for comparison.
    pub optimize_unweighted: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            clip: 0.01,
            arm_specific: false,
            weighted_nuisance: false,
            moments_order: 1,
            calibration_tol: 1e-8,
            calibration_max_iter: 200,
            ga: GaConfig::default(),
            optimize_unweighted: true,
        }
    }
}

/// The affine covariate transform used for model fitting and the search box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardization {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardization {
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x.clone();
        for j in 0..z.ncols() {
            for i in 0..z.nrows() {
                z[(i, j)] = (z[(i, j)] - self.mean[j]) / self.sd[j];
            }
        }
        z
    }

    /// Maps coefficients over standardized covariates back to raw units:
    /// slopes divide by the spread, the intercept absorbs the centering.
    pub fn coefficients_to_raw(&self, eta_std: &[f64]) -> Vec<f64> {
        let p = self.names.len();
        let mut raw = Vec::with_capacity(p + 1);
        let mut intercept = eta_std[p];
        for j in 0..p {
            raw.push(eta_std[j] / self.sd[j]);
            intercept -= eta_std[j] * self.mean[j] / self.sd[j];
        }
        raw.push(intercept);
        raw
    }
}

/// One policy search: the optimizer's trace plus the learned rule evaluated
/// in raw covariate units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicySearch {
    /// Search trace; `ga.best_rule` stays in standardized units (renamed to
    /// the real covariates).
    pub ga: GaResult,
    /// The learned rule mapped to raw units (canonical max-norm form),
    /// with its doubly robust value under this search's weighting.
    pub value: ValueEstimate,
    /// Display form of the raw-unit rule.
    pub inequality: String,
}

/// Everything a pipeline run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub validation: ValidationReport,
    pub standardization: Standardization,
    /// Propensity coefficients on standardized covariates, intercept last.
    pub propensity_coefficients: Vec<f64>,
    pub ate: AteReport,
    pub targets: MomentTargets,
    pub weights: CalibrationWeights,
    pub effective_sample_size: f64,
    pub balance: BalanceReport,
    pub weighted: PolicySearch,
    pub unweighted: Option<PolicySearch>,
    /// Importance of the weighted rule's covariates, scaled by target-sample
    /// spreads.
    pub importance: Vec<RankedCoefficient>,
}

fn validate_options(options: &PipelineOptions) -> Result<()> {
    if !(options.clip > 0.0 && options.clip < 0.5) {
        return Err(Error::Invalid(format!(
            "clip must lie in (0, 0.5); got {}",
            options.clip
        )));
    }
    if !(options.moments_order == 1 || options.moments_order == 2) {
        return Err(Error::Invalid(format!(
            "moments_order must be 1 or 2; got {}",
            options.moments_order
        )));
    }
    Ok(())
}

fn validate_data(data: &Dataset, report: &ValidationReport) -> Result<()> {
    if report.n_target == 0 {
        return Err(Error::Invalid(
            "no target rows: calibration has nothing to match".into(),
        ));
    }
    if report.source_missing_treatment > 0 || report.source_missing_outcome > 0 {
        return Err(Error::Invalid(format!(
            "{} source rows lack treatment and {} lack outcome",
            report.source_missing_treatment, report.source_missing_outcome
        )));
    }
    if report.n_source_treated == 0 || report.n_source_control == 0 {
        return Err(Error::Invalid(format!(
            "source sample needs both arms; treated={}, control={}",
            report.n_source_treated, report.n_source_control
        )));
    }
    if !report.constant_covariates.is_empty() {
        return Err(Error::Invalid(format!(
            "constant source covariates cannot be standardized: {:?}",
            report.constant_covariates
        )));
    }
    let _ = data;
    Ok(())
}

/// Per-unit nuisance predictions on the source rows, all evaluated on the
/// standardized covariate scale.
#[derive(Debug, Clone)]
pub struct Nuisances {
    /// Logistic propensity coefficients (standardized covariates, intercept
    /// last).
    pub propensity_coefficients: Vec<f64>,
    /// Clipped treatment probabilities, one per source row.
    pub pi_hat: Vec<f64>,
    /// Treated-arm outcome predictions.
    pub m1_hat: Vec<f64>,
    /// Control-arm outcome predictions.
    pub m0_hat: Vec<f64>,
    /// Predictions from the model fit on both arms together.
    pub pooled_hat: Vec<f64>,
}

fn fit_nuisances(
    src: &SourceView,
    z_src: &DMatrix<f64>,
    clip: f64,
    weights: Option<&[f64]>,
) -> Result<Nuisances> {
    let propensity = fit_logistic(z_src, &src.treatment, weights)?;
    let pi_hat = propensity.predict_proba(z_src, clip)?;

    let split = |keep: u8| -> (DMatrix<f64>, Vec<f64>, Option<Vec<f64>>) {
        let rows: Vec<usize> = (0..src.treatment.len())
            .filter(|&i| src.treatment[i] == keep)
            .collect();
        let x = DMatrix::from_fn(rows.len(), z_src.ncols(), |i, j| z_src[(rows[i], j)]);
        let y: Vec<f64> = rows.iter().map(|&i| src.outcome[i]).collect();
        let w = weights.map(|w| rows.iter().map(|&i| w[i]).collect());
        (x, y, w)
    };
    let (x1, y1, w1) = split(1);
    let (x0, y0, w0) = split(0);
    let m1_model = fit_linear(&x1, &y1, w1.as_deref())
        .map_err(|e| Error::Invalid(format!("treated-arm outcome model: {e}")))?;
    let m0_model = fit_linear(&x0, &y0, w0.as_deref())
        .map_err(|e| Error::Invalid(format!("control-arm outcome model: {e}")))?;
    let pooled_model: LinearModel = fit_linear(z_src, &src.outcome, weights)
        .map_err(|e| Error::Invalid(format!("pooled outcome model: {e}")))?;

    Ok(Nuisances {
        propensity_coefficients: propensity.coefficients.iter().copied().collect(),
        pi_hat,
        m1_hat: m1_model.predict(z_src)?.iter().copied().collect(),
        m0_hat: m0_model.predict(z_src)?.iter().copied().collect(),
        pooled_hat: pooled_model.predict(z_src)?.iter().copied().collect(),
    })
}

/// Standardizes the source covariates by their own means and spreads, then
/// fits the propensity and outcome models on that scale.
///
/// This is the shared front end of [`run_pipeline`]; callers that only need
/// per-unit predictions — an effect estimate, or the value of one fixed rule —
/// use it without paying for calibration or a search. `weights` reweights the
/// model fits (`None` = unweighted).
pub fn source_nuisances(
    data: &Dataset,
    clip: f64,
    weights: Option<&[f64]>,
) -> Result<(Standardization, SourceView, Nuisances)> {
    let src = data.source_view()?;
    let summary = data.covariate_summary(Some(Population::Source))?;
    let standardization = Standardization {
        names: summary.names,
        mean: summary.mean,
        sd: summary.sd,
    };
    let z_src = standardization.apply(&src.x);
    let nuisances = fit_nuisances(&src, &z_src, clip, weights)?;
    Ok((standardization, src, nuisances))
}

fn search(
    data: &Dataset,
    src: &SourceView,
    z_src: &DMatrix<f64>,
    standardization: &Standardization,
    pi_hat: &[f64],
    m_hat: &OutcomePredictions,
    weights: Option<&[f64]>,
    ga_config: &GaConfig,
) -> std::result::Result<PolicySearch, StageFailure> {
    let fail = |stage: Stage| move |error: Error| StageFailure { stage, error };

    let value_data = PolicyValueData::new(&src.treatment, &src.outcome, pi_hat, m_hat, weights)
        .map_err(fail(Stage::Optimize))?;
    // Dimensions are fixed up front, so evaluation cannot error; any NaN is
    // surfaced by the optimizer as a non-finite objective.
    let objective =
        |eta: &[f64]| value_data.value_of_coefficients(eta, z_src).unwrap_or(f64::NAN);
    let mut ga = optimize_itr(objective, data.p(), ga_config).map_err(fail(Stage::Optimize))?;
    ga.best_rule.covariate_names = data.covariate_names().to_vec();

    let raw = standardization.coefficients_to_raw(&ga.best_rule.eta);
    let rule = LinearItr::new(data.covariate_names().to_vec(), raw)
        .map(|r| r.canonical())
        .map_err(fail(Stage::Evaluate))?;
    let value = caipw_value(&rule, data, weights, pi_hat, m_hat).map_err(fail(Stage::Evaluate))?;
    let inequality = rule.inequality_string();
    Ok(PolicySearch {
        ga,
        value,
        inequality,
    })
}

/// Runs the whole estimation pipeline on a dataset holding source and target
/// rows. Deterministic given `(data, options)`; the only randomness is the
/// seeded genetic search.
pub fn run_pipeline(
    data: &Dataset,
    options: &PipelineOptions,
) -> std::result::Result<PipelineOutput, StageFailure> {
    let fail = |stage: Stage| move |error: Error| StageFailure { stage, error };

    // --- validate ---------------------------------------------------------
    validate_options(options).map_err(fail(Stage::Validate))?;
    let validation = data.validate();
    validate_data(data, &validation).map_err(fail(Stage::Validate))?;
    let src = data.source_view().map_err(fail(Stage::Validate))?;

    let source_summary = data
        .covariate_summary(Some(Population::Source))
        .map_err(fail(Stage::Validate))?;
    let standardization = Standardization {
        names: source_summary.names.clone(),
        mean: source_summary.mean.clone(),
        sd: source_summary.sd.clone(),
    };
    let z_src = standardization.apply(&src.x);

    // --- calibrate (early when its weights feed the nuisance fits) -------
    let calibrate = || -> Result<(MomentTargets, CalibrationWeights)> {
        let targets = target_moments(data, options.moments_order)?;
        let weights = solve_entropy_balance(
            &src.x,
            &targets,
            options.calibration_tol,
            options.calibration_max_iter,
        )?;
        Ok((targets, weights))
    };
    let mut calibrated = None;
    if options.weighted_nuisance {
        calibrated = Some(calibrate().map_err(fail(Stage::Calibrate))?);
    }

    // --- nuisance ---------------------------------------------------------
    let nuisance_weights = calibrated.as_ref().map(|(_, w)| w.weights.as_slice());
    let nuisances = fit_nuisances(&src, &z_src, options.clip, nuisance_weights)
        .map_err(fail(Stage::Nuisance))?;

    // --- calibrate (standard position) ------------------------------------
    let (targets, weights) = match calibrated {
        Some(pair) => pair,
        None => calibrate().map_err(fail(Stage::Calibrate))?,
    };
    let balance =
        balance_diagnostics(&src.x, &weights.weights, &targets).map_err(fail(Stage::Calibrate))?;
    let effective_sample_size = weights.effective_sample_size();

    // --- ate --------------------------------------------------------------
    let ate = AteReport::compute(
        &src.treatment,
        &src.outcome,
        &nuisances.pi_hat,
        &nuisances.m1_hat,
        &nuisances.m0_hat,
    )
    .map_err(fail(Stage::Ate))?;

    // --- optimize + evaluate ----------------------------------------------
    let m_hat = if options.arm_specific {
        OutcomePredictions::ArmSpecific {
            treated: nuisances.m1_hat.clone(),
            control: nuisances.m0_hat.clone(),
        }
    } else {
        OutcomePredictions::Pooled(nuisances.pooled_hat.clone())
    };
    let weighted = search(
        data,
        &src,
        &z_src,
        &standardization,
        &nuisances.pi_hat,
        &m_hat,
        Some(&weights.weights),
        &options.ga,
    )?;
    let unweighted = if options.optimize_unweighted {
        Some(search(
            data,
            &src,
            &z_src,
            &standardization,
            &nuisances.pi_hat,
            &m_hat,
            None,
            &options.ga,
        )?)
    } else {
        None
    };

    let target_summary = data
        .covariate_summary(Some(Population::Target))
        .map_err(fail(Stage::Evaluate))?;
    let importance = covariate_importance(&weighted.value.rule, &target_summary)
        .map_err(fail(Stage::Evaluate))?;

    Ok(PipelineOutput {
        validation,
        standardization,
        propensity_coefficients: nuisances.propensity_coefficients,
        ate,
        targets,
        weights,
        effective_sample_size,
        balance,
        weighted,
        unweighted,
        importance,
    })
}
