use crate::config::RunConfig;
use itr_core::ate::AteReport;
use itr_core::calibration::{BalanceReport, BalanceRow, CalibrationWeights};
use itr_core::data::ValidationReport;
use itr_core::pipeline::PolicySearch;
use itr_core::rule::RankedCoefficient;
use serde::Serialize;
use std::collections::BTreeMap;

/// Scalar summary of one calibration solve; the weights themselves go to a
/// CSV, not the report.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationSummary {
    pub n_source: usize,
    pub order: u8,
    pub converged: bool,
    pub iterations: usize,
    /// Final ∞-norm of the constraint residual.
    pub residual: f64,
    pub weight_sum: f64,
    pub effective_sample_size: f64,
}

impl CalibrationSummary {
    pub fn new(weights: &CalibrationWeights, order: u8) -> Self {
        CalibrationSummary {
            n_source: weights.weights.len(),
            order,
            converged: weights.converged,
            iterations: weights.iterations,
            residual: weights.residual,
            weight_sum: weights.weights.iter().sum(),
            effective_sample_size: weights.effective_sample_size(),
        }
    }
}

/// A balance-diagnostic row tagged with its covariate's name.
#[derive(Debug, Clone, Serialize)]
pub struct NamedBalanceRow {
    pub name: String,
    #[serde(flatten)]
    pub row: BalanceRow,
}

pub fn name_rows(names: &[String], report: &BalanceReport) -> Vec<NamedBalanceRow> {
    names
        .iter()
        .zip(&report.rows)
        .map(|(name, row)| NamedBalanceRow {
            name: name.clone(),
            row: row.clone(),
        })
        .collect()
}

/// Everything `itr run` learned, written as `report.json`. The config echo is
/// complete: feeding it back through `itr run --config` reproduces the run.
/// On failure the stage outputs stay null and `failed_stage`/`error` say what
/// broke.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub version: String,
    pub config: RunConfig,
    pub timings_ms: BTreeMap<String, u64>,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub validation: Option<ValidationReport>,
    /// Propensity coefficients on standardized covariates, intercept last.
    pub propensity_coefficients: Option<Vec<f64>>,
    pub calibration: Option<CalibrationSummary>,
    pub balance: Option<Vec<NamedBalanceRow>>,
    pub ate: Option<AteReport>,
    pub weighted: Option<PolicySearch>,
    pub unweighted: Option<PolicySearch>,
    pub importance: Option<Vec<RankedCoefficient>>,
    /// Files this run wrote, relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunReport {
    /// A report skeleton holding only the resolved config.
    pub fn skeleton(config: RunConfig) -> Self {
        RunReport {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            timings_ms: BTreeMap::new(),
            failed_stage: None,
            error: None,
            validation: None,
            propensity_coefficients: None,
            calibration: None,
            balance: None,
            ate: None,
            weighted: None,
            unweighted: None,
            importance: None,
            artifacts: Vec::new(),
        }
    }
}
