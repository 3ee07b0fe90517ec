use itr_core::data::CsvSchema;
use itr_core::ga::GaConfig;
use itr_core::pipeline::PipelineOptions;
use itr_core::sim::SimConfig;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Propensity/outcome-model settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuisanceOptions {
    /// Fitted propensities are clipped into [clip, 1−clip].
    pub clip: f64,
    /// Evaluate rules with separate per-arm outcome models instead of one
    /// pooled fit.
    pub arm_specific: bool,
    /// Fit the nuisance models under the calibration weights.
    pub weighted_nuisance: bool,
}

impl Default for NuisanceOptions {
    fn default() -> Self {
        NuisanceOptions {
            clip: 0.01,
            arm_specific: false,
            weighted_nuisance: false,
        }
    }
}

/// Entropy-balancing settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationOptions {
    /// 1 matches covariate means; 2 also matches second moments.
    pub moments_order: u8,
    /// Convergence tolerance on the ∞-norm constraint residual.
    pub tol: f64,
    /// Newton iteration cap.
    pub max_iter: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            moments_order: 1,
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

/// Everything one `itr run` needs. Either `source`+`target` point at CSV
/// files, or `simulate` describes a synthetic study to generate in place.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// CSV of source units (treatment and outcome required).
    pub source: Option<PathBuf>,
    /// CSV of target units (covariates only needed).
    pub target: Option<PathBuf>,
    /// Column mapping applied to both files; each file's unlabeled rows
    /// default to that file's own population.
    pub schema: CsvSchema,
    pub nuisance: NuisanceOptions,
    pub calibration: CalibrationOptions,
    /// Genetic-search settings.
    pub ga: GaConfig,
    /// Inline synthetic study, used when `source`/`target` are absent.
    pub simulate: Option<SimConfig>,
    /// Where report.json and the rule files land.
    pub output_dir: PathBuf,
    /// Master seed; when set it overrides `ga.seed` and `simulate.seed`.
    pub seed: Option<u64>,
    /// Also search under uniform weights for comparison.
    pub optimize_unweighted: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            source: None,
            target: None,
            schema: CsvSchema::default(),
            nuisance: NuisanceOptions::default(),
            calibration: CalibrationOptions::default(),
            ga: GaConfig::default(),
            simulate: None,
            output_dir: PathBuf::from("itr-out"),
            seed: None,
            optimize_unweighted: true,
        }
    }
}

impl RunConfig {
    /// Applies command-line overrides and pushes the master seed into every
    /// stochastic component. Idempotent, so a report's config echo resolves
    /// to itself.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>) -> RunConfig {
        if let Some(s) = seed {
            self.seed = Some(s);
        }
        if let Some(s) = self.seed {
            self.ga.seed = s;
            if let Some(sim) = &mut self.simulate {
                sim.seed = s;
            }
        }
        if let Some(dir) = out {
            self.output_dir = dir;
        }
        self
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            clip: self.nuisance.clip,
            arm_specific: self.nuisance.arm_specific,
            weighted_nuisance: self.nuisance.weighted_nuisance,
            moments_order: self.calibration.moments_order,
            calibration_tol: self.calibration.tol,
            calibration_max_iter: self.calibration.max_iter,
            ga: self.ga.clone(),
            optimize_unweighted: self.optimize_unweighted,
        }
    }
}
