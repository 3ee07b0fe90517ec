use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

/// Learns linear treatment rules for a target population from source-sample
/// trial data.
#[derive(Parser)]
#[command(name = "itr", version, about, max_term_width = 100)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic two-covariate study with known ground truth.
    Simulate(SimulateArgs),
    /// Reweight a source sample so its covariate moments match a target sample.
    Calibrate(CalibrateArgs),
    /// Estimate the average treatment effect on a source sample four ways.
    Estimate(EstimateArgs),
    /// Evaluate the doubly robust value of a fixed rule on a source sample.
    Value(ValueArgs),
    /// Search for the rule that maximizes the calibration-weighted value.
    Optimize(OptimizeArgs),
    /// Rank a rule's covariates by spread-adjusted coefficient size.
    Importance(ImportanceArgs),
    /// Run the whole pipeline from a JSON config and write a report.
    Run(RunArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Directory that receives general.csv, source.csv, target.csv,
    /// truth.csv and sim_meta.json (created if absent).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Generator settings as JSON; defaults apply when omitted.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Overrides the generator seed from --config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct CalibrateArgs {
    /// CSV of source units (rows without a population label count as source).
    #[arg(long, value_name = "FILE")]
    pub source: PathBuf,
    /// CSV of target units whose covariate moments the weights must match.
    #[arg(long, value_name = "FILE")]
    pub target: PathBuf,
    /// Where to write the id,weight file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Moment order to match: 1 = means, 2 = means and second moments.
    #[arg(long, default_value_t = 1)]
    pub order: u8,
    /// Convergence tolerance on the ∞-norm constraint residual.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Newton iteration cap.
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
}

#[derive(Args)]
pub struct EstimateArgs {
    /// CSV of source units with treatment and outcome columns.
    #[arg(long, value_name = "FILE")]
    pub source: PathBuf,
    /// Clip fitted propensities into [clip, 1−clip].
    #[arg(long, default_value_t = 0.01)]
    pub clip: f64,
}

#[derive(Args)]
pub struct ValueArgs {
    /// CSV of source units with treatment and outcome columns.
    #[arg(long, value_name = "FILE")]
    pub source: PathBuf,
    /// Rule to evaluate, as the JSON written by `optimize`.
    #[arg(long, value_name = "FILE")]
    pub rule: PathBuf,
    /// Calibration weights (id,weight CSV); uniform weights when omitted.
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,
    /// Clip fitted propensities into [clip, 1−clip].
    #[arg(long, default_value_t = 0.01)]
    pub clip: f64,
    /// Use separate per-arm outcome models instead of one pooled fit.
    #[arg(long)]
    pub arm_specific: bool,
}

#[derive(Args)]
pub struct OptimizeArgs {
    /// CSV of source units with treatment and outcome columns.
    #[arg(long, value_name = "FILE")]
    pub source: PathBuf,
    /// CSV of target units the calibration weights re-align to.
    #[arg(long, value_name = "FILE")]
    pub target: PathBuf,
    /// Run settings as JSON (same key structure as `run --config`);
    /// only the nuisance, calibration and ga groups are read here.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Overrides the search seed from --config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also run the search with uniform weights for comparison.
    #[arg(long)]
    pub unweighted: bool,
    /// Write the learned weighted rule as JSON here.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ImportanceArgs {
    /// Rule whose coefficients to rank, as the JSON written by `optimize`.
    #[arg(long, value_name = "FILE")]
    pub rule: PathBuf,
    /// CSV whose covariate spreads put the coefficients on one scale.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
}

#[derive(Args)]
pub struct RunArgs {
    /// Run settings as JSON; see the project README for the key structure.
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Overrides the config seed (reaches both the search and any inline
    /// simulation).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Also write ga_history.csv and balance.csv for external plotting.
    #[arg(long)]
    pub plot_data: bool,
}
