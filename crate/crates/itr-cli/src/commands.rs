use crate::args::{
    CalibrateArgs, EstimateArgs, ImportanceArgs, OptimizeArgs, SimulateArgs, ValueArgs,
};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::load::{load_one, load_pair, print_json, read_json, write_json};
use crate::report::{name_rows, CalibrationSummary, NamedBalanceRow};
use itr_core::ate::AteReport;
use itr_core::calibration::{
    balance_diagnostics, read_weights_csv, solve_entropy_balance, target_moments,
    write_weights_csv,
};
use itr_core::data::{CsvSchema, Population};
use itr_core::pipeline::{run_pipeline, source_nuisances, PolicySearch};
use itr_core::rule::{covariate_importance, LinearItr};
use itr_core::sim::{simulate_study, write_study, SimConfig};
use itr_core::value::{caipw_value, OutcomePredictions};
use serde::Serialize;
use std::collections::HashMap;

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut config: SimConfig = match &args.config {
        Some(path) => read_json(path, "generator config")?,
        None => SimConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let study = simulate_study(&config)?;
    write_study(&study, &config, &args.out)?;

    #[derive(Serialize)]
    struct Summary {
        output_dir: String,
        seed: u64,
        n_general: usize,
        n_source: usize,
        n_target: usize,
        files: Vec<&'static str>,
    }
    print_json(&Summary {
        output_dir: args.out.display().to_string(),
        seed: config.seed,
        n_general: study.population.n(),
        n_source: study.source.n(),
        n_target: study.target.n(),
        files: vec![
            "general.csv",
            "source.csv",
            "target.csv",
            "truth.csv",
            "sim_meta.json",
        ],
    })
}

pub fn calibrate(args: &CalibrateArgs) -> CliResult<()> {
    let data = load_pair(&args.source, &args.target, &CsvSchema::default())?;
    let targets = target_moments(&data, args.order)?;
    let src = data.source_view()?;
    let weights = solve_entropy_balance(&src.x, &targets, args.tol, args.max_iter)?;
    write_weights_csv(&args.out, &src.ids, &weights.weights)?;
    let balance = name_rows(
        data.covariate_names(),
        &balance_diagnostics(&src.x, &weights.weights, &targets)?,
    );

    #[derive(Serialize)]
    struct Summary {
        weights_file: String,
        n_source: usize,
        n_target: usize,
        calibration: CalibrationSummary,
        max_smd_before: f64,
        max_smd_after: f64,
        balance: Vec<NamedBalanceRow>,
    }
    let max_abs = |pick: fn(&NamedBalanceRow) -> f64| {
        balance.iter().map(|r| pick(r).abs()).fold(0.0, f64::max)
    };
    print_json(&Summary {
        weights_file: args.out.display().to_string(),
        n_source: data.n_source(),
        n_target: data.n_target(),
        calibration: CalibrationSummary::new(&weights, args.order),
        max_smd_before: max_abs(|r| r.row.smd_before),
        max_smd_after: max_abs(|r| r.row.smd_after),
        balance,
    })
}

pub fn estimate(args: &EstimateArgs) -> CliResult<()> {
    let data = load_one(&args.source, &CsvSchema::default(), Population::Source)?;
    let (_, src, nuisances) = source_nuisances(&data, args.clip, None)?;
    let report = AteReport::compute(
        &src.treatment,
        &src.outcome,
        &nuisances.pi_hat,
        &nuisances.m1_hat,
        &nuisances.m0_hat,
    )?;
    print_json(&report)
}

/// Reorders a weights file to the dataset's source rows, insisting the two
/// cover exactly the same ids.
fn align_weights(ids: &[String], weights: &[f64], wanted: &[String]) -> CliResult<Vec<f64>> {
    let mut by_id: HashMap<&str, f64> = HashMap::with_capacity(ids.len());
    for (id, &w) in ids.iter().zip(weights) {
        if by_id.insert(id, w).is_some() {
            return Err(CliError::usage(format!(
                "weights file repeats id {id:?}"
            )));
        }
    }
    if by_id.len() != wanted.len() {
        return Err(CliError::usage(format!(
            "weights file holds {} ids but the data has {} source rows",
            by_id.len(),
            wanted.len()
        )));
    }
    wanted
        .iter()
        .map(|id| {
            by_id.get(id.as_str()).copied().ok_or_else(|| {
                CliError::usage(format!("weights file lacks source id {id:?}"))
            })
        })
        .collect()
}

pub fn value(args: &ValueArgs) -> CliResult<()> {
    let raw: LinearItr = read_json(&args.rule, "rule")?;
    // Re-run construction so a hand-edited file with bad lengths or
    // non-finite coefficients is rejected up front.
    let rule = LinearItr::new(raw.covariate_names, raw.eta)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.rule.display())))?;
    let data = load_one(&args.source, &CsvSchema::default(), Population::Source)?;
    let (_, src, nuisances) = source_nuisances(&data, args.clip, None)?;
    let weights = match &args.weights {
        Some(path) => {
            let (ids, w) = read_weights_csv(path)?;
            Some(align_weights(&ids, &w, &src.ids)?)
        }
        None => None,
    };
    let m_hat = if args.arm_specific {
        OutcomePredictions::ArmSpecific {
            treated: nuisances.m1_hat,
            control: nuisances.m0_hat,
        }
    } else {
        OutcomePredictions::Pooled(nuisances.pooled_hat)
    };
    let estimate = caipw_value(&rule, &data, weights.as_deref(), &nuisances.pi_hat, &m_hat)?;
    print_json(&estimate)
}

pub fn optimize(args: &OptimizeArgs) -> CliResult<()> {
    let mut config: RunConfig = match &args.config {
        Some(path) => read_json(path, "run config")?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    let config = config.resolve(None, None);
    let mut options = config.pipeline_options();
    options.optimize_unweighted = args.unweighted;

    let data = load_pair(&args.source, &args.target, &config.schema)?;
    let out = run_pipeline(&data, &options)?;
    if let Some(path) = &args.out {
        write_json(path, &out.weighted.value.rule)?;
    }

    #[derive(Serialize)]
    struct Output<'a> {
        weighted: &'a PolicySearch,
        unweighted: Option<&'a PolicySearch>,
    }
    print_json(&Output {
        weighted: &out.weighted,
        unweighted: out.unweighted.as_ref(),
    })
}

pub fn importance(args: &ImportanceArgs) -> CliResult<()> {
    let raw: LinearItr = read_json(&args.rule, "rule")?;
    let rule = LinearItr::new(raw.covariate_names, raw.eta)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.rule.display())))?;
    let data = load_one(&args.data, &CsvSchema::default(), Population::Target)?;
    let summary = data.covariate_summary(None)?;
    let ranking = covariate_importance(&rule, &summary)?;
    print_json(&ranking)
}
