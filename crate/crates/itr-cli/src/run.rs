use crate::args::RunArgs;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::load::{load_pair, print_line, read_json, write_json, write_text};
use crate::report::{name_rows, CalibrationSummary, RunReport};
use itr_core::calibration::write_weights_csv;
use itr_core::data::Dataset;
use itr_core::pipeline::{run_pipeline, PipelineOptions, PipelineOutput};
use itr_core::sim::{simulate_study, write_study};
use std::time::Instant;

const STUDY_FILES: [&str; 5] = [
    "general.csv",
    "source.csv",
    "target.csv",
    "truth.csv",
    "sim_meta.json",
];

fn ms(since: Instant) -> u64 {
    since.elapsed().as_millis() as u64
}

/// Writes whatever report we have and bubbles the failure up, so even a
/// broken run leaves an auditable trace in the output directory.
fn abandon(
    config: &RunConfig,
    mut report: RunReport,
    stage: &str,
    total: Instant,
    error: CliError,
) -> CliError {
    report.failed_stage = Some(stage.to_string());
    report.error = Some(error.message.clone());
    report.timings_ms.insert("total".into(), ms(total));
    report.artifacts.push("report.json".into());
    if let Err(e) = write_json(&config.output_dir.join("report.json"), &report) {
        eprintln!("warning: could not write the failure report: {}", e.message);
    }
    error
}

/// Loads the configured CSV pair, or generates the configured synthetic study
/// into `output_dir/simulated/` and uses that.
fn acquire_data(config: &RunConfig, report: &mut RunReport) -> CliResult<Dataset> {
    match (&config.source, &config.target) {
        (Some(source), Some(target)) => {
            if config.simulate.is_some() {
                return Err(CliError::usage(
                    "config sets both input paths and a simulate block; choose one",
                ));
            }
            load_pair(source, target, &config.schema)
        }
        (None, None) => {
            let sim = config.simulate.as_ref().ok_or_else(|| {
                CliError::usage(
                    "config needs either source and target paths or a simulate block",
                )
            })?;
            let study = simulate_study(sim)?;
            write_study(&study, sim, config.output_dir.join("simulated"))?;
            for file in STUDY_FILES {
                report.artifacts.push(format!("simulated/{file}"));
            }
            study.combined().map_err(CliError::from)
        }
        _ => Err(CliError::usage(
            "config names only one input path; give both source and target, or neither",
        )),
    }
}

fn fill_report(report: &mut RunReport, out: &PipelineOutput, options: &PipelineOptions) {
    report.validation = Some(out.validation.clone());
    report.propensity_coefficients = Some(out.propensity_coefficients.clone());
    report.calibration = Some(CalibrationSummary::new(&out.weights, options.moments_order));
    report.balance = Some(name_rows(&out.standardization.names, &out.balance));
    report.ate = Some(out.ate.clone());
    report.weighted = Some(out.weighted.clone());
    report.unweighted = out.unweighted.clone();
    report.importance = Some(out.importance.clone());
}

fn write_artifacts(
    config: &RunConfig,
    data: &Dataset,
    out: &PipelineOutput,
    plot_data: bool,
    report: &mut RunReport,
) -> CliResult<()> {
    let dir = &config.output_dir;
    let mut written = |name: &str| report.artifacts.push(name.to_string());

    let src = data.source_view()?;
    write_weights_csv(&dir.join("weights.csv"), &src.ids, &out.weights.weights)?;
    written("weights.csv");

    let mut rule_files = vec![("rule_weighted", &out.weighted)];
    if let Some(unweighted) = &out.unweighted {
        rule_files.push(("rule_unweighted", unweighted));
    }
    for (stem, search) in rule_files {
        write_json(&dir.join(format!("{stem}.json")), &search.value.rule)?;
        write_text(
            &dir.join(format!("{stem}.txt")),
            &format!("{}\n", search.inequality),
        )?;
        written(&format!("{stem}.json"));
        written(&format!("{stem}.txt"));
    }

    if plot_data {
        let mut history = String::from("search,generation,best_value\n");
        let mut trace = |label: &str, values: &[f64]| {
            for (generation, value) in values.iter().enumerate() {
                history.push_str(&format!("{label},{generation},{value}\n"));
            }
        };
        trace("weighted", &out.weighted.ga.history);
        if let Some(unweighted) = &out.unweighted {
            trace("unweighted", &unweighted.ga.history);
        }
        write_text(&dir.join("ga_history.csv"), &history)?;
        written("ga_history.csv");

        let mut balance =
            String::from("name,unweighted_mean,weighted_mean,target_mean,smd_before,smd_after\n");
        for row in name_rows(&out.standardization.names, &out.balance) {
            let r = &row.row;
            balance.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.name,
                r.unweighted_mean,
                r.weighted_mean,
                r.target_mean,
                r.smd_before,
                r.smd_after
            ));
        }
        write_text(&dir.join("balance.csv"), &balance)?;
        written("balance.csv");
    }
    Ok(())
}

pub fn run(args: &RunArgs) -> CliResult<()> {
    let raw: RunConfig = read_json(&args.config, "run config")?;
    let config = raw.resolve(args.seed, args.out.clone());
    std::fs::create_dir_all(&config.output_dir).map_err(|e| {
        CliError::usage(format!(
            "cannot create output directory {}: {e}",
            config.output_dir.display()
        ))
    })?;

    let total = Instant::now();
    let mut report = RunReport::skeleton(config.clone());

    let stopwatch = Instant::now();
    let data = match acquire_data(&config, &mut report) {
        Ok(data) => data,
        Err(e) => return Err(abandon(&config, report, "load", total, e)),
    };
    report.timings_ms.insert("load".into(), ms(stopwatch));

    let options = config.pipeline_options();
    let stopwatch = Instant::now();
    let out = match run_pipeline(&data, &options) {
        Ok(out) => out,
        Err(failure) => {
            report.timings_ms.insert("pipeline".into(), ms(stopwatch));
            let stage = failure.stage.to_string();
            return Err(abandon(&config, report, &stage, total, failure.into()));
        }
    };
    report.timings_ms.insert("pipeline".into(), ms(stopwatch));

    let stopwatch = Instant::now();
    fill_report(&mut report, &out, &options);
    report.artifacts.push("report.json".into());
    if let Err(e) = write_artifacts(&config, &data, &out, args.plot_data, &mut report) {
        return Err(abandon(&config, report, "write", total, e));
    }
    report.timings_ms.insert("write".into(), ms(stopwatch));
    report.timings_ms.insert("total".into(), ms(total));
    write_json(&config.output_dir.join("report.json"), &report)?;

    print_line(&format!(
        "report: {}",
        config.output_dir.join("report.json").display()
    ));
    print_line(&format!(
        "doubly robust effect estimate: {:+.4}",
        out.ate.aipw.tau_hat
    ));
    print_line(&format!("weighted rule:   {}", out.weighted.inequality));
    print_line(&format!("weighted value:  {:.6}", out.weighted.value.value));
    if let Some(unweighted) = &out.unweighted {
        print_line(&format!("unweighted rule:  {}", unweighted.inequality));
        print_line(&format!("unweighted value: {:.6}", unweighted.value.value));
    }
    Ok(())
}
