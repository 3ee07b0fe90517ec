mod args;
mod commands;
mod config;
mod error;
mod load;
mod report;
mod run;

use clap::Parser;

/// Applies the `ITR_THREADS` cap before any parallel work starts. Results
/// are identical for every setting; only wall-clock time changes.
fn init_thread_pool() {
    let Ok(raw) = std::env::var("ITR_THREADS") else {
        return;
    };
    match raw.parse::<usize>() {
        Ok(n) if n >= 1 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
            {
                eprintln!("warning: could not apply ITR_THREADS={n}: {e}");
            }
        }
        _ => eprintln!("warning: ignoring ITR_THREADS={raw:?}; expected a positive integer"),
    }
}

fn main() {
    let cli = args::Cli::parse();
    init_thread_pool();
    let result = match &cli.command {
        args::Command::Simulate(a) => commands::simulate(a),
        args::Command::Calibrate(a) => commands::calibrate(a),
        args::Command::Estimate(a) => commands::estimate(a),
        args::Command::Value(a) => commands::value(a),
        args::Command::Optimize(a) => commands::optimize(a),
        args::Command::Importance(a) => commands::importance(a),
        args::Command::Run(a) => run::run(a),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}
