use crate::error::{CliError, CliResult};
use itr_core::data::{load_csv, CsvSchema, Dataset, Population};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::path::Path;

/// Reads and parses a JSON file, naming the file in any error.
pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("bad {what} {}: {e}", path.display())))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::runtime(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

/// Prints one line to standard output. When the consumer has already closed
/// the pipe (e.g. `| head`), exits quietly instead of failing.
pub fn print_line(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(e) = writeln!(out, "{text}") {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: cannot write to stdout: {e}");
        std::process::exit(1);
    }
}

/// Pretty-prints a machine-readable result to standard output.
pub fn print_json(value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::runtime(format!("cannot serialize output: {e}")))?;
    print_line(&text);
    Ok(())
}

/// Loads one CSV, labeling rows without a population as `fallback`.
pub fn load_one(path: &Path, schema: &CsvSchema, fallback: Population) -> CliResult<Dataset> {
    let schema = CsvSchema {
        default_population: Some(fallback),
        ..schema.clone()
    };
    let (data, _) = load_csv(path, &schema)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    Ok(data)
}

/// Loads a source file and a target file into one dataset, defaulting each
/// file's unlabeled rows to its own population.
pub fn load_pair(source: &Path, target: &Path, schema: &CsvSchema) -> CliResult<Dataset> {
    let src = load_one(source, schema, Population::Source)?;
    let tgt = load_one(target, schema, Population::Target)?;
    if src.covariate_names() != tgt.covariate_names() {
        return Err(CliError::usage(format!(
            "covariate columns differ between {} ({:?}) and {} ({:?})",
            source.display(),
            src.covariate_names(),
            target.display(),
            tgt.covariate_names()
        )));
    }
    let names = src.covariate_names().to_vec();
    let records = src
        .records()
        .iter()
        .chain(tgt.records())
        .cloned()
        .collect();
    Dataset::new(names, records).map_err(CliError::from)
}
