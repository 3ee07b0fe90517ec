//! Patient-level data: typed records, CSV ingestion, validation, and
//! per-population summary statistics.
//!
//! A dataset is an ordered list of records, each holding a covariate vector
//! plus optional treatment, outcome, and a population tag (`source` rows come
//! from the study that observed treatments and outcomes; `target` rows are the
//! population we want a rule for and need only covariates).

use std::collections::HashSet;
use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which population a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Population {
    Source,
    Target,
    /// The broad population a simulation draws from before any sampling;
    /// records here carry no realized treatment or outcome.
    General,
}

impl FromStr for Population {
    type Err = Error;

    /// Case-insensitive parse of the literal labels `source` / `target` /
    /// `general`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "source" => Ok(Population::Source),
            "target" => Ok(Population::Target),
            "general" => Ok(Population::General),
            other => Err(Error::Invalid(format!(
                "unknown population label {other:?} (expected \"source\", \"target\", or \"general\")"
            ))),
        }
    }
}

impl fmt::Display for Population {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Population::Source => write!(f, "source"),
            Population::Target => write!(f, "target"),
            Population::General => write!(f, "general"),
        }
    }
}

/// One row of a study: covariates plus whatever else was observed.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    pub covariates: Vec<f64>,
    /// 1 = treated, 0 = control; absent for rows where assignment is unknown.
    pub treatment: Option<u8>,
    /// Observed outcome, larger is better; absent where unobserved.
    pub outcome: Option<f64>,
    pub population: Population,
}

/// An immutable collection of records sharing one covariate layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariate_names: Vec<String>,
    records: Vec<PatientRecord>,
}

impl Dataset {
    /// Builds a dataset, checking dimension consistency and value domains.
    pub fn new(covariate_names: Vec<String>, records: Vec<PatientRecord>) -> Result<Self> {
        if covariate_names.is_empty() {
            return Err(Error::Invalid("no covariate columns".into()));
        }
        let mut seen = HashSet::new();
        for name in &covariate_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Invalid(format!("duplicate covariate name {name:?}")));
            }
        }
        if records.is_empty() {
            return Err(Error::Invalid("dataset has zero rows".into()));
        }
        let p = covariate_names.len();
        for rec in &records {
            if rec.covariates.len() != p {
                return Err(Error::Invalid(format!(
                    "record {:?} has {} covariates, expected {p}",
                    rec.id,
                    rec.covariates.len()
                )));
            }
            if let Some(bad) = rec.covariates.iter().position(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!(
                    "record {:?}: covariate {:?} is not finite",
                    rec.id, covariate_names[bad]
                )));
            }
            if let Some(t) = rec.treatment {
                if t > 1 {
                    return Err(Error::Invalid(format!(
                        "record {:?}: treatment must be 0 or 1, got {t}",
                        rec.id
                    )));
                }
            }
            if let Some(y) = rec.outcome {
                if !y.is_finite() {
                    return Err(Error::Invalid(format!(
                        "record {:?}: outcome is not finite",
                        rec.id
                    )));
                }
            }
        }
        Ok(Dataset {
            covariate_names,
            records,
        })
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    /// Number of covariates per record.
    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub fn n_source(&self) -> usize {
        self.count(Population::Source)
    }

    pub fn n_target(&self) -> usize {
        self.count(Population::Target)
    }

    fn count(&self, pop: Population) -> usize {
        self.records.iter().filter(|r| r.population == pop).count()
    }

    fn selected(&self, filter: Option<Population>) -> impl Iterator<Item = &PatientRecord> {
        self.records
            .iter()
            .filter(move |r| filter.map_or(true, |pop| r.population == pop))
    }

    /// Covariates of the selected population as an n×p matrix, in row order.
    pub fn covariate_matrix(&self, filter: Option<Population>) -> DMatrix<f64> {
        let rows: Vec<&PatientRecord> = self.selected(filter).collect();
        DMatrix::from_fn(rows.len(), self.p(), |i, j| rows[i].covariates[j])
    }

    /// Per-covariate mean and sample standard deviation over a population.
    pub fn covariate_summary(&self, filter: Option<Population>) -> Result<CovariateSummary> {
        let rows: Vec<&PatientRecord> = self.selected(filter).collect();
        if rows.is_empty() {
            let label = match filter {
                Some(pop) => format!("{pop} population"),
                None => "dataset".to_string(),
            };
            return Err(Error::Invalid(format!("empty selection: {label} has no rows")));
        }
        let n = rows.len();
        let p = self.p();
        let mut mean = vec![0.0; p];
        for r in &rows {
            for j in 0..p {
                mean[j] += r.covariates[j];
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut sd = vec![0.0; p];
        if n > 1 {
            for r in &rows {
                for j in 0..p {
                    let d = r.covariates[j] - mean[j];
                    sd[j] += d * d;
                }
            }
            for s in &mut sd {
                *s = (*s / (n - 1) as f64).sqrt();
            }
        }
        Ok(CovariateSummary {
            names: self.covariate_names.clone(),
            mean,
            sd,
            n,
        })
    }

    /// Source rows with treatment and outcome unpacked; errors if any source
    /// row is missing either field (the estimators need both).
    pub fn source_view(&self) -> Result<SourceView> {
        let rows: Vec<(usize, &PatientRecord)> = self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.population == Population::Source)
            .collect();
        if rows.is_empty() {
            return Err(Error::Invalid("dataset has no source rows".into()));
        }
        let missing_t = rows.iter().filter(|(_, r)| r.treatment.is_none()).count();
        if missing_t > 0 {
            return Err(Error::Invalid(format!(
                "{missing_t} of {} source rows are missing a treatment value; \
                 check the treatment column",
                rows.len()
            )));
        }
        let missing_y = rows.iter().filter(|(_, r)| r.outcome.is_none()).count();
        if missing_y > 0 {
            return Err(Error::Invalid(format!(
                "{missing_y} of {} source rows are missing an outcome value; \
                 check the outcome column",
                rows.len()
            )));
        }
        let x = DMatrix::from_fn(rows.len(), self.p(), |i, j| rows[i].1.covariates[j]);
        Ok(SourceView {
            x,
            treatment: rows.iter().map(|(_, r)| r.treatment.unwrap()).collect(),
            outcome: rows.iter().map(|(_, r)| r.outcome.unwrap()).collect(),
            ids: rows.iter().map(|(_, r)| r.id.clone()).collect(),
            row_indices: rows.iter().map(|(i, _)| *i).collect(),
        })
    }

    /// Target rows (covariates only); errors if there are none.
    pub fn target_view(&self) -> Result<TargetView> {
        let rows: Vec<(usize, &PatientRecord)> = self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.population == Population::Target)
            .collect();
        if rows.is_empty() {
            return Err(Error::Invalid("dataset has no target rows".into()));
        }
        let x = DMatrix::from_fn(rows.len(), self.p(), |i, j| rows[i].1.covariates[j]);
        Ok(TargetView {
            x,
            ids: rows.iter().map(|(_, r)| r.id.clone()).collect(),
            row_indices: rows.iter().map(|(i, _)| *i).collect(),
        })
    }

    /// Structural checks that do not reject the data: counts by population
    /// and arm, missing-field tallies, and degenerate (constant) columns.
    pub fn validate(&self) -> ValidationReport {
        let n_source = self.n_source();
        let n_target = self.n_target();
        let mut n_source_treated = 0;
        let mut n_source_control = 0;
        let mut source_missing_treatment = 0;
        let mut source_missing_outcome = 0;
        for r in self.selected(Some(Population::Source)) {
            match r.treatment {
                Some(1) => n_source_treated += 1,
                Some(_) => n_source_control += 1,
                None => source_missing_treatment += 1,
            }
            if r.outcome.is_none() {
                source_missing_outcome += 1;
            }
        }

        let mut constant_covariates = Vec::new();
        for j in 0..self.p() {
            let first = self.records[0].covariates[j];
            if self.records.iter().all(|r| r.covariates[j] == first) {
                constant_covariates.push(self.covariate_names[j].clone());
            }
        }

        let mut issues = Vec::new();
        if n_source == 0 {
            issues.push("no source rows".to_string());
        }
        if n_target == 0 {
            issues.push("no target rows".to_string());
        }
        if n_source > 0 && n_source_treated == 0 {
            issues.push("empty treatment arm in source (no treated rows)".to_string());
        }
        if n_source > 0 && n_source_control == 0 {
            issues.push("empty treatment arm in source (no control rows)".to_string());
        }
        if source_missing_treatment > 0 {
            issues.push(format!(
                "{source_missing_treatment} source rows missing treatment"
            ));
        }
        if source_missing_outcome > 0 {
            issues.push(format!("{source_missing_outcome} source rows missing outcome"));
        }
        for name in &constant_covariates {
            issues.push(format!(
                "covariate {name:?} is constant (degenerate for balancing)"
            ));
        }

        ValidationReport {
            n_records: self.n(),
            n_source,
            n_target,
            n_source_treated,
            n_source_control,
            source_missing_treatment,
            source_missing_outcome,
            constant_covariates,
            issues,
        }
    }

    /// Writes the dataset as CSV with full numeric precision.
    ///
    /// Column order: `id`, covariates, `treatment`, `outcome`, `population`.
    /// Missing treatment/outcome cells are left empty.
    pub fn write_csv_to<W: io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string()];
        header.extend(self.covariate_names.iter().cloned());
        header.extend(["treatment".into(), "outcome".into(), "population".into()]);
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.id.clone()];
            row.extend(r.covariates.iter().map(|v| format!("{v}")));
            row.push(r.treatment.map_or(String::new(), |t| t.to_string()));
            row.push(r.outcome.map_or(String::new(), |y| format!("{y}")));
            row.push(r.population.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv_to(io::BufWriter::new(file))
    }
}

/// Source rows unpacked for estimation.
#[derive(Debug, Clone)]
pub struct SourceView {
    pub x: DMatrix<f64>,
    pub treatment: Vec<u8>,
    pub outcome: Vec<f64>,
    pub ids: Vec<String>,
    /// Positions of these rows in the originating dataset.
    pub row_indices: Vec<usize>,
}

/// Target rows unpacked for calibration.
#[derive(Debug, Clone)]
pub struct TargetView {
    pub x: DMatrix<f64>,
    pub ids: Vec<String>,
    pub row_indices: Vec<usize>,
}

/// Per-covariate location and spread over one population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSummary {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    /// Sample standard deviation (n−1 divisor); 0 for constant columns and
    /// single-row selections.
    pub sd: Vec<f64>,
    pub n: usize,
}

impl CovariateSummary {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Outcome of [`Dataset::validate`]; reporting only, never rejects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_records: usize,
    pub n_source: usize,
    pub n_target: usize,
    pub n_source_treated: usize,
    pub n_source_control: usize,
    pub source_missing_treatment: usize,
    pub source_missing_outcome: usize,
    pub constant_covariates: Vec<String>,
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Maps CSV columns to roles. With everything `None`, the loader looks for
/// the reserved header names `id`, `treatment`, `outcome`, `population` and
/// treats every other column as a covariate.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub id_column: Option<String>,
    pub treatment_column: Option<String>,
    pub outcome_column: Option<String>,
    pub population_column: Option<String>,
    /// Explicit covariate selection; inferred from the header when absent.
    pub covariate_columns: Option<Vec<String>>,
    /// Population assigned to every row when the file has no population
    /// column (single-population files).
    pub default_population: Option<Population>,
    /// Drop rows with missing covariates instead of rejecting the file.
    pub drop_incomplete: bool,
}

/// What ingestion did: how many rows were read and (under
/// [`CsvSchema::drop_incomplete`]) how many were dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
}

const RESERVED_ID: &str = "id";
const RESERVED_TREATMENT: &str = "treatment";
const RESERVED_OUTCOME: &str = "outcome";
const RESERVED_POPULATION: &str = "population";

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na")
}

fn parse_cell(cell: &str, column: &str, row: usize) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| {
        Error::Invalid(format!(
            "data row {row}, column {column:?}: cannot parse {cell:?} as a number"
        ))
    })?;
    if !v.is_finite() {
        return Err(Error::Invalid(format!(
            "data row {row}, column {column:?}: value {cell:?} is not finite"
        )));
    }
    Ok(v)
}

/// Reads a dataset from CSV (UTF-8, first row header).
pub fn read_csv<R: io::Read>(reader: R, schema: &CsvSchema) -> Result<(Dataset, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let find = |explicit: &Option<String>, reserved: &str| -> Result<Option<usize>> {
        match explicit {
            Some(name) => match headers.iter().position(|h| h == name) {
                Some(i) => Ok(Some(i)),
                None => Err(Error::Invalid(format!(
                    "schema names column {name:?}, which is not in the header"
                ))),
            },
            None => Ok(headers.iter().position(|h| h == reserved)),
        }
    };

    let id_idx = find(&schema.id_column, RESERVED_ID)?;
    let treatment_idx = find(&schema.treatment_column, RESERVED_TREATMENT)?;
    let outcome_idx = find(&schema.outcome_column, RESERVED_OUTCOME)?;
    let population_idx = find(&schema.population_column, RESERVED_POPULATION)?;

    let role_indices: HashSet<usize> = [id_idx, treatment_idx, outcome_idx, population_idx]
        .into_iter()
        .flatten()
        .collect();

    let covariate_idx: Vec<usize> = match &schema.covariate_columns {
        Some(names) => {
            let mut idx = Vec::with_capacity(names.len());
            for name in names {
                let i = headers.iter().position(|h| h == name).ok_or_else(|| {
                    Error::Invalid(format!(
                        "schema lists covariate {name:?}, which is not in the header"
                    ))
                })?;
                if role_indices.contains(&i) {
                    return Err(Error::Invalid(format!(
                        "column {name:?} is mapped to both a covariate and a reserved role"
                    )));
                }
                idx.push(i);
            }
            idx
        }
        None => (0..headers.len())
            .filter(|i| !role_indices.contains(i))
            .collect(),
    };
    if covariate_idx.is_empty() {
        return Err(Error::Invalid("no covariate columns in the file".into()));
    }
    let covariate_names: Vec<String> = covariate_idx.iter().map(|&i| headers[i].clone()).collect();

    if population_idx.is_none() && schema.default_population.is_none() {
        return Err(Error::Invalid(
            "file has no population column and the schema sets no default population".into(),
        ));
    }

    let mut records = Vec::new();
    let mut rows_read = 0usize;
    let mut rows_dropped = 0usize;
    for (r, row) in rdr.records().enumerate() {
        let row = row?;
        let rownum = r + 1; // 1-based data row, header excluded
        rows_read += 1;

        let mut covariates = Vec::with_capacity(covariate_idx.len());
        let mut incomplete = false;
        for (&i, name) in covariate_idx.iter().zip(&covariate_names) {
            let cell = row.get(i).unwrap_or("");
            if is_missing(cell) {
                if schema.drop_incomplete {
                    incomplete = true;
                    break;
                }
                return Err(Error::Invalid(format!(
                    "data row {rownum}: missing covariate {name:?} \
                     (use drop_incomplete to skip such rows)"
                )));
            }
            covariates.push(parse_cell(cell, name, rownum)?);
        }
        if incomplete {
            rows_dropped += 1;
            continue;
        }

        let treatment = match treatment_idx {
            Some(i) => {
                let cell = row.get(i).unwrap_or("");
                if is_missing(cell) {
                    None
                } else {
                    let v = parse_cell(cell, RESERVED_TREATMENT, rownum)?;
                    if v == 0.0 {
                        Some(0)
                    } else if v == 1.0 {
                        Some(1)
                    } else {
                        return Err(Error::Invalid(format!(
                            "data row {rownum}, column \"treatment\": \
                             value {v} is outside {{0, 1}}"
                        )));
                    }
                }
            }
            None => None,
        };

        let outcome = match outcome_idx {
            Some(i) => {
                let cell = row.get(i).unwrap_or("");
                if is_missing(cell) {
                    None
                } else {
                    Some(parse_cell(cell, RESERVED_OUTCOME, rownum)?)
                }
            }
            None => None,
        };

        let population = match population_idx {
            Some(i) => {
                let cell = row.get(i).unwrap_or("");
                if is_missing(cell) {
                    schema.default_population.ok_or_else(|| {
                        Error::Invalid(format!(
                            "data row {rownum}: empty population cell and no default population"
                        ))
                    })?
                } else {
                    cell.parse()?
                }
            }
            None => schema.default_population.unwrap(),
        };

        let id = match id_idx {
            Some(i) => row.get(i).unwrap_or("").to_string(),
            None => rownum.to_string(),
        };

        records.push(PatientRecord {
            id,
            covariates,
            treatment,
            outcome,
            population,
        });
    }

    let dataset = Dataset::new(covariate_names, records)?;
    Ok((
        dataset,
        IngestReport {
            rows_read,
            rows_dropped,
        },
    ))
}

/// Reads a dataset from a CSV file on disk.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<(Dataset, IngestReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Invalid(format!("cannot open {}: {e}", path.display()))
    })?;
    read_csv(io::BufReader::new(file), schema)
}
