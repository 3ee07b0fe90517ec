//! Synthetic two-covariate study with known ground truth.
//!
//! The generator builds a general population of heights and ages, realizes
//! both potential outcomes for every record, then draws two overlapping-free
//! samples: a *target* sample (simple random sample, treatment assigned by a
//! covariate-driven propensity) and a *source* sample (selection biased
//! toward tall, older records, treatment randomized 50/50 as in an RCT).
//! Because both potential outcomes are retained, any candidate rule can be
//! scored against the assignment that truly helps each record.
//!
//! The treatment effect is positive exactly for records taller than 55
//! inches and younger than 41 years, so the best possible assignment is a
//! known rectangle in covariate space and the best *linear* rule can be
//! found by exhaustive search ([`true_optimal_linear_itr`]).

use crate::data::{Dataset, PatientRecord, Population};
use crate::error::{Error, Result};
use crate::rule::LinearItr;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::path::Path;

/// Height (inches) above which the treatment starts to help.
const EFFECT_HEIGHT_CUT: f64 = 55.0;
/// Age (years) below which the treatment starts to help.
const EFFECT_AGE_CUT: f64 = 41.0;
/// Normalizers keeping the two effect margins on comparable scales.
const HEIGHT_MARGIN_NORM: f64 = 29.0;
const AGE_MARGIN_NORM: f64 = 23.0;

/// Parameters of the synthetic study.
///
/// The propensity and sampling coefficients are `(intercept, height, age)`
/// tuples applied to *standardized* covariates (theoretical uniform moments),
/// so their scales are comparable across ranges. The control-arm outcome is
/// linear in the *raw* covariates plus Gaussian noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_general: usize,
    pub n_target: usize,
    pub height_range: (f64, f64),
    pub age_range: (f64, f64),
    /// Treatment-assignment logistic for the target sample.
    pub propensity: (f64, f64, f64),
    /// Source-inclusion logistic; positive slopes bias the source sample
    /// toward tall, older records.
    pub sampling: (f64, f64, f64),
    /// Slopes of the control-arm outcome on raw height and age.
    pub outcome_coefficients: (f64, f64),
    pub noise_sd: f64,
    /// Multiplier δ on the effect surface; larger values separate the
    /// helped/harmed regions more sharply relative to the noise.
    pub contrast_scale: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_general: 50_000,
            n_target: 10_000,
            height_range: (40.0, 70.0),
            age_range: (26.0, 44.0),
            propensity: (0.0, 0.3, -0.3),
            sampling: (-2.5, 0.5, 0.5),
            outcome_coefficients: (0.02, 0.01),
            noise_sd: 0.5,
            contrast_scale: 6.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_general == 0 || self.n_target == 0 {
            return Err(Error::Invalid("sample counts must be positive".into()));
        }
        if self.n_target >= self.n_general {
            return Err(Error::Invalid(format!(
                "n_target ({}) must be smaller than n_general ({})",
                self.n_target, self.n_general
            )));
        }
        for (name, (lo, hi)) in [("height", self.height_range), ("age", self.age_range)] {
            if !lo.is_finite() || !hi.is_finite() || hi <= lo {
                return Err(Error::Invalid(format!(
                    "{name}_range must be a finite nonempty interval; got ({lo}, {hi})"
                )));
            }
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::Invalid(format!(
                "noise_sd must be a nonnegative real; got {}",
                self.noise_sd
            )));
        }
        let coefs = [
            self.propensity.0,
            self.propensity.1,
            self.propensity.2,
            self.sampling.0,
            self.sampling.1,
            self.sampling.2,
            self.outcome_coefficients.0,
            self.outcome_coefficients.1,
            self.contrast_scale,
        ];
        if coefs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid("model coefficients must be finite".into()));
        }
        Ok(())
    }

    /// Treatment-effect surface: `δ · min((height−55)/29, (41−age)/23)`,
    /// positive exactly when height > 55 and age < 41.
    pub fn contrast(&self, height: f64, age: f64) -> f64 {
        let h_margin = (height - EFFECT_HEIGHT_CUT) / HEIGHT_MARGIN_NORM;
        let a_margin = (EFFECT_AGE_CUT - age) / AGE_MARGIN_NORM;
        self.contrast_scale * h_margin.min(a_margin)
    }

    /// Theoretical mean and standard deviation of a uniform covariate,
    /// used to standardize inputs to the two logistic models.
    fn moments(range: (f64, f64)) -> (f64, f64) {
        let (lo, hi) = range;
        ((lo + hi) / 2.0, (hi - lo) / 12f64.sqrt())
    }

    fn stream(&self, index: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

fn expit(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Everything known about a simulated record that real data would hide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    /// Potential outcome under control.
    pub y0: f64,
    /// Potential outcome under treatment.
    pub y1: f64,
    /// Probability of treatment when sampled into the target.
    pub propensity: f64,
    /// Probability of inclusion in the source sample.
    pub sampling_score: f64,
    /// 1 exactly when treating this record beats not treating it.
    pub optimal: u8,
}

/// The general population with its per-record ground truth.
///
/// `data` rows carry no treatment or outcome — those are realized only when
/// a record is drawn into a sample — and `truth[i]` describes `data` row `i`.
#[derive(Debug, Clone)]
pub struct SimulatedPopulation {
    pub data: Dataset,
    pub truth: Vec<TruthRecord>,
    by_id: HashMap<String, usize>,
}

impl SimulatedPopulation {
    pub fn n(&self) -> usize {
        self.truth.len()
    }

    /// Ground truth for a record id, if the id names a population record.
    pub fn truth_for(&self, id: &str) -> Option<&TruthRecord> {
        self.by_id.get(id).map(|&i| &self.truth[i])
    }
}

/// Draws the general population: covariates uniform over their ranges, both
/// potential outcomes, true propensity and sampling scores. Deterministic
/// given the config (covariates, noise, and scores all come from one stream
/// dedicated to this stage).
pub fn generate_population(config: &SimConfig) -> Result<SimulatedPopulation> {
    config.validate()?;
    let mut rng = config.stream(0);
    let (mu_h, sd_h) = SimConfig::moments(config.height_range);
    let (mu_a, sd_a) = SimConfig::moments(config.age_range);
    let (p0, p_h, p_a) = config.propensity;
    let (s0, s_h, s_a) = config.sampling;
    let (b_h, b_a) = config.outcome_coefficients;

    let mut records = Vec::with_capacity(config.n_general);
    let mut truth = Vec::with_capacity(config.n_general);
    let mut by_id = HashMap::with_capacity(config.n_general);
    for i in 0..config.n_general {
        let height = rng.random_range(config.height_range.0..=config.height_range.1);
        let age = rng.random_range(config.age_range.0..=config.age_range.1);
        let eps: f64 = rng.sample::<f64, _>(StandardNormal) * config.noise_sd;

        let z_h = (height - mu_h) / sd_h;
        let z_a = (age - mu_a) / sd_a;
        let y0 = b_h * height + b_a * age + eps;
        let y1 = y0 + config.contrast(height, age);

        let id = format!("r{}", i + 1);
        by_id.insert(id.clone(), i);
        records.push(PatientRecord {
            id,
            covariates: vec![height, age],
            treatment: None,
            outcome: None,
            population: Population::General,
        });
        truth.push(TruthRecord {
            y0,
            y1,
            propensity: expit(p0 + p_h * z_h + p_a * z_a),
            sampling_score: expit(s0 + s_h * z_h + s_a * z_a),
            optimal: u8::from(y1 > y0),
        });
    }
    let data = Dataset::new(vec!["height".into(), "age".into()], records)?;
    Ok(SimulatedPopulation { data, truth, by_id })
}

/// Simple random sample of `n_target` population records, with treatment
/// realized by each record's true propensity and the observed outcome set to
/// the matching potential outcome.
pub fn sample_target(pop: &SimulatedPopulation, config: &SimConfig) -> Result<Dataset> {
    if config.n_target > pop.n() {
        return Err(Error::Invalid(format!(
            "cannot sample {} of {} records",
            config.n_target,
            pop.n()
        )));
    }
    let mut rng = config.stream(1);
    let mut chosen = rand::seq::index::sample(&mut rng, pop.n(), config.n_target).into_vec();
    chosen.sort_unstable();

    let records = chosen
        .iter()
        .map(|&i| {
            let base = &pop.data.records()[i];
            let t = &pop.truth[i];
            let a = u8::from(rng.random::<f64>() < t.propensity);
            PatientRecord {
                id: base.id.clone(),
                covariates: base.covariates.clone(),
                treatment: Some(a),
                outcome: Some(if a == 1 { t.y1 } else { t.y0 }),
                population: Population::Target,
            }
        })
        .collect();
    Dataset::new(pop.data.covariate_names().to_vec(), records)
}

/// Draws the source sample from the population records *not* in `target`:
/// each remaining record enters with its sampling score, and entrants are
/// randomized 50/50 to treatment as in a two-arm trial.
pub fn sample_source_rct(
    pop: &SimulatedPopulation,
    target: &Dataset,
    config: &SimConfig,
) -> Result<Dataset> {
    let taken: HashSet<&str> = target.records().iter().map(|r| r.id.as_str()).collect();
    let mut rng = config.stream(2);
    let mut records = Vec::new();
    for (i, base) in pop.data.records().iter().enumerate() {
        if taken.contains(base.id.as_str()) {
            continue;
        }
        let t = &pop.truth[i];
        if rng.random::<f64>() < t.sampling_score {
            let a = u8::from(rng.random::<f64>() < 0.5);
            records.push(PatientRecord {
                id: base.id.clone(),
                covariates: base.covariates.clone(),
                treatment: Some(a),
                outcome: Some(if a == 1 { t.y1 } else { t.y0 }),
                population: Population::Source,
            });
        }
    }
    if records.is_empty() {
        return Err(Error::Invalid(
            "source sampling selected zero units; raise the sampling intercept".into(),
        ));
    }
    Dataset::new(pop.data.covariate_names().to_vec(), records)
}

/// A complete simulated study: the population plus both samples.
#[derive(Debug, Clone)]
pub struct SimStudy {
    pub population: SimulatedPopulation,
    pub source: Dataset,
    pub target: Dataset,
}

impl SimStudy {
    /// Source and target rows merged into the single dataset the estimation
    /// pipeline consumes.
    pub fn combined(&self) -> Result<Dataset> {
        let mut records = self.source.records().to_vec();
        records.extend(self.target.records().iter().cloned());
        Dataset::new(self.source.covariate_names().to_vec(), records)
    }
}

/// Runs all three stages for one config.
pub fn simulate_study(config: &SimConfig) -> Result<SimStudy> {
    let population = generate_population(config)?;
    let target = sample_target(&population, config)?;
    let source = sample_source_rct(&population, &target, config)?;
    Ok(SimStudy {
        population,
        source,
        target,
    })
}

/// Fraction of `subset` records whose decision under `rule` matches the
/// truly optimal assignment. Requires every subset id to exist in `pop`.
pub fn oracle_classification_rate(
    rule: &LinearItr,
    pop: &SimulatedPopulation,
    subset: &Dataset,
) -> Result<f64> {
    if subset.n() == 0 {
        return Err(Error::Invalid("cannot score an empty subset".into()));
    }
    let x = subset.covariate_matrix(None);
    let decisions = rule.apply_named(subset.covariate_names(), &x)?;
    let mut agree = 0usize;
    for (record, &d) in subset.records().iter().zip(&decisions) {
        let truth = pop.truth_for(&record.id).ok_or_else(|| {
            Error::Invalid(format!("no ground truth for record {:?}", record.id))
        })?;
        if d == truth.optimal {
            agree += 1;
        }
    }
    Ok(agree as f64 / subset.n() as f64)
}

/// Exhaustively searches two-covariate linear rules for the one agreeing
/// most often with the truly optimal assignment on `subset`.
///
/// Rules are parameterized as a unit direction over standardized covariates
/// plus an offset; a dense sweep of directions (with an exact threshold scan
/// per direction, then local angular refinement) is exhaustive up to the
/// angular resolution because for a fixed direction only the `n + 1`
/// orderings of the projections matter. Defined only for two covariates.
pub fn true_optimal_linear_itr(
    pop: &SimulatedPopulation,
    subset: &Dataset,
) -> Result<LinearItr> {
    if subset.p() != 2 {
        return Err(Error::Invalid(format!(
            "exhaustive rule search is defined only for two covariates; got {}",
            subset.p()
        )));
    }
    if subset.n() == 0 {
        return Err(Error::Invalid("cannot search an empty subset".into()));
    }

    // Standardize with subset moments; the returned rule maps back exactly.
    let summary = subset.covariate_summary(None)?;
    let (mu, sd) = (summary.mean, summary.sd);
    if sd.iter().any(|&s| s == 0.0) {
        return Err(Error::Invalid(
            "a constant covariate admits no direction search".into(),
        ));
    }
    let x = subset.covariate_matrix(None);
    let n = subset.n();
    let z: Vec<(f64, f64)> = (0..n)
        .map(|i| ((x[(i, 0)] - mu[0]) / sd[0], (x[(i, 1)] - mu[1]) / sd[1]))
        .collect();
    let optimal: Vec<u8> = subset
        .records()
        .iter()
        .map(|r| {
            pop.truth_for(&r.id)
                .map(|t| t.optimal)
                .ok_or_else(|| Error::Invalid(format!("no ground truth for record {:?}", r.id)))
        })
        .collect::<Result<_>>()?;
    let total_optimal: usize = optimal.iter().map(|&o| o as usize).sum();

    let mut proj = vec![0f64; n];
    let mut order: Vec<usize> = (0..n).collect();
    // For a direction, the best threshold among the n+1 distinct cuts.
    let scan = |theta: f64, proj: &mut Vec<f64>, order: &mut Vec<usize>| -> (usize, f64) {
        let (c, s) = (theta.cos(), theta.sin());
        for i in 0..n {
            proj[i] = c * z[i].0 + s * z[i].1;
        }
        order.sort_unstable_by(|&a, &b| proj[a].partial_cmp(&proj[b]).unwrap());
        // Cut k treats the records ranked k.. ; sweep k upward maintaining
        // the agreement count incrementally.
        let mut agree = total_optimal; // k = 0: treat everyone
        let mut best_agree = agree;
        let mut best_k = 0usize;
        for k in 1..=n {
            let moved = order[k - 1]; // now assigned control
            if optimal[moved] == 1 {
                agree -= 1;
            } else {
                agree += 1;
            }
            // Only cuts separating distinct projections are realizable.
            let realizable = k == n || proj[order[k]] > proj[order[k - 1]];
            if realizable && agree > best_agree {
                best_agree = agree;
                best_k = k;
            }
        }
        let threshold = if best_k == 0 {
            proj[order[0]] - 1.0
        } else if best_k == n {
            proj[order[n - 1]] + 1.0
        } else {
            0.5 * (proj[order[best_k - 1]] + proj[order[best_k]])
        };
        (best_agree, threshold)
    };

    let coarse = 360usize;
    let step = std::f64::consts::TAU / coarse as f64;
    let mut best = (0usize, 0.0f64, 0.0f64); // (agreements, theta, threshold)
    for k in 0..coarse {
        let theta = k as f64 * step;
        let (agree, t) = scan(theta, &mut proj, &mut order);
        if agree > best.0 {
            best = (agree, theta, t);
        }
    }
    // Refine one coarse step around the winner at 40× resolution.
    let fine = step / 40.0;
    for j in -40i32..=40 {
        let theta = best.1 + j as f64 * fine;
        let (agree, t) = scan(theta, &mut proj, &mut order);
        if agree > best.0 {
            best = (agree, theta, t);
        }
    }

    let (_, theta, t) = best;
    let (c, s) = (theta.cos(), theta.sin());
    let eta = vec![
        c / sd[0],
        s / sd[1],
        -t - c * mu[0] / sd[0] - s * mu[1] / sd[1],
    ];
    LinearItr::new(subset.covariate_names().to_vec(), eta).map(|r| r.canonical())
}

/// Writes `truth.csv`: one row per population record with both potential
/// outcomes, the true propensity, and the truly optimal assignment.
pub fn write_truth_csv(pop: &SimulatedPopulation, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(["id", "y0", "y1", "true_propensity", "true_optimal"])?;
    for (record, truth) in pop.data.records().iter().zip(&pop.truth) {
        w.write_record([
            record.id.as_str(),
            &format!("{}", truth.y0),
            &format!("{}", truth.y1),
            &format!("{}", truth.propensity),
            &format!("{}", truth.optimal),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the four study CSVs plus `sim_meta.json` into `dir`.
///
/// Outputs are byte-identical across runs with the same config: every stage
/// consumes its own seeded stream and floats are printed in shortest
/// round-trip form.
pub fn write_study(study: &SimStudy, config: &SimConfig, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    study.population.data.write_csv(dir.join("general.csv"))?;
    study.source.write_csv(dir.join("source.csv"))?;
    study.target.write_csv(dir.join("target.csv"))?;
    write_truth_csv(&study.population, dir.join("truth.csv"))?;

    let meta = serde_json::json!({
        "config": config,
        "realized": {
            "n_general": study.population.n(),
            "n_source": study.source.n(),
            "n_target": study.target.n(),
        },
    });
    std::fs::write(dir.join("sim_meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}
