//! Real-coded genetic algorithm over linear-rule coefficients.
//!
//! The optimizer searches a bounded box for the coefficient vector η
//! (covariate weights plus trailing intercept) maximizing a caller-supplied
//! objective, typically the doubly robust policy value from [`crate::value`].
//! Runs are deterministic given `(GaConfig, objective)`: the master seed
//! derives one independent random stream per restart, candidate evaluation
//! never consumes randomness, and every reduction is an ordered scan with
//! ties broken toward the lowest index — so results are bit-identical
//! regardless of how many threads execute them.

use crate::error::{Error, Result};
use crate::rule::LinearItr;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Settings for [`optimize_itr`].
///
/// `domain` and `mutation_rate` default to `None`, meaning "resolve from the
/// problem dimension when the search starts": a `[-1, 1]` box per coordinate
/// and a per-gene mutation probability of `1/(p+1)`. `mutation_scale` is the
/// standard deviation of the Gaussian mutation noise; `None` means one tenth
/// of each coordinate's box width.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    /// Per-coordinate `(low, high)` search bounds, length `p + 1`.
    pub domain: Option<Vec<(f64, f64)>>,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: Option<f64>,
    pub mutation_scale: Option<f64>,
    pub elitism: usize,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 200,
            generations: 150,
            domain: None,
            tournament_size: 4,
            crossover_rate: 0.9,
            mutation_rate: None,
            mutation_scale: None,
            elitism: 2,
            seed: 0,
            restarts: 10,
        }
    }
}

/// Outcome of a search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaResult {
    /// The best coefficient vector found, wrapped as a rule with placeholder
    /// covariate names `x1..xp` (callers relabel them for real data).
    pub best_rule: LinearItr,
    /// Objective value attained by `best_rule`: the maximum over every
    /// candidate evaluated in any restart.
    pub best_value: f64,
    /// Best value seen up to and including each generation, merged across
    /// restarts. Entry 0 covers the initial populations, so the vector has
    /// `generations + 1` entries and is nondecreasing.
    pub history: Vec<f64>,
    /// Total number of objective evaluations across all restarts.
    pub evaluations: u64,
    /// The master seed the search ran under, echoed from the config.
    pub seed: u64,
}

/// Config with every optional field resolved against the problem dimension.
struct Resolved {
    dim: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    population_size: usize,
    generations: usize,
    tournament_size: usize,
    crossover_rate: f64,
    mutation_rate: f64,
    /// Per-coordinate Gaussian standard deviation.
    mutation_sd: Vec<f64>,
    elitism: usize,
    restarts: usize,
}

fn resolve(config: &GaConfig, p: usize) -> Result<Resolved> {
    let dim = p + 1;
    if config.population_size == 0 {
        return Err(Error::Invalid("population_size must be positive".into()));
    }
    if config.tournament_size == 0 || config.tournament_size > config.population_size {
        return Err(Error::Invalid(format!(
            "tournament_size must be in 1..=population_size; got {} with population {}",
            config.tournament_size, config.population_size
        )));
    }
    if config.elitism >= config.population_size {
        return Err(Error::Invalid(format!(
            "elitism ({}) must be smaller than population_size ({})",
            config.elitism, config.population_size
        )));
    }
    if config.restarts == 0 {
        return Err(Error::Invalid("restarts must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&config.crossover_rate) {
        return Err(Error::Invalid(format!(
            "crossover_rate must lie in [0, 1]; got {}",
            config.crossover_rate
        )));
    }
    let mutation_rate = match config.mutation_rate {
        Some(r) if (0.0..=1.0).contains(&r) => r,
        Some(r) => {
            return Err(Error::Invalid(format!(
                "mutation_rate must lie in [0, 1]; got {r}"
            )))
        }
        None => 1.0 / dim as f64,
    };
    let (lo, hi): (Vec<f64>, Vec<f64>) = match &config.domain {
        Some(bounds) => {
            if bounds.len() != dim {
                return Err(Error::Invalid(format!(
                    "domain has {} coordinate bounds but the problem needs {dim} \
                     ({p} covariates plus an intercept)",
                    bounds.len()
                )));
            }
            for (j, &(l, h)) in bounds.iter().enumerate() {
                if !l.is_finite() || !h.is_finite() || h <= l {
                    return Err(Error::Invalid(format!(
                        "domain bound {j} is not a finite positive-width interval: ({l}, {h})"
                    )));
                }
            }
            bounds.iter().copied().unzip()
        }
        None => (vec![-1.0; dim], vec![1.0; dim]),
    };
    let mutation_sd = match config.mutation_scale {
        Some(s) if s.is_finite() && s >= 0.0 => vec![s; dim],
        Some(s) => {
            return Err(Error::Invalid(format!(
                "mutation_scale must be a nonnegative real; got {s}"
            )))
        }
        None => lo.iter().zip(&hi).map(|(l, h)| 0.1 * (h - l)).collect(),
    };
    Ok(Resolved {
        dim,
        lo,
        hi,
        population_size: config.population_size,
        generations: config.generations,
        tournament_size: config.tournament_size,
        crossover_rate: config.crossover_rate,
        mutation_rate,
        mutation_sd,
        elitism: config.elitism,
        restarts: config.restarts,
    })
}

fn clip(v: f64, lo: f64, hi: f64) -> f64 {
    v.clamp(lo, hi)
}

/// Evaluate the objective on every candidate, in order, rejecting non-finite
/// values with the offending coefficient vector in the message.
fn evaluate_all<F>(objective: &F, population: &[Vec<f64>]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    #[cfg(feature = "parallel")]
    let values: Vec<f64> = population.par_iter().map(|eta| objective(eta)).collect();
    #[cfg(not(feature = "parallel"))]
    let values: Vec<f64> = population.iter().map(|eta| objective(eta)).collect();

    for (eta, &v) in population.iter().zip(&values) {
        if !v.is_finite() {
            return Err(Error::Numerical(format!(
                "objective returned {v} at η = {eta:?}"
            )));
        }
    }
    Ok(values)
}

/// Index of the best fitness value, lowest index on ties.
fn argmax(fitness: &[f64]) -> usize {
    let mut best = 0;
    for (i, &f) in fitness.iter().enumerate().skip(1) {
        if f > fitness[best] {
            best = i;
        }
    }
    best
}

/// Indices of the top `k` candidates by fitness, ties toward lower indices.
fn top_k(fitness: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| {
        fitness[b]
            .partial_cmp(&fitness[a])
            .expect("fitness validated finite")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

fn tournament_winner<R: Rng>(fitness: &[f64], size: usize, rng: &mut R) -> usize {
    let n = fitness.len();
    let mut best = rng.random_range(0..n);
    for _ in 1..size {
        let i = rng.random_range(0..n);
        if fitness[i] > fitness[best] || (fitness[i] == fitness[best] && i < best) {
            best = i;
        }
    }
    best
}

/// One generation step: elitism, tournament selection, blend crossover,
/// Gaussian mutation. Exposed so callers can drive custom evolution loops or
/// inspect intermediate populations.
///
/// Every child gene stays inside the configured box. With both rates zero the
/// next population is elite copies plus tournament-selected copies of current
/// candidates.
pub fn evolve_generation<R: Rng>(
    population: &[Vec<f64>],
    fitness: &[f64],
    config: &GaConfig,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if population.is_empty() {
        return Err(Error::Invalid("population is empty".into()));
    }
    let dim = population[0].len();
    if dim == 0 {
        return Err(Error::Invalid("candidates must have at least one gene".into()));
    }
    let r = resolve(config, dim - 1)?;
    if population.len() < r.elitism {
        return Err(Error::Invalid(format!(
            "population of {} cannot supply {} elites",
            population.len(),
            r.elitism
        )));
    }
    if fitness.len() != population.len() {
        return Err(Error::Invalid(format!(
            "fitness has {} entries for {} candidates",
            fitness.len(),
            population.len()
        )));
    }
    if let Some(bad) = fitness.iter().position(|f| !f.is_finite()) {
        return Err(Error::Invalid(format!(
            "fitness entry {bad} is {} — evaluate candidates before evolving",
            fitness[bad]
        )));
    }
    for (i, eta) in population.iter().enumerate() {
        if eta.len() != dim {
            return Err(Error::Invalid(format!(
                "candidate {i} has {} genes; expected {dim}",
                eta.len()
            )));
        }
    }

    let mut next: Vec<Vec<f64>> = Vec::with_capacity(population.len());
    for &i in &top_k(fitness, r.elitism) {
        next.push(population[i].clone());
    }
    while next.len() < population.len() {
        let p1 = tournament_winner(fitness, r.tournament_size, rng);
        let p2 = tournament_winner(fitness, r.tournament_size, rng);
        let mut child = if rng.random::<f64>() < r.crossover_rate {
            // Blend crossover: each gene lands uniformly on the interval the
            // parents span, widened by a quarter of their gap on both sides.
            let mut genes = Vec::with_capacity(dim);
            for j in 0..dim {
                let (a, b) = (population[p1][j], population[p2][j]);
                let (low, high) = (a.min(b), a.max(b));
                let pad = 0.25 * (high - low);
                let g = rng.random_range(low - pad..=high + pad);
                genes.push(clip(g, r.lo[j], r.hi[j]));
            }
            genes
        } else {
            population[p1].clone()
        };
        for (j, gene) in child.iter_mut().enumerate() {
            if rng.random::<f64>() < r.mutation_rate {
                let z: f64 = rng.sample(StandardNormal);
                *gene = clip(*gene + z * r.mutation_sd[j], r.lo[j], r.hi[j]);
            }
        }
        next.push(child);
    }
    Ok(next)
}

struct RestartOutcome {
    best_eta: Vec<f64>,
    best_value: f64,
    /// Best-so-far after each generation, entry 0 = initial population.
    history: Vec<f64>,
    evaluations: u64,
}

fn run_restart<F>(objective: &F, r: &Resolved, config: &GaConfig, stream: u64) -> Result<RestartOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);

    let mut population: Vec<Vec<f64>> = (0..r.population_size)
        .map(|_| {
            (0..r.dim)
                .map(|j| rng.random_range(r.lo[j]..=r.hi[j]))
                .collect()
        })
        .collect();
    let mut fitness = evaluate_all(objective, &population)?;
    let mut evaluations = population.len() as u64;

    let mut best = argmax(&fitness);
    let mut best_eta = population[best].clone();
    let mut best_value = fitness[best];
    let mut history = Vec::with_capacity(r.generations + 1);
    history.push(best_value);

    for _ in 0..r.generations {
        let next = evolve_generation(&population, &fitness, config, &mut rng)?;
        // Elites carry their fitness over; only fresh candidates get evaluated.
        let fresh = evaluate_all(objective, &next[r.elitism..])?;
        evaluations += fresh.len() as u64;
        let elite_fitness: Vec<f64> = top_k(&fitness, r.elitism)
            .iter()
            .map(|&i| fitness[i])
            .collect();
        population = next;
        fitness = elite_fitness.into_iter().chain(fresh).collect();

        best = argmax(&fitness);
        if fitness[best] > best_value {
            best_value = fitness[best];
            best_eta = population[best].clone();
        }
        history.push(best_value);
    }

    Ok(RestartOutcome {
        best_eta,
        best_value,
        history,
        evaluations,
    })
}

/// Maximize `objective` over coefficient vectors of length `p + 1`
/// (covariate weights first, intercept last) inside the configured box.
///
/// The returned rule carries placeholder covariate names `x1..xp`; rename
/// them when the coefficients belong to real columns. The objective must be
/// finite everywhere in the box; the first non-finite value aborts the search
/// naming the coefficients that produced it.
pub fn optimize_itr<F>(objective: F, p: usize, config: &GaConfig) -> Result<GaResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if p == 0 {
        return Err(Error::Invalid(
            "optimize_itr needs at least one covariate".into(),
        ));
    }
    let r = resolve(config, p)?;

    let streams: Vec<u64> = (0..r.restarts as u64).collect();
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<RestartOutcome>> = streams
        .par_iter()
        .map(|&s| run_restart(&objective, &r, config, s))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<RestartOutcome>> = streams
        .iter()
        .map(|&s| run_restart(&objective, &r, config, s))
        .collect();

    let mut best_eta: Option<Vec<f64>> = None;
    let mut best_value = f64::NEG_INFINITY;
    let mut history = vec![f64::NEG_INFINITY; r.generations + 1];
    let mut evaluations = 0u64;
    for outcome in outcomes {
        let o = outcome?;
        if o.best_value > best_value {
            best_value = o.best_value;
            best_eta = Some(o.best_eta);
        }
        for (h, &v) in history.iter_mut().zip(&o.history) {
            if v > *h {
                *h = v;
            }
        }
        evaluations += o.evaluations;
    }
    // Merged curves report the best over all restarts up to each generation,
    // which keeps the per-restart monotone curves monotone.
    for g in 1..history.len() {
        if history[g] < history[g - 1] {
            history[g] = history[g - 1];
        }
    }

    let names = (1..=p).map(|j| format!("x{j}")).collect();
    let best_rule = LinearItr::new(names, best_eta.expect("restarts >= 1"))?;
    Ok(GaResult {
        best_rule,
        best_value,
        history,
        evaluations,
        seed: config.seed,
    })
}
