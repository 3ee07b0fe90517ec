//! Transfer learning for individualized treatment rules.
//!
//! This crate estimates linear treatment rules for a *target* population
//! using treatment/outcome data observed only on a *source* population whose
//! covariate mix differs. The pieces, in pipeline order:
//!
//! - [`data`] — typed patient records, CSV ingestion, validation;
//! - [`glm`] — the two nuisance models: logistic propensity scores and
//!   linear outcome regression;
//! - [`calibration`] — entropy-balancing weights that re-align source
//!   covariate moments with the target;
//! - [`ate`] — naive / inverse-probability / outcome-regression / doubly
//!   robust average treatment effect estimators;
//! - [`rule`] — linear treatment rules (`treat iff η·[x,1] > 0`), their
//!   serialization and covariate-importance ranking;
//! - [`value`] — the calibration-weighted doubly robust estimate of a rule's
//!   mean outcome, the single objective the optimizer maximizes;
//! - [`ga`] — a seeded real-coded genetic algorithm over rule coefficients;
//! - [`sim`] — a two-covariate synthetic study with known ground truth for
//!   end-to-end evaluation;
//! - [`pipeline`] — glue running the whole thing on a pair of datasets.

pub mod ate;
pub mod calibration;
pub mod data;
pub mod error;
pub mod ga;
pub mod glm;
pub mod pipeline;
pub mod rule;
pub mod sim;
pub mod value;

pub use error::{Error, Result};
