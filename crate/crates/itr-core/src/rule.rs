//! Linear individualized treatment rules.
//!
//! A rule is a hyperplane over the covariates: treat exactly when
//! `η·[x, 1] > 0` (strictly; a unit on the boundary is sent to control).
//! Coefficients are kept on the raw covariate scale; comparisons between
//! rules should use [`LinearItr::canonical`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::CovariateSummary;
use crate::error::{Error, Result};

/// A linear treatment rule: coefficients for each covariate plus an intercept
/// stored last, so `eta.len() == covariate_names.len() + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearItr {
    pub covariate_names: Vec<String>,
    pub eta: Vec<f64>,
}

/// One entry of a covariate-importance ranking: the raw coefficient, the
/// covariate's standard deviation, and their product (the adjusted
/// coefficient the ranking sorts by).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCoefficient {
    pub name: String,
    pub coefficient: f64,
    pub sd: f64,
    pub adjusted: f64,
}

impl LinearItr {
    /// Builds a rule, checking the coefficient vector is finite, nonzero, and
    /// one entry longer than the name list.
    pub fn new(covariate_names: Vec<String>, eta: Vec<f64>) -> Result<Self> {
        let rule = LinearItr {
            covariate_names,
            eta,
        };
        rule.validate()?;
        Ok(rule)
    }

    /// Re-checks the type invariants (useful after deserializing).
    pub fn validate(&self) -> Result<()> {
        if self.eta.len() != self.covariate_names.len() + 1 {
            return Err(Error::Invalid(format!(
                "rule has {} coefficients for {} covariates; expected one \
                 coefficient per covariate plus a trailing intercept",
                self.eta.len(),
                self.covariate_names.len()
            )));
        }
        if self.eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("rule coefficients must be finite".into()));
        }
        if self.eta.iter().all(|&v| v == 0.0) {
            return Err(Error::Invalid(
                "rule coefficients are all zero; the rule decides nothing".into(),
            ));
        }
        Ok(())
    }

    /// Number of covariates.
    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    /// The intercept (last coefficient).
    pub fn intercept(&self) -> f64 {
        self.eta[self.eta.len() - 1]
    }

    /// The linear score `η·[x, 1]` for one unit.
    pub fn score(&self, covariates: &[f64]) -> Result<f64> {
        if covariates.len() != self.p() {
            return Err(Error::Invalid(format!(
                "rule over {} covariates applied to a row with {}",
                self.p(),
                covariates.len()
            )));
        }
        let mut s = self.intercept();
        for (c, x) in self.eta.iter().zip(covariates) {
            s += c * x;
        }
        Ok(s)
    }

    /// Treatment decision for one unit: treat iff the score is strictly
    /// positive; a score of exactly zero sends the unit to control.
    pub fn decide(&self, covariates: &[f64]) -> Result<bool> {
        Ok(self.score(covariates)? > 0.0)
    }

    /// Assignments (1 = treat) for every row of a covariate matrix whose
    /// columns follow `covariate_names` order.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<Vec<u8>> {
        if x.ncols() != self.p() {
            return Err(Error::Invalid(format!(
                "rule over {} covariates applied to a matrix with {} columns",
                self.p(),
                x.ncols()
            )));
        }
        let p = self.p();
        let intercept = self.intercept();
        let mut out = Vec::with_capacity(x.nrows());
        for i in 0..x.nrows() {
            let mut s = intercept;
            for j in 0..p {
                s += self.eta[j] * x[(i, j)];
            }
            out.push(u8::from(s > 0.0));
        }
        Ok(out)
    }

    /// Like [`apply`](Self::apply), but first checks that the matrix's column
    /// names match the rule's covariates in order.
    pub fn apply_named(&self, names: &[String], x: &DMatrix<f64>) -> Result<Vec<u8>> {
        if names != self.covariate_names.as_slice() {
            return Err(Error::Invalid(format!(
                "covariate order mismatch: rule expects {:?}, data provides {:?}",
                self.covariate_names, names
            )));
        }
        self.apply(x)
    }

    /// The max-norm-1 canonical form: `η / max|ηⱼ|`. Positive rescaling never
    /// changes assignments, so canonical forms compare rules fairly.
    pub fn canonical(&self) -> LinearItr {
        let m = self.eta.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        LinearItr {
            covariate_names: self.covariate_names.clone(),
            eta: self.eta.iter().map(|v| v / m).collect(),
        }
    }

    /// The sign-flipped rule, which complements every off-boundary decision.
    pub fn negated(&self) -> LinearItr {
        LinearItr {
            covariate_names: self.covariate_names.clone(),
            eta: self.eta.iter().map(|v| -v).collect(),
        }
    }

    /// Human-readable inequality, e.g. `0 < 1.5000·age − 0.2500·height + 0.1000`.
    pub fn inequality_string(&self) -> String {
        let mut s = String::from("0 <");
        let mut first = true;
        for (name, &c) in self.covariate_names.iter().zip(&self.eta) {
            push_term(&mut s, c, Some(name), &mut first);
        }
        push_term(&mut s, self.intercept(), None, &mut first);
        s
    }
}

fn push_term(s: &mut String, coefficient: f64, name: Option<&str>, first: &mut bool) {
    let magnitude = format!("{:.4}", coefficient.abs());
    if *first {
        s.push(' ');
        if coefficient < 0.0 {
            s.push('−');
        }
        *first = false;
    } else if coefficient < 0.0 {
        s.push_str(" − ");
    } else {
        s.push_str(" + ");
    }
    s.push_str(&magnitude);
    if let Some(n) = name {
        s.push('·');
        s.push_str(n);
    }
}

/// Ranks covariates by |coefficient × sd| descending (the intercept is
/// excluded). Sign is retained in both `coefficient` and `adjusted`; ties keep
/// the rule's covariate order.
pub fn covariate_importance(
    rule: &LinearItr,
    summary: &CovariateSummary,
) -> Result<Vec<RankedCoefficient>> {
    let mut out = Vec::with_capacity(rule.p());
    for (name, &coefficient) in rule.covariate_names.iter().zip(&rule.eta) {
        let j = summary.index_of(name).ok_or_else(|| {
            Error::Invalid(format!(
                "covariate {name:?} is missing from the summary used for importance"
            ))
        })?;
        let sd = summary.sd[j];
        out.push(RankedCoefficient {
            name: name.clone(),
            coefficient,
            sd,
            adjusted: coefficient * sd,
        });
    }
    out.sort_by(|a, b| {
        b.adjusted
            .abs()
            .partial_cmp(&a.adjusted.abs())
            .expect("adjusted coefficients are finite")
    });
    Ok(out)
}
