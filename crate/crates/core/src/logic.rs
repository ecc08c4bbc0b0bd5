//! Differentiable fuzzy connectives and quantifier aggregation.
//!
//! Semantics: standard negation `1 - a`, product t-norm `a * b`, Reichenbach
//! implication `1 - a + a * b`. Universal quantification and knowledge-base
//! aggregation both use the p-mean-error
//! `1 - (mean_i (1 - v_i)^p)^(1/p)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predicate outputs are clamped into `[TRUTH_EPS, 1 - TRUTH_EPS]` before
/// they enter any connective.
pub const TRUTH_EPS: f64 = 1e-7;

pub fn clamp_truth(v: f64) -> f64 {
    v.clamp(TRUTH_EPS, 1.0 - TRUTH_EPS)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub p_forall: f64,
    pub p_sat: f64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            p_forall: 2.0,
            p_sat: 2.0,
        }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_forall >= 1.0 && self.p_sat >= 1.0) {
            return Err(Error::Config(format!(
                "aggregation exponents must be >= 1 (p_forall = {}, p_sat = {})",
                self.p_forall, self.p_sat
            )));
        }
        Ok(())
    }
}

#[inline]
pub fn fz_not(a: f64) -> f64 {
    1.0 - a
}

#[inline]
pub fn fz_and(a: f64, b: f64) -> f64 {
    a * b
}

/// Partial derivatives of `fz_and` w.r.t. `(a, b)`.
#[inline]
pub fn fz_and_grad(a: f64, b: f64) -> (f64, f64) {
    (b, a)
}

#[inline]
pub fn fz_implies(a: f64, b: f64) -> f64 {
    1.0 - a + a * b
}

/// Partial derivatives of `fz_implies` w.r.t. `(a, b)`.
#[inline]
pub fn fz_implies_grad(a: f64, b: f64) -> (f64, f64) {
    (b - 1.0, a)
}

/// `1 - (mean (1 - v)^p)^(1/p)` and its gradient w.r.t. every input.
///
/// At the all-ones input the map has a kink; the returned (sub)gradient is
/// the uniform `1/n`, the derivative along the all-equal direction.
pub fn p_mean_error(values: &[f64], p: f64) -> Result<(f64, Vec<f64>)> {
    if values.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| (1.0 - v).powf(p)).sum::<f64>() / n;
    if mean <= 0.0 {
        return Ok((1.0, vec![1.0 / n; values.len()]));
    }
    let norm = mean.powf(1.0 / p);
    let scale = mean.powf(1.0 / p - 1.0) / n;
    let grads = values
        .iter()
        .map(|&v| scale * (1.0 - v).powf(p - 1.0))
        .collect();
    Ok((1.0 - norm, grads))
}

/// Universal quantifier over the instance truth values.
pub fn forall(values: &[f64], cfg: &AggregationConfig) -> Result<f64> {
    p_mean_error(values, cfg.p_forall).map(|(v, _)| v)
}

pub fn forall_grad(values: &[f64], cfg: &AggregationConfig) -> Result<(f64, Vec<f64>)> {
    p_mean_error(values, cfg.p_forall)
}

/// Aggregated satisfiability of a knowledge base; the training loss is
/// `1 - sat_agg`.
pub fn sat_agg(axiom_sats: &[f64], cfg: &AggregationConfig) -> Result<f64> {
    sat_agg_grad(axiom_sats, cfg).map(|(v, _)| v)
}

pub fn sat_agg_grad(axiom_sats: &[f64], cfg: &AggregationConfig) -> Result<(f64, Vec<f64>)> {
    p_mean_error(axiom_sats, cfg.p_sat).map_err(|_| Error::EmptyKnowledgeBase)
}

/// A propositional formula over numbered atom slots.
#[derive(Clone, Debug, PartialEq)]
pub enum Formula {
    Atom(usize),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(slot: usize) -> Formula {
        Formula::Atom(slot)
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn arity(&self) -> usize {
        match self {
            Formula::Atom(i) => i + 1,
            Formula::Not(f) => f.arity(),
            Formula::And(a, b) | Formula::Implies(a, b) => a.arity().max(b.arity()),
        }
    }

    pub fn eval(&self, atoms: &[f64]) -> f64 {
        match self {
            Formula::Atom(i) => atoms[*i],
            Formula::Not(f) => fz_not(f.eval(atoms)),
            Formula::And(a, b) => fz_and(a.eval(atoms), b.eval(atoms)),
            Formula::Implies(a, b) => fz_implies(a.eval(atoms), b.eval(atoms)),
        }
    }

    /// Adds `upstream * d(self)/d(atom_i)` into `grads[i]`.
    pub fn backprop(&self, atoms: &[f64], upstream: f64, grads: &mut [f64]) {
        match self {
            Formula::Atom(i) => grads[*i] += upstream,
            Formula::Not(f) => f.backprop(atoms, -upstream, grads),
            Formula::And(a, b) => {
                let (da, db) = fz_and_grad(a.eval(atoms), b.eval(atoms));
                a.backprop(atoms, upstream * da, grads);
                b.backprop(atoms, upstream * db, grads);
            }
            Formula::Implies(a, b) => {
                let (da, db) = fz_implies_grad(a.eval(atoms), b.eval(atoms));
                a.backprop(atoms, upstream * da, grads);
                b.backprop(atoms, upstream * db, grads);
            }
        }
    }
}
