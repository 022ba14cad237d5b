use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model failed validation: {}", summarize(.0))]
    Validation(Vec<Violation>),

    #[error("failed to parse model: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("vector length {got} does not match {expected} states")]
    LengthMismatch { expected: usize, got: usize },

    #[error("weighted sums were not computed from the supplied vector")]
    SumsMismatch,

    #[error("operation requires {expected} mode")]
    ModeMismatch { expected: &'static str },

    #[error("{operator} backup is not valid for {mode} models")]
    InvalidCombination {
        operator: &'static str,
        mode: &'static str,
    },

    #[error("Jacobi denominator 1 - discount * p_ii vanishes at state {state}, action {action}")]
    DegenerateDiagonal { state: usize, action: usize },

    #[error("vector is not in the feasible set (state {state} violates by {excess:e})")]
    NotFeasible { state: usize, excess: f64 },

    #[error("reward at state {state}, action {action} is negative ({reward})")]
    NegativeReward {
        state: usize,
        action: usize,
        reward: f64,
    },

    #[error("discount factor {0} must be < 1")]
    DiscountTooLarge(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible generator spec: {0}")]
    InfeasibleSpec(String),

    #[error("model has {states} states, over the dense solve budget of {budget}")]
    OverBudget { states: usize, budget: usize },

    #[error("no feasible initial point can be built: {0}")]
    NoInitialPoint(String),

    #[error("bisection bracket [{lo}, {hi}] does not contain a feasibility change")]
    NoSignChange { lo: f64, hi: f64 },
}

fn summarize(violations: &[Violation]) -> String {
    let mut parts: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
    if violations.len() > 5 {
        parts.push(format!("and {} more", violations.len() - 5));
    }
    parts.join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
