//! Projective and Linear Extension acceleration operators.
//!
//! Both operators are one-dimensional LPs over the constraints
//! `v_i >= r(i,a) + discount * sum_j p_ij(a) v_j`. Along a fixed direction each
//! constraint is affine in the step, so the optimum is an extreme ratio over
//! the (state, action) pairs and needs no LP solver:
//!
//! * Projective, `Z v = alpha v`: constraint `alpha * q_i(a) >= r(i,a)` with
//!   `q_i(a) = v_i - discount * s_i(a)`. Minimizing `alpha * sum(v)` for
//!   `sum(v) >= 0` picks the largest ratio `r / q`.
//! * Linear Extension, `Z v = v + alpha (u - v)`: constraint
//!   `c_i(a) + alpha * d_i(a) >= 0` with slack `c` at `v` and rate `d` along
//!   `u - v`. The objective decreases in `alpha`, so the answer is the smallest
//!   `c / -d` over constraints that tighten (`d < 0`).
//!
//! The ratio scans read cached weighted sums, so they cost one pass over the
//! action list and no row products.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sup_distance, sup_norm, MdpModel, ValueVector};
use crate::operators::{constraint_slack, default_tolerance, is_in_v, WeightedSums};

/// Largest step the Linear Extension scan reports when no constraint binds.
pub const LINEAR_EXTENSION_CAP: f64 = 1e12;

/// Clamps below this distance from the admissible range are rounding, not
/// fallbacks.
const CLAMP_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceleratorKind {
    #[default]
    None,
    Projective,
    #[serde(alias = "linear")]
    LinearExtension,
}

impl AcceleratorKind {
    pub const ALL: [AcceleratorKind; 3] = [
        AcceleratorKind::None,
        AcceleratorKind::Projective,
        AcceleratorKind::LinearExtension,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AcceleratorKind::None => "none",
            AcceleratorKind::Projective => "projective",
            AcceleratorKind::LinearExtension => "linear",
        }
    }

    /// Prefix in the algorithm naming scheme (`PA`, `LA`, or nothing).
    pub fn prefix(self) -> &'static str {
        match self {
            AcceleratorKind::None => "",
            AcceleratorKind::Projective => "PA",
            AcceleratorKind::LinearExtension => "LA",
        }
    }
}

impl fmt::Display for AcceleratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AcceleratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "none" | "off" => AcceleratorKind::None,
            "projective" | "p" | "pavi" => AcceleratorKind::Projective,
            "linear" | "linear-extension" | "linear_extension" | "l" | "lavi" => {
                AcceleratorKind::LinearExtension
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown accelerator `{other}`"
                )))
            }
        })
    }
}

/// Outcome of a ratio scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaResult {
    pub alpha: f64,
    /// `(state, local action)` of the constraint that fixed `alpha`.
    pub binding: Option<(usize, usize)>,
    pub fallback_used: bool,
}

impl AlphaResult {
    fn identity() -> Self {
        Self {
            alpha: 1.0,
            binding: None,
            fallback_used: true,
        }
    }
}

/// Linear Extension scan result: either a step or the signal that `u == v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Extension {
    Converged,
    Step(AlphaResult),
}

/// Degenerate-denominator threshold, `1e-12 * (1 + |v|_inf)`.
pub fn ratio_threshold(v: &[f64]) -> f64 {
    1e-12 * (1.0 + sup_norm(v))
}

fn check_feasible(m: &MdpModel, v: &[f64], sums: &[f64]) -> Result<()> {
    let (slack, state) = constraint_slack(m, v, sums);
    if slack < -default_tolerance(v) {
        Err(Error::NotFeasible {
            state,
            excess: -slack,
        })
    } else {
        Ok(())
    }
}

fn check_rewards(m: &MdpModel) -> Result<()> {
    match m.negative_reward() {
        Some((state, action, reward)) => Err(Error::NegativeReward {
            state,
            action,
            reward,
        }),
        None => Ok(()),
    }
}

fn check_sums(sums: &WeightedSums, v: &[f64]) -> Result<()> {
    if sums.is_for(v) {
        Ok(())
    } else {
        Err(Error::SumsMismatch)
    }
}

/// Closed-form optimum of `min { alpha sum(v) : T(alpha v) <= alpha v }`.
pub fn projective_alpha(m: &MdpModel, v: &[f64], sums: &WeightedSums) -> Result<AlphaResult> {
    check_sums(sums, v)?;
    check_rewards(m)?;
    check_feasible(m, v, sums.values())?;
    Ok(projective_scan(m, v, sums.values()))
}

pub(crate) fn projective_scan(m: &MdpModel, v: &[f64], sums: &[f64]) -> AlphaResult {
    let lambda = m.discount();
    let tau = ratio_threshold(v);
    let mut best = AlphaResult {
        alpha: 0.0,
        binding: None,
        fallback_used: false,
    };
    for (i, &vi) in v.iter().enumerate() {
        let first = m.actions(i).start;
        for a in m.actions(i) {
            let r = m.reward(a);
            let q = vi - lambda * sums[a];
            if q > tau {
                let ratio = r / q;
                if ratio > best.alpha {
                    best.alpha = ratio;
                    best.binding = Some((i, a - first));
                }
            } else if r > tau {
                // alpha * q >= r has no solution: v is on or outside the
                // boundary in a way the scale cannot repair.
                return AlphaResult {
                    binding: Some((i, a - first)),
                    ..AlphaResult::identity()
                };
            }
        }
    }
    if best.alpha > 1.0 {
        best.fallback_used = best.alpha > 1.0 + CLAMP_SLACK;
        best.alpha = 1.0;
    }
    best
}

/// `Z v = alpha* v`, checked against the feasible set. A failed check falls
/// back to the identity.
pub fn apply_projective(
    m: &MdpModel,
    v: &[f64],
    sums: &WeightedSums,
) -> Result<(ValueVector, AlphaResult)> {
    let mut res = projective_alpha(m, v, sums)?;
    let z: ValueVector = v.iter().map(|x| res.alpha * x).collect::<Vec<_>>().into();
    if accepted(m, v, &z) {
        Ok((z, res))
    } else {
        res.alpha = 1.0;
        res.fallback_used = true;
        Ok((ValueVector::from(v.to_vec()), res))
    }
}

/// Conditions (A) and (B): `z` is feasible and no larger than `v`.
fn accepted(m: &MdpModel, v: &[f64], z: &[f64]) -> bool {
    let tol = default_tolerance(v);
    z.iter().zip(v).all(|(a, b)| *a <= b + tol) && is_in_v(m, z, default_tolerance(z))
}

/// Closed-form optimum of
/// `min { sum(v) + alpha sum(u - v) : T(v + alpha (u - v)) <= v + alpha (u - v) }`.
///
/// `u` is normally `Tv`; any feasible `u <= v` (a splitting backup, for
/// instance) gives a valid improving direction.
pub fn linear_extension_alpha(
    m: &MdpModel,
    v: &[f64],
    u: &[f64],
    sums_v: &WeightedSums,
    sums_u: &WeightedSums,
) -> Result<Extension> {
    check_sums(sums_v, v)?;
    check_sums(sums_u, u)?;
    check_feasible(m, v, sums_v.values())?;
    check_feasible(m, u, sums_u.values())?;
    let tol = default_tolerance(v);
    if let Some((state, (a, b))) = u.iter().zip(v).enumerate().find(|(_, (a, b))| **a > **b + tol) {
        return Err(Error::InvalidParameter(format!(
            "direction is not improving at state {state}: u = {a}, v = {b}"
        )));
    }
    Ok(extension_scan(m, v, u, sums_v.values(), sums_u.values()))
}

pub(crate) fn extension_scan(
    m: &MdpModel,
    v: &[f64],
    u: &[f64],
    sums_v: &[f64],
    sums_u: &[f64],
) -> Extension {
    let tau = ratio_threshold(v);
    if sup_distance(u, v) <= tau {
        return Extension::Converged;
    }
    let lambda = m.discount();
    let mut alpha = f64::INFINITY;
    let mut binding = None;
    for i in 0..m.num_states() {
        let first = m.actions(i).start;
        let step = u[i] - v[i];
        for a in m.actions(i) {
            let d = step - lambda * (sums_u[a] - sums_v[a]);
            if d < -tau {
                let c = v[i] - m.reward(a) - lambda * sums_v[a];
                let ratio = c / -d;
                if ratio < alpha {
                    alpha = ratio;
                    binding = Some((i, a - first));
                }
            }
        }
    }
    if binding.is_none() {
        return Extension::Step(AlphaResult {
            alpha: LINEAR_EXTENSION_CAP,
            binding: None,
            fallback_used: true,
        });
    }
    let mut fallback_used = false;
    if alpha < 1.0 {
        fallback_used = alpha < 1.0 - CLAMP_SLACK;
        alpha = 1.0;
    }
    Extension::Step(AlphaResult {
        alpha: alpha.min(LINEAR_EXTENSION_CAP),
        binding,
        fallback_used,
    })
}

/// `Z v = v + alpha* (u - v)`. Returns `u` itself when the scan reports
/// convergence, and falls back to `u` (`alpha = 1`) when the extended point
/// fails the feasibility re-check.
pub fn apply_linear_extension(
    m: &MdpModel,
    v: &[f64],
    u: &[f64],
    sums_v: &WeightedSums,
    sums_u: &WeightedSums,
) -> Result<(ValueVector, Extension)> {
    match linear_extension_alpha(m, v, u, sums_v, sums_u)? {
        Extension::Converged => Ok((ValueVector::from(u.to_vec()), Extension::Converged)),
        Extension::Step(mut res) => {
            let z = extend(v, u, res.alpha);
            if accepted(m, v, &z) {
                Ok((z, Extension::Step(res)))
            } else {
                res.alpha = 1.0;
                res.fallback_used = true;
                Ok((ValueVector::from(u.to_vec()), Extension::Step(res)))
            }
        }
    }
}

pub(crate) fn extend(v: &[f64], u: &[f64], alpha: f64) -> ValueVector {
    v.iter()
        .zip(u)
        .map(|(a, b)| a + alpha * (b - a))
        .collect::<Vec<_>>()
        .into()
}

pub fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "beta must lie in [0, 1), got {beta}"
        )))
    }
}

/// `(1 - beta) z + beta v`: pulls an accelerated point `z` back toward `v` so
/// the next backup starts strictly inside the feasible set. Falls back to `z`
/// if the blend fails the membership check.
pub fn apply_beta_variant(m: &MdpModel, v: &[f64], z: &[f64], beta: f64) -> Result<ValueVector> {
    check_beta(beta)?;
    if beta == 0.0 {
        return Ok(ValueVector::from(z.to_vec()));
    }
    let blended: ValueVector = z
        .iter()
        .zip(v)
        .map(|(a, b)| (1.0 - beta) * a + beta * b)
        .collect::<Vec<_>>()
        .into();
    if is_in_v(m, &blended, default_tolerance(&blended)) {
        Ok(blended)
    } else {
        Ok(ValueVector::from(z.to_vec()))
    }
}
