//! Bellman backups and the feasible-set predicates built on them.
//!
//! Every backup takes the max over actions of a one-step lookahead and breaks
//! ties toward the lowest action index. Gauss-Seidel style sweeps visit states
//! in stored order and read already-updated values for lower indices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sup_norm, MdpModel, Mode, Policy, ValueVector};

/// Jacobi denominators `1 - discount * p_ii` at or below this are rejected.
pub const DIAGONAL_GUARD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Standard,
    Jacobi,
    #[serde(alias = "gs")]
    GaussSeidel,
    #[serde(alias = "gsj")]
    GaussSeidelJacobi,
    #[serde(alias = "total")]
    TotalReward,
}

impl OperatorKind {
    pub const DISCOUNTED: [OperatorKind; 4] = [
        OperatorKind::Standard,
        OperatorKind::Jacobi,
        OperatorKind::GaussSeidel,
        OperatorKind::GaussSeidelJacobi,
    ];

    /// Short label used in algorithm names (`VI`, `J`, `GS`, `GSJ`, `L`).
    pub fn label(self) -> &'static str {
        match self {
            OperatorKind::Standard => "VI",
            OperatorKind::Jacobi => "J",
            OperatorKind::GaussSeidel => "GS",
            OperatorKind::GaussSeidelJacobi => "GSJ",
            OperatorKind::TotalReward => "L",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::Standard => "standard",
            OperatorKind::Jacobi => "jacobi",
            OperatorKind::GaussSeidel => "gs",
            OperatorKind::GaussSeidelJacobi => "gsj",
            OperatorKind::TotalReward => "total",
        }
    }

    pub fn is_sweep(self) -> bool {
        matches!(
            self,
            OperatorKind::GaussSeidel | OperatorKind::GaussSeidelJacobi
        )
    }

    /// Jacobi-type splittings rely on discounting and are rejected for
    /// total-reward models; the plain discounted backup is replaced by `L`.
    pub fn check_mode(self, mode: Mode) -> Result<()> {
        let ok = match (self, mode) {
            (OperatorKind::TotalReward, Mode::TotalReward) => true,
            (OperatorKind::GaussSeidel, _) => true,
            (OperatorKind::TotalReward, Mode::Discounted) => false,
            (_, Mode::Discounted) => true,
            (_, Mode::TotalReward) => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidCombination {
                operator: self.as_str(),
                mode: mode.as_str(),
            })
        }
    }

    /// The default backup for a model of the given mode.
    pub fn natural(mode: Mode) -> Self {
        match mode {
            Mode::Discounted => OperatorKind::Standard,
            Mode::TotalReward => OperatorKind::TotalReward,
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "standard" | "s" | "vi" => OperatorKind::Standard,
            "jacobi" | "j" => OperatorKind::Jacobi,
            "gs" | "gauss-seidel" | "gauss_seidel" => OperatorKind::GaussSeidel,
            "gsj" | "gauss-seidel-jacobi" | "gauss_seidel_jacobi" => {
                OperatorKind::GaussSeidelJacobi
            }
            "total" | "total-reward" | "total_reward" | "l" => OperatorKind::TotalReward,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown operator `{other}`"
                )))
            }
        })
    }
}

/// `s_i(a) = sum_j p_ij(a) v_j` for every (state, action), plus the vector it
/// was computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSums {
    values: Vec<f64>,
    source: ValueVector,
}

impl WeightedSums {
    pub fn compute(m: &MdpModel, v: &[f64]) -> Result<Self> {
        check_len(m, v)?;
        let mut values = vec![0.0; m.total_actions()];
        sums_into(m, v, &mut values);
        Ok(Self {
            values,
            source: ValueVector::from(v.to_vec()),
        })
    }

    /// Indexed by global action number.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source(&self) -> &ValueVector {
        &self.source
    }

    pub fn into_source(self) -> ValueVector {
        self.source
    }

    pub fn is_for(&self, v: &[f64]) -> bool {
        *self.source == *v
    }

    /// Sums of `alpha * source`, obtained without touching the model.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            values: self.values.iter().map(|s| alpha * s).collect(),
            source: self.source.iter().map(|x| alpha * x).collect::<Vec<_>>().into(),
        }
    }

    /// Sums of `source + alpha * (toward.source - source)`.
    pub fn extrapolated(&self, toward: &WeightedSums, alpha: f64) -> Self {
        let lerp = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + alpha * (y - x)).collect()
        };
        Self {
            values: lerp(&self.values, &toward.values),
            source: lerp(&self.source, &toward.source).into(),
        }
    }
}

pub fn weighted_sums(m: &MdpModel, v: &[f64]) -> Result<WeightedSums> {
    WeightedSums::compute(m, v)
}

pub(crate) fn sums_into(m: &MdpModel, v: &[f64], out: &mut [f64]) {
    for (a, slot) in out.iter_mut().enumerate() {
        *slot = m.row(a).dot(v);
    }
}

pub(crate) fn check_len(m: &MdpModel, v: &[f64]) -> Result<()> {
    if v.len() == m.num_states() {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            expected: m.num_states(),
            got: v.len(),
        })
    }
}

fn require_mode(m: &MdpModel, mode: Mode) -> Result<()> {
    if m.mode() == mode {
        Ok(())
    } else {
        Err(Error::ModeMismatch {
            expected: mode.as_str(),
        })
    }
}

/// Max over actions of `value(a)`, lowest index on ties.
#[inline]
fn argmax(
    actions: std::ops::Range<usize>,
    mut value: impl FnMut(usize) -> Result<f64>,
) -> Result<(f64, usize)> {
    let first = actions.start;
    let mut best = (f64::NEG_INFINITY, 0);
    for a in actions {
        let q = value(a)?;
        if q > best.0 || a == first {
            best = (q, a - first);
        }
    }
    Ok(best)
}

/// Backup from precomputed sums of `v`. Covers the standard, total-reward and
/// Jacobi forms; the sweeps cannot reuse sums.
pub(crate) fn backup_from_sums(
    m: &MdpModel,
    kind: OperatorKind,
    v: &[f64],
    sums: &[f64],
    out: &mut [f64],
    policy: &mut [usize],
) -> Result<()> {
    let lambda = m.discount();
    for i in 0..m.num_states() {
        let (best, arg) = match kind {
            OperatorKind::Standard | OperatorKind::TotalReward => {
                argmax(m.actions(i), |a| Ok(m.reward(a) + lambda * sums[a]))?
            }
            OperatorKind::Jacobi => argmax(m.actions(i), |a| {
                let pii = m.self_loop(a);
                let den = jacobi_denominator(m, i, a, lambda, pii)?;
                Ok((m.reward(a) + lambda * (sums[a] - pii * v[i])) / den)
            })?,
            _ => unreachable!("sweeps are not computed from sums"),
        };
        out[i] = best;
        policy[i] = arg;
    }
    Ok(())
}

#[inline]
fn jacobi_denominator(m: &MdpModel, state: usize, a: usize, lambda: f64, pii: f64) -> Result<f64> {
    let den = 1.0 - lambda * pii;
    if den <= DIAGONAL_GUARD {
        Err(Error::DegenerateDiagonal {
            state,
            action: a - m.actions(state).start,
        })
    } else {
        Ok(den)
    }
}

/// Backup computed straight from the rows.
pub(crate) fn backup_direct(
    m: &MdpModel,
    kind: OperatorKind,
    v: &[f64],
    out: &mut [f64],
    policy: &mut [usize],
) -> Result<()> {
    let lambda = m.discount();
    match kind {
        OperatorKind::Standard | OperatorKind::TotalReward => {
            for i in 0..m.num_states() {
                let (best, arg) =
                    argmax(m.actions(i), |a| Ok(m.reward(a) + lambda * m.row(a).dot(v)))?;
                out[i] = best;
                policy[i] = arg;
            }
        }
        OperatorKind::Jacobi => {
            for i in 0..m.num_states() {
                let (best, arg) = argmax(m.actions(i), |a| {
                    let den = jacobi_denominator(m, i, a, lambda, m.self_loop(a))?;
                    Ok((m.reward(a) + lambda * m.row(a).dot_without(v, i)) / den)
                })?;
                out[i] = best;
                policy[i] = arg;
            }
        }
        OperatorKind::GaussSeidel | OperatorKind::GaussSeidelJacobi => {
            // Lower indices of `out` already hold the new values while the
            // rest still hold `v`.
            out.copy_from_slice(v);
            let jacobi = kind == OperatorKind::GaussSeidelJacobi;
            for i in 0..m.num_states() {
                let (best, arg) = if jacobi {
                    argmax(m.actions(i), |a| {
                        let den = jacobi_denominator(m, i, a, lambda, m.self_loop(a))?;
                        Ok((m.reward(a) + lambda * m.row(a).dot_without(out, i)) / den)
                    })?
                } else {
                    argmax(m.actions(i), |a| Ok(m.reward(a) + lambda * m.row(a).dot(out)))?
                };
                out[i] = best;
                policy[i] = arg;
            }
        }
    }
    Ok(())
}

fn run_backup(m: &MdpModel, kind: OperatorKind, v: &[f64]) -> Result<(ValueVector, Policy)> {
    check_len(m, v)?;
    let n = m.num_states();
    let mut out = vec![0.0; n];
    let mut policy = vec![0; n];
    backup_direct(m, kind, v, &mut out, &mut policy)?;
    Ok((out.into(), policy.into()))
}

/// `(Tv)_i = max_a { r(i,a) + discount * s_i(a) }`.
///
/// When `sums` is supplied it must have been computed from `v`.
pub fn apply_standard(
    m: &MdpModel,
    v: &[f64],
    sums: Option<&WeightedSums>,
) -> Result<(ValueVector, Policy)> {
    require_mode(m, Mode::Discounted)?;
    check_len(m, v)?;
    match sums {
        None => run_backup(m, OperatorKind::Standard, v),
        Some(s) => {
            if !s.is_for(v) {
                return Err(Error::SumsMismatch);
            }
            let n = m.num_states();
            let mut out = vec![0.0; n];
            let mut policy = vec![0; n];
            backup_from_sums(m, OperatorKind::Standard, v, s.values(), &mut out, &mut policy)?;
            Ok((out.into(), policy.into()))
        }
    }
}

/// Jacobi backup: the self-loop term is moved to the left-hand side.
pub fn apply_jacobi(m: &MdpModel, v: &[f64]) -> Result<(ValueVector, Policy)> {
    require_mode(m, Mode::Discounted)?;
    run_backup(m, OperatorKind::Jacobi, v)
}

/// Gauss-Seidel sweep in stored state order. Valid in both modes.
pub fn apply_gauss_seidel(m: &MdpModel, v: &[f64]) -> Result<(ValueVector, Policy)> {
    run_backup(m, OperatorKind::GaussSeidel, v)
}

pub fn apply_gsj(m: &MdpModel, v: &[f64]) -> Result<(ValueVector, Policy)> {
    require_mode(m, Mode::Discounted)?;
    run_backup(m, OperatorKind::GaussSeidelJacobi, v)
}

/// `(Lv)_i = max_a { r(i,a) + sum_j p_ij(a) v_j }` for total-reward models.
pub fn apply_total_reward(m: &MdpModel, v: &[f64]) -> Result<(ValueVector, Policy)> {
    require_mode(m, Mode::TotalReward)?;
    run_backup(m, OperatorKind::TotalReward, v)
}

pub fn apply(m: &MdpModel, kind: OperatorKind, v: &[f64]) -> Result<(ValueVector, Policy)> {
    kind.check_mode(m.mode())?;
    run_backup(m, kind, v)
}

/// Scale-relative membership tolerance, `1e-9 * (1 + |v|_inf)`.
pub fn default_tolerance(v: &[f64]) -> f64 {
    1e-9 * (1.0 + sup_norm(v))
}

/// `min_i (v_i - (Xv)_i)`, or `None` if `X` cannot be applied.
pub fn feasibility_margin(m: &MdpModel, kind: OperatorKind, v: &[f64]) -> Option<f64> {
    let (xv, _) = run_backup(m, kind, v).ok()?;
    Some(
        v.iter()
            .zip(xv.iter())
            .map(|(a, b)| a - b)
            .fold(f64::INFINITY, f64::min),
    )
}

/// The model's own backup: `T` for discounted models, `L` for total reward.
fn native(m: &MdpModel) -> OperatorKind {
    OperatorKind::natural(m.mode())
}

/// `v >= Xv - tol` component-wise.
pub fn is_in_set(m: &MdpModel, kind: OperatorKind, v: &[f64], tol: f64) -> bool {
    feasibility_margin(m, kind, v).is_some_and(|g| g >= -tol)
}

/// Membership in `V = {v : v >= Tv}` (or `{v : v >= Lv}` in total-reward mode).
pub fn is_in_v(m: &MdpModel, v: &[f64], tol: f64) -> bool {
    is_in_set(m, native(m), v, tol)
}

/// Membership in `{v : v >= T_GS v}`.
pub fn is_in_v_gs(m: &MdpModel, v: &[f64], tol: f64) -> bool {
    is_in_set(m, OperatorKind::GaussSeidel, v, tol)
}

/// Strict membership: every constraint holds with slack above `tol`.
pub fn is_interior_v(m: &MdpModel, v: &[f64], tol: f64) -> bool {
    feasibility_margin(m, native(m), v).is_some_and(|g| g > tol)
}

/// `min over (i,a)` of `v_i - r(i,a) - discount * s_i(a)` and where it occurs,
/// read off cached sums of `v`.
pub(crate) fn constraint_slack(m: &MdpModel, v: &[f64], sums: &[f64]) -> (f64, usize) {
    let lambda = m.discount();
    let mut worst = (f64::INFINITY, 0);
    for (i, &vi) in v.iter().enumerate() {
        for a in m.actions(i) {
            let slack = vi - m.reward(a) - lambda * sums[a];
            if slack < worst.0 {
                worst = (slack, i);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ActionSpec;

    fn swap(lambda: f64, r: (f64, f64)) -> MdpModel {
        MdpModel::builder(Mode::Discounted, lambda)
            .state(vec![ActionSpec::new(r.0, vec![(1, 1.0)])])
            .state(vec![ActionSpec::new(r.1, vec![(0, 1.0)])])
            .build()
            .unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn weighted_sum_of_permutation_and_uniform_rows() {
        let m = swap(0.9, (1.0, 1.0));
        let s = weighted_sums(&m, &[3.0, 7.0]).unwrap();
        assert_eq!(s.values()[0], 7.0);

        let u = MdpModel::builder(Mode::Discounted, 0.9)
            .state(vec![ActionSpec::new(0.0, vec![(0, 0.5), (1, 0.5)])])
            .state(vec![ActionSpec::new(0.0, vec![(1, 1.0)])])
            .build()
            .unwrap();
        assert_eq!(weighted_sums(&u, &[2.0, 4.0]).unwrap().values()[0], 3.0);
        assert!(matches!(
            weighted_sums(&u, &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn standard_backup_on_swap_model() {
        let m = swap(0.9, (1.0, 1.0));
        let (tv, pol) = apply_standard(&m, &[20.0, 20.0], None).unwrap();
        assert!(close(&tv, &[19.0, 19.0], 1e-12));
        assert_eq!(&*pol, &[0, 0]);
        let (tv, _) = apply_standard(&m, &[10.0, 10.0], None).unwrap();
        assert!(close(&tv, &[10.0, 10.0], 1e-12));
    }

    #[test]
    fn standard_backup_checks_sums_source() {
        let m = swap(0.9, (1.0, 1.0));
        let sums = weighted_sums(&m, &[20.0, 20.0]).unwrap();
        let (tv, _) = apply_standard(&m, &[20.0, 20.0], Some(&sums)).unwrap();
        assert!(close(&tv, &[19.0, 19.0], 1e-12));
        assert!(matches!(
            apply_standard(&m, &[20.0, 21.0], Some(&sums)),
            Err(Error::SumsMismatch)
        ));
    }

    #[test]
    fn ties_go_to_lowest_action() {
        let m = MdpModel::builder(Mode::Discounted, 0.5)
            .state(vec![
                ActionSpec::new(1.0, vec![(0, 1.0)]),
                ActionSpec::new(1.0, vec![(0, 1.0)]),
                ActionSpec::new(0.5, vec![(0, 1.0)]),
            ])
            .build()
            .unwrap();
        let (_, pol) = apply_standard(&m, &[0.0], None).unwrap();
        assert_eq!(&*pol, &[0]);
    }

    #[test]
    fn jacobi_on_pure_self_loop() {
        let m = MdpModel::builder(Mode::Discounted, 0.9)
            .state(vec![ActionSpec::new(5.0, vec![(0, 1.0)])])
            .build()
            .unwrap();
        for v in [0.0, 17.0, -3.0] {
            let (tj, _) = apply_jacobi(&m, &[v]).unwrap();
            assert!((tj[0] - 50.0).abs() < 1e-12);
            let (tgsj, _) = apply_gsj(&m, &[v]).unwrap();
            assert!((tgsj[0] - 50.0).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobi_equals_standard_without_self_loops() {
        let m = swap(0.9, (1.0, 2.0));
        let v = [3.0, -4.0];
        assert_eq!(
            apply_jacobi(&m, &v).unwrap(),
            apply_standard(&m, &v, None).unwrap()
        );
        assert_eq!(apply_gsj(&m, &v).unwrap(), apply_gauss_seidel(&m, &v).unwrap());
    }

    #[test]
    fn gauss_seidel_uses_updated_values() {
        let m = swap(0.9, (1.0, 1.0));
        let (u, _) = apply_gauss_seidel(&m, &[20.0, 20.0]).unwrap();
        assert!(close(&u, &[19.0, 18.1], 1e-12));
    }

    #[test]
    fn degenerate_diagonal_is_rejected() {
        // discount 1 is only reachable through an unchecked model
        let m = MdpModel::builder(Mode::Discounted, 1.0)
            .state(vec![ActionSpec::new(1.0, vec![(0, 1.0)])])
            .build_unchecked();
        assert!(matches!(
            apply_jacobi(&m, &[0.0]),
            Err(Error::DegenerateDiagonal { state: 0, action: 0 })
        ));
    }

    #[test]
    fn total_reward_backup() {
        let m = MdpModel::builder(Mode::TotalReward, 1.0)
            .state(vec![ActionSpec::new(3.0, vec![(1, 1.0)])])
            .state(vec![ActionSpec::new(0.0, vec![(1, 1.0)])])
            .build()
            .unwrap();
        let (lv, _) = apply_total_reward(&m, &[0.0, 0.0]).unwrap();
        assert_eq!(&*lv, &[3.0, 0.0]);
        let (lv, _) = apply_total_reward(&m, &[1.0, 4.0]).unwrap();
        assert_eq!(lv[1], 4.0);
        assert!(apply_standard(&m, &[0.0, 0.0], None).is_err());
        assert!(apply_jacobi(&m, &[0.0, 0.0]).is_err());
        assert!(apply_gsj(&m, &[0.0, 0.0]).is_err());
        assert!(apply_gauss_seidel(&m, &[0.0, 0.0]).is_ok());
    }

    #[test]
    fn gauss_seidel_feasible_set_is_strictly_larger() {
        let m = swap(0.9, (1.0, 1.0));
        let v = [100.0, 10.0];
        let tol = default_tolerance(&v);
        assert!(!is_in_v(&m, &v, tol));
        assert!(is_in_v_gs(&m, &v, tol));
    }

    #[test]
    fn fixed_point_is_on_the_boundary() {
        let m = swap(0.9, (1.0, 1.0));
        let v = [10.0, 10.0];
        let tol = default_tolerance(&v);
        assert!(is_in_v(&m, &v, tol));
        assert!(!is_interior_v(&m, &v, tol));
    }

    #[test]
    fn operator_mode_rules() {
        use OperatorKind::*;
        for k in [Standard, Jacobi, GaussSeidel, GaussSeidelJacobi] {
            assert!(k.check_mode(Mode::Discounted).is_ok());
        }
        assert!(TotalReward.check_mode(Mode::Discounted).is_err());
        assert!(TotalReward.check_mode(Mode::TotalReward).is_ok());
        assert!(GaussSeidel.check_mode(Mode::TotalReward).is_ok());
        for k in [Standard, Jacobi, GaussSeidelJacobi] {
            assert!(k.check_mode(Mode::TotalReward).is_err());
        }
        assert_eq!("gsj".parse::<OperatorKind>().unwrap(), GaussSeidelJacobi);
        assert!("bogus".parse::<OperatorKind>().is_err());
    }

    #[test]
    fn affine_sums_match_recomputation() {
        let m = MdpModel::builder(Mode::Discounted, 0.9)
            .state(vec![ActionSpec::new(1.0, vec![(0, 0.3), (1, 0.7)])])
            .state(vec![
                ActionSpec::new(2.0, vec![(0, 1.0)]),
                ActionSpec::new(0.5, vec![(0, 0.5), (1, 0.5)]),
            ])
            .build()
            .unwrap();
        let v = weighted_sums(&m, &[4.0, 9.0]).unwrap();
        let u = weighted_sums(&m, &[3.0, 5.0]).unwrap();
        let scaled = u.scaled(0.37);
        let fresh = weighted_sums(&m, scaled.source()).unwrap();
        assert!(close(scaled.values(), fresh.values(), 1e-12));
        let ext = v.extrapolated(&u, 3.5);
        let fresh = weighted_sums(&m, ext.source()).unwrap();
        assert!(close(ext.values(), fresh.values(), 1e-12));
    }
}
