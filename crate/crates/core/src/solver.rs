//! Value iteration with optional acceleration.
//!
//! Each iteration performs one backup `u = X w` with the configured operator,
//! tests `|u - w|_inf` against the stopping threshold, and otherwise moves to
//! `Z u` (Projective) or `w + alpha (u - w)` (Linear Extension). With no
//! accelerator this is plain VI / Jacobi / Gauss-Seidel / GSJ.
//!
//! The weighted sums `sum_j p_ij(a) w_j` of the current iterate are carried
//! between iterations. Both accelerators produce an affine image of vectors
//! whose sums are already known, so an accelerated iteration costs one fresh
//! row pass (the sums of `u`) on top of the backup itself, and the
//! standard and Jacobi backups read the carried sums instead of the rows.

use std::time::{Duration, Instant};

use crate::accelerators::{
    check_beta, extension_scan, projective_scan, AcceleratorKind, AlphaResult, Extension,
};
use crate::error::{Error, Result};
use crate::model::{sup_distance, MdpModel, Mode, Policy, ValueVector};
use crate::operators::{
    backup_direct, backup_from_sums, check_len, constraint_slack, default_tolerance,
    OperatorKind, WeightedSums,
};

pub const DEFAULT_MAX_ITERATIONS: usize = 200_000;
pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Clone, Debug, Default, PartialEq)]
pub enum InitialPoint {
    /// `max r / (1 - discount)` in every coordinate (rewards are shifted first
    /// if any is negative); for total-reward models see
    /// [`MdpModel::total_reward_feasible_point`].
    #[default]
    Auto,
    Given(ValueVector),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub operator: OperatorKind,
    pub accelerator: AcceleratorKind,
    /// Interior pull-back factor in `[0, 1)`; 0 disables it.
    pub beta: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Re-check every accelerated iterate against the feasible set and fall
    /// back to the plain backup on failure. Costs one extra row pass.
    pub membership_checks: bool,
    pub initial_point: InitialPoint,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            operator: OperatorKind::Standard,
            accelerator: AcceleratorKind::None,
            beta: 0.0,
            epsilon: DEFAULT_EPSILON,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            membership_checks: true,
            initial_point: InitialPoint::Auto,
        }
    }
}

impl SolverConfig {
    pub fn new(operator: OperatorKind, accelerator: AcceleratorKind) -> Self {
        Self {
            operator,
            accelerator,
            ..Self::default()
        }
    }

    pub fn epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn membership_checks(mut self, on: bool) -> Self {
        self.membership_checks = on;
        self
    }

    pub fn start_from(mut self, v: ValueVector) -> Self {
        self.initial_point = InitialPoint::Given(v);
        self
    }

    pub fn algorithm(&self) -> String {
        algorithm_name(self.operator, self.accelerator)
    }

    pub fn validate_for(&self, m: &MdpModel) -> Result<()> {
        self.operator.check_mode(m.mode())?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "max_iterations must be at least 1".into(),
            ));
        }
        check_beta(self.beta)?;
        Ok(())
    }
}

/// Name in the `XAY` scheme: `VI`, `J`, `GS`, `GSJ` unaccelerated, otherwise
/// prefixed with `PA` or `LA` (`PAVI`, `LAGS`, ...).
pub fn algorithm_name(operator: OperatorKind, accelerator: AcceleratorKind) -> String {
    format!("{}{}", accelerator.prefix(), operator.label())
}

/// `epsilon (1 - discount) / (2 discount)` for discounted models, `epsilon`
/// for total-reward models.
pub fn stopping_threshold(m: &MdpModel, epsilon: f64) -> f64 {
    match m.mode() {
        Mode::TotalReward => epsilon,
        Mode::Discounted => {
            let lambda = m.discount();
            if lambda == 0.0 {
                f64::INFINITY
            } else {
                epsilon * (1.0 - lambda) / (2.0 * lambda)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct IterationReport {
    pub algorithm: String,
    /// Number of backups performed.
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: Duration,
    /// `|X w^n - w^n|_inf` per iteration.
    pub residuals: Vec<f64>,
    /// Applied step per accelerated iteration (empty without an accelerator).
    pub alphas: Vec<f64>,
    /// The last backup, shifted back if rewards were adjusted.
    pub final_value: ValueVector,
    pub final_policy: Policy,
    pub fallback_count: usize,
    /// Reward shift applied by the automatic start (0 if none).
    pub reward_offset: f64,
    pub threshold: f64,
}

impl IterationReport {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::NAN)
    }

    pub fn wall_ms(&self) -> f64 {
        self.wall_time.as_secs_f64() * 1e3
    }
}

/// Everything one iteration needs. Carries the weighted sums of the current
/// iterate when the step kind uses them.
#[derive(Clone, Debug)]
pub struct SolverState {
    operator: OperatorKind,
    accelerator: AcceleratorKind,
    beta: f64,
    checks: bool,
    threshold: f64,
    iterate: ValueVector,
    sums: Option<WeightedSums>,
    iteration: usize,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub residual: f64,
    pub backup: ValueVector,
    pub policy: Policy,
    pub alpha: Option<AlphaResult>,
    pub fell_back: bool,
    pub converged: bool,
}

impl SolverState {
    /// `start` must lie in the feasible set when an accelerator is used.
    pub fn new(m: &MdpModel, cfg: &SolverConfig, start: ValueVector) -> Result<Self> {
        cfg.validate_for(m)?;
        check_len(m, &start)?;
        let positive_needed = cfg.accelerator == AcceleratorKind::Projective
            || (m.mode() == Mode::TotalReward && cfg.accelerator != AcceleratorKind::None);
        if positive_needed {
            if let Some((state, action, reward)) = m.negative_reward() {
                return Err(Error::NegativeReward {
                    state,
                    action,
                    reward,
                });
            }
        }
        if !start.is_finite() {
            return Err(Error::InvalidParameter("initial point is not finite".into()));
        }
        let mut state = Self {
            operator: cfg.operator,
            accelerator: cfg.accelerator,
            beta: cfg.beta,
            checks: cfg.membership_checks,
            threshold: stopping_threshold(m, cfg.epsilon),
            iterate: start,
            sums: None,
            iteration: 0,
        };
        if state.needs_sums() {
            let sums = WeightedSums::compute(m, &state.iterate)?;
            if state.accelerator != AcceleratorKind::None {
                let (slack, at) = constraint_slack(m, &state.iterate, sums.values());
                if slack < -default_tolerance(&state.iterate) {
                    return Err(Error::NotFeasible {
                        state: at,
                        excess: -slack,
                    });
                }
            }
            state.sums = Some(sums);
        }
        Ok(state)
    }

    pub fn iterate(&self) -> &ValueVector {
        &self.iterate
    }

    pub fn sums(&self) -> Option<&WeightedSums> {
        self.sums.as_ref()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn needs_sums(&self) -> bool {
        !self.operator.is_sweep() || self.accelerator != AcceleratorKind::None
    }

    /// One iteration reusing the carried sums.
    pub fn step_cached(&mut self, m: &MdpModel) -> Result<StepOutcome> {
        self.step(m, true)
    }

    /// One iteration recomputing every weighted sum from the rows.
    pub fn step_uncached(&mut self, m: &MdpModel) -> Result<StepOutcome> {
        self.step(m, false)
    }

    fn step(&mut self, m: &MdpModel, cached: bool) -> Result<StepOutcome> {
        let n = m.num_states();
        if self.needs_sums() {
            match &self.sums {
                Some(s) if cached => {
                    if !s.is_for(&self.iterate) {
                        return Err(Error::SumsMismatch);
                    }
                }
                _ => self.sums = Some(WeightedSums::compute(m, &self.iterate)?),
            }
        }

        let mut u = vec![0.0; n];
        let mut policy = vec![0; n];
        match &self.sums {
            Some(s) if !self.operator.is_sweep() => {
                backup_from_sums(m, self.operator, &self.iterate, s.values(), &mut u, &mut policy)?
            }
            _ => backup_direct(m, self.operator, &self.iterate, &mut u, &mut policy)?,
        }
        let u = ValueVector::from(u);
        let policy = Policy::from(policy);
        let residual = sup_distance(&u, &self.iterate);
        self.iteration += 1;

        let mut outcome = StepOutcome {
            residual,
            backup: u,
            policy,
            alpha: None,
            fell_back: false,
            converged: residual <= self.threshold,
        };
        if outcome.converged {
            return Ok(outcome);
        }

        let u = &outcome.backup;
        if self.accelerator == AcceleratorKind::None {
            self.sums = if self.needs_sums() && cached {
                Some(WeightedSums::compute(m, u)?)
            } else {
                None
            };
            self.iterate = u.clone();
            return Ok(outcome);
        }

        let sums_u = WeightedSums::compute(m, u)?;
        let mut force_check = false;
        let mut next = match self.accelerator {
            AcceleratorKind::Projective => {
                let res = projective_scan(m, u, sums_u.values());
                outcome.alpha = Some(res);
                sums_u.scaled(res.alpha)
            }
            AcceleratorKind::LinearExtension => {
                let sums_w = self.sums.as_ref().expect("accelerated state carries sums");
                match extension_scan(m, &self.iterate, u, sums_w.values(), sums_u.values()) {
                    Extension::Converged => sums_u.clone(),
                    Extension::Step(res) => {
                        outcome.alpha = Some(res);
                        force_check = res.binding.is_none();
                        sums_w.extrapolated(&sums_u, res.alpha)
                    }
                }
            }
            AcceleratorKind::None => unreachable!(),
        };
        if let Some(res) = outcome.alpha {
            outcome.fell_back = res.fallback_used;
        }
        if self.beta > 0.0 {
            next = next.extrapolated(&sums_u, self.beta);
        }

        if self.checks || force_check {
            let fresh = WeightedSums::compute(m, next.source())?;
            let z = fresh.source();
            let tol = default_tolerance(u);
            let below = z.iter().zip(u.iter()).all(|(a, b)| *a <= b + tol);
            let (slack, _) = constraint_slack(m, z, fresh.values());
            if below && slack >= -default_tolerance(z) {
                next = fresh;
            } else {
                outcome.fell_back = true;
                if let Some(res) = outcome.alpha.as_mut() {
                    res.alpha = 1.0;
                    res.fallback_used = true;
                }
                next = sums_u;
            }
        }

        self.iterate = next.source().clone();
        self.sums = if cached { Some(next) } else { None };
        Ok(outcome)
    }
}

/// Starting point and reward shift for a run. Returns the model actually
/// iterated on when rewards had to be shifted.
fn prepare(m: &MdpModel, cfg: &SolverConfig) -> Result<(Option<MdpModel>, ValueVector, f64)> {
    match (&cfg.initial_point, m.mode()) {
        (InitialPoint::Given(v), _) => Ok((None, v.clone(), 0.0)),
        (InitialPoint::Auto, Mode::TotalReward) => {
            Ok((None, m.total_reward_feasible_point()?, 0.0))
        }
        (InitialPoint::Auto, Mode::Discounted) => {
            if m.negative_reward().is_some() {
                let (shifted, offset) = m.adjust_rewards_nonnegative()?;
                let start = shifted.initial_feasible_point()?;
                Ok((Some(shifted), start, offset))
            } else {
                Ok((None, m.initial_feasible_point()?, 0.0))
            }
        }
    }
}

pub fn run(m: &MdpModel, cfg: &SolverConfig) -> Result<IterationReport> {
    run_observed(m, cfg, |_, _| {})
}

/// Like [`run`], calling `observe(n, w^n)` on every iterate before its backup
/// (in the shifted coordinates if rewards were adjusted).
pub fn run_observed(
    m: &MdpModel,
    cfg: &SolverConfig,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<IterationReport> {
    let violations = m.validate();
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    cfg.validate_for(m)?;
    let (shifted, start, offset) = prepare(m, cfg)?;
    let model = shifted.as_ref().unwrap_or(m);

    let clock = Instant::now();
    let mut state = SolverState::new(model, cfg, start)?;
    let mut residuals = Vec::new();
    let mut alphas = Vec::new();
    let mut fallback_count = 0;
    let mut last = None;
    let mut converged = false;
    while state.iteration() < cfg.max_iterations {
        observe(state.iteration(), state.iterate());
        let out = state.step_cached(model)?;
        residuals.push(out.residual);
        if let Some(a) = out.alpha {
            alphas.push(a.alpha);
        }
        if out.fell_back {
            fallback_count += 1;
        }
        converged = out.converged;
        last = Some((out.backup, out.policy));
        if converged {
            break;
        }
    }
    let wall_time = clock.elapsed();

    let (mut value, policy) = last.expect("at least one iteration runs");
    if offset != 0.0 {
        let shift = offset / (1.0 - m.discount());
        for x in value.iter_mut() {
            *x -= shift;
        }
    }
    Ok(IterationReport {
        algorithm: cfg.algorithm(),
        iterations: residuals.len(),
        converged,
        wall_time,
        residuals,
        alphas,
        final_value: value,
        final_policy: policy,
        fallback_count,
        reward_offset: offset,
        threshold: stopping_threshold(m, cfg.epsilon),
    })
}

/// Greedy policy of one backup at `v` (the model's own operator).
pub fn extract_policy(m: &MdpModel, v: &[f64]) -> Result<Policy> {
    let (_, policy) = crate::operators::apply(m, OperatorKind::natural(m.mode()), v)?;
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ActionSpec;

    fn swap(r: (f64, f64)) -> MdpModel {
        MdpModel::builder(Mode::Discounted, 0.9)
            .state(vec![ActionSpec::new(r.0, vec![(1, 1.0)])])
            .state(vec![ActionSpec::new(r.1, vec![(0, 1.0)])])
            .build()
            .unwrap()
    }

    #[test]
    fn threshold_formula() {
        let m = swap((1.0, 1.0));
        let t = stopping_threshold(&m, 1e-3);
        assert!((t - 1e-3 * 0.1 / 1.8).abs() < 1e-18);
        assert!((t - 5.5556e-5).abs() < 1e-9);
    }

    #[test]
    fn projective_finishes_in_two_backups() {
        let m = swap((1.0, 1.0));
        let cfg = SolverConfig::new(OperatorKind::Standard, AcceleratorKind::Projective)
            .start_from(vec![20.0, 20.0].into());
        let rep = run(&m, &cfg).unwrap();
        assert!(rep.converged);
        assert!(rep.iterations <= 2, "{}", rep.iterations);
        assert!(rep.final_value.sup_distance(&[10.0, 10.0]) < 1e-12);
        assert_eq!(rep.algorithm, "PAVI");
    }

    #[test]
    fn auto_start_handles_negative_rewards() {
        let m = swap((-3.0, 5.0));
        // v1 = -3 + 0.9 v2, v2 = 5 + 0.9 v1  =>  v1 = 1.5 / 0.19, v2 = 2.3 / 0.19
        let exact = [1.5 / 0.19, 2.3 / 0.19];
        for accel in AcceleratorKind::ALL {
            let rep = run(
                &m,
                &SolverConfig::new(OperatorKind::Standard, accel).epsilon(1e-10),
            )
            .unwrap();
            assert_eq!(rep.reward_offset, 5.0);
            assert!(rep.final_value.sup_distance(&exact) < 1e-8, "{accel}: {:?}", rep.final_value);
        }
    }

    #[test]
    fn policy_extraction_single_action() {
        let m = swap((1.0, 1.0));
        assert_eq!(&*extract_policy(&m, &[10.0, 10.0]).unwrap(), &[0, 0]);
    }

    #[test]
    fn rejects_bad_configs() {
        let tr = MdpModel::builder(Mode::TotalReward, 1.0)
            .state(vec![ActionSpec::new(1.0, vec![(0, 0.5), (1, 0.5)])])
            .state(vec![ActionSpec::new(0.0, vec![(1, 1.0)])])
            .build()
            .unwrap();
        for op in [OperatorKind::Jacobi, OperatorKind::GaussSeidelJacobi, OperatorKind::Standard] {
            assert!(matches!(
                run(&tr, &SolverConfig::new(op, AcceleratorKind::None)),
                Err(Error::InvalidCombination { .. })
            ));
        }
        let m = swap((1.0, 1.0));
        assert!(run(&m, &SolverConfig::default().epsilon(0.0)).is_err());
        assert!(run(&m, &SolverConfig::default().beta(1.0)).is_err());
        let outside = SolverConfig::new(OperatorKind::Standard, AcceleratorKind::LinearExtension)
            .start_from(vec![0.0, 0.0].into());
        assert!(matches!(run(&m, &outside), Err(Error::NotFeasible { .. })));
    }

    #[test]
    fn iteration_cap_is_reported() {
        let m = swap((1.0, 2.0));
        let rep = run(&m, &SolverConfig::default().max_iterations(3)).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
    }

    #[test]
    fn total_reward_chain() {
        // 0 -> 1 -> 2 (absorbing), rewards 3 and 4: v* = (7, 4, 0)
        let m = MdpModel::builder(Mode::TotalReward, 1.0)
            .state(vec![ActionSpec::new(3.0, vec![(1, 0.5), (2, 0.5)])])
            .state(vec![ActionSpec::new(4.0, vec![(0, 0.5), (2, 0.5)])])
            .state(vec![ActionSpec::new(0.0, vec![(2, 1.0)])])
            .build()
            .unwrap();
        // v0 = 3 + v1/2, v1 = 4 + v0/2  =>  v0 = 20/3, v1 = 22/3
        let exact = [20.0 / 3.0, 22.0 / 3.0, 0.0];
        for accel in AcceleratorKind::ALL {
            for op in [OperatorKind::TotalReward, OperatorKind::GaussSeidel] {
                let rep = run(&m, &SolverConfig::new(op, accel).epsilon(1e-10)).unwrap();
                assert!(rep.converged);
                assert!(rep.final_value.sup_distance(&exact) < 1e-8, "{op} {accel}");
            }
        }
    }
}
