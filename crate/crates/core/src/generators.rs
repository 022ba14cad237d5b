//! Seeded random model families.
//!
//! All families draw from `ChaCha8Rng::seed_from_u64(seed)` in a fixed order
//! (state by state, action by action: action count, reward, columns,
//! weights), so a spec reproduces the same model bit for bit. The spec and
//! the RNG name are stored in the model metadata.

use rand::distributions::Open01;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::model::{ActionSpec, MdpModel, Mode};

pub const RNG_NAME: &str = "ChaCha8Rng::seed_from_u64";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Nonzeros placed uniformly at random across each row.
    Uniform,
    /// Nonzeros restricted to a band around the diagonal.
    Band,
    /// Positive rewards with the last state absorbing (total-reward mode).
    TotalRewardPositive,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Uniform => "uniform",
            Family::Band => "band",
            Family::TotalRewardPositive => "total_reward_positive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub family: Family,
    pub num_states: usize,
    /// Fraction of states reachable from each state-action pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    /// Band width for [`Family::Band`]; row `i` may use columns within
    /// `bandwidth / 2` of `i`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<usize>,
    /// Inclusive range of actions per state.
    #[serde(default = "default_actions")]
    pub action_range: (usize, usize),
    /// Open range rewards are drawn from.
    #[serde(default = "default_rewards")]
    pub reward_range: (f64, f64),
    #[serde(default)]
    pub discount: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_actions() -> (usize, usize) {
    (2, 99)
}

fn default_rewards() -> (f64, f64) {
    (1.0, 100.0)
}

impl GeneratorSpec {
    pub fn uniform(num_states: usize, density: f64, discount: f64, seed: u64) -> Self {
        Self {
            family: Family::Uniform,
            num_states,
            density: Some(density),
            bandwidth: None,
            action_range: default_actions(),
            reward_range: default_rewards(),
            discount,
            seed,
        }
    }

    pub fn band(num_states: usize, bandwidth: usize, discount: f64, seed: u64) -> Self {
        Self {
            family: Family::Band,
            bandwidth: Some(bandwidth),
            density: None,
            ..Self::uniform(num_states, 1.0, discount, seed)
        }
    }

    /// Actions default to 2..=5 per state.
    pub fn total_reward(num_states: usize, density: f64, seed: u64) -> Self {
        Self {
            family: Family::TotalRewardPositive,
            action_range: (2, 5),
            discount: 1.0,
            ..Self::uniform(num_states, density, 1.0, seed)
        }
    }

    pub fn with_actions(mut self, lo: usize, hi: usize) -> Self {
        self.action_range = (lo, hi);
        self
    }

    pub fn with_rewards(mut self, lo: f64, hi: f64) -> Self {
        self.reward_range = (lo, hi);
        self
    }

    /// Density for uniform specs, bandwidth for band specs.
    pub fn density_or_bandwidth(&self) -> f64 {
        match self.family {
            Family::Band => self.bandwidth.unwrap_or(0) as f64,
            _ => self.density.unwrap_or(1.0),
        }
    }

    fn nonzeros_for_density(&self, density: f64) -> usize {
        ((density * self.num_states as f64).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InfeasibleSpec(msg));
        let n = self.num_states;
        if n == 0 {
            return bad("num_states must be at least 1".into());
        }
        let (lo, hi) = self.action_range;
        if lo == 0 || lo > hi {
            return bad(format!("action range ({lo}, {hi}) is empty or starts at 0"));
        }
        let (rlo, rhi) = self.reward_range;
        if !(rlo.is_finite() && rhi.is_finite() && rlo <= rhi) {
            return bad(format!("reward range ({rlo}, {rhi}) is invalid"));
        }
        if let Some(d) = self.density {
            if !(d > 0.0 && d <= 1.0) {
                return bad(format!("density {d} is outside (0, 1]"));
            }
            if d * (n as f64) < 1.0 {
                return bad(format!("density {d} leaves no nonzeros with {n} states"));
            }
        }
        match self.family {
            Family::Uniform | Family::Band => {
                if !(0.0..1.0).contains(&self.discount) {
                    return Err(Error::DiscountTooLarge(self.discount));
                }
            }
            Family::TotalRewardPositive => {
                if n < 2 {
                    return bad("total-reward models need at least 2 states".into());
                }
                if rlo < 0.0 {
                    return bad("total-reward rewards must be nonnegative".into());
                }
            }
        }
        if self.family == Family::Band {
            let Some(bw) = self.bandwidth else {
                return bad("band family needs a bandwidth".into());
            };
            if bw >= n {
                return bad(format!("bandwidth {bw} must be below {n} states"));
            }
            if let Some(d) = self.density {
                let k = self.nonzeros_for_density(d);
                if k > bw / 2 + 1 {
                    // the narrowest rows (at the corners) hold bw/2 + 1 entries
                    return bad(format!(
                        "density {d} needs {k} nonzeros per row but the band allows {}",
                        bw / 2 + 1
                    ));
                }
            }
        }
        Ok(())
    }
}

fn metadata(spec: &GeneratorSpec) -> serde_json::Value {
    json!({ "generator": spec, "rng": RNG_NAME })
}

fn draw_open(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.sample(Open01);
    lo + (hi - lo) * u
}

/// `k` distinct columns from `lo..lo + len`, plus `forced` if given, with
/// normalized random weights, sorted by column.
fn draw_row(
    rng: &mut ChaCha8Rng,
    lo: usize,
    len: usize,
    k: usize,
    forced: Option<usize>,
) -> Vec<(usize, f64)> {
    let picks = index::sample(rng, len, k);
    let mut row: Vec<(usize, f64)> = picks
        .into_iter()
        .map(|c| lo + c)
        .chain(forced)
        .map(|c| (c, rng.sample::<f64, _>(Open01)))
        .collect();
    let total: f64 = row.iter().map(|e| e.1).sum();
    for e in &mut row {
        e.1 /= total;
    }
    row.sort_by_key(|e| e.0);
    row
}

pub fn generate(spec: &GeneratorSpec) -> Result<MdpModel> {
    spec.validate()?;
    match spec.family {
        Family::Uniform | Family::Band => generate_discounted(spec),
        Family::TotalRewardPositive => generate_total_reward(spec),
    }
}

fn generate_discounted(spec: &GeneratorSpec) -> Result<MdpModel> {
    let n = spec.num_states;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = MdpModel::builder(Mode::Discounted, spec.discount).metadata(metadata(spec));
    for i in 0..n {
        let (lo, len) = match spec.family {
            Family::Band => {
                let h = spec.bandwidth.unwrap_or(0) / 2;
                let lo = i.saturating_sub(h);
                (lo, (i + h).min(n - 1) - lo + 1)
            }
            _ => (0, n),
        };
        let k = match (spec.family, spec.density) {
            (Family::Band, None) => len,
            (_, d) => spec.nonzeros_for_density(d.unwrap_or(1.0)).min(len),
        };
        let count = rng.gen_range(spec.action_range.0..=spec.action_range.1);
        let mut actions = Vec::with_capacity(count);
        for _ in 0..count {
            let reward = draw_open(&mut rng, spec.reward_range.0, spec.reward_range.1);
            actions.push(ActionSpec::new(reward, draw_row(&mut rng, lo, len, k, None)));
        }
        b.push_state(actions);
    }
    b.build()
}

/// Total-reward family: state `n - 1` is absorbing with reward 0; every
/// other action keeps a positive one-step probability of absorption.
pub fn generate_total_reward(spec: &GeneratorSpec) -> Result<MdpModel> {
    if spec.family != Family::TotalRewardPositive {
        return Err(Error::InfeasibleSpec(format!(
            "expected the total_reward_positive family, got {}",
            spec.family.as_str()
        )));
    }
    spec.validate()?;
    let n = spec.num_states;
    let absorbing = n - 1;
    let k = spec.nonzeros_for_density(spec.density.unwrap_or(1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = MdpModel::builder(Mode::TotalReward, 1.0).metadata(metadata(spec));
    for _ in 0..absorbing {
        let count = rng.gen_range(spec.action_range.0..=spec.action_range.1);
        let mut actions = Vec::with_capacity(count);
        for _ in 0..count {
            let reward = draw_open(&mut rng, spec.reward_range.0, spec.reward_range.1);
            // k - 1 transient columns plus the absorbing one
            let row = draw_row(&mut rng, 0, absorbing, (k - 1).min(absorbing), Some(absorbing));
            actions.push(ActionSpec::new(reward, row));
        }
        b.push_state(actions);
    }
    b.push_state(vec![ActionSpec::new(0.0, vec![(absorbing, 1.0)])]);
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_model() {
        let spec = GeneratorSpec::uniform(30, 0.3, 0.9, 7);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = generate(&GeneratorSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }

    #[test]
    fn uniform_shape() {
        let m = generate(&GeneratorSpec::uniform(40, 0.25, 0.95, 1)).unwrap();
        assert_eq!(m.num_states(), 40);
        for i in 0..40 {
            assert!((2..=99).contains(&m.num_actions(i)));
            for a in m.actions(i) {
                assert_eq!(m.row(a).len(), 10);
                assert!(m.reward(a) > 1.0 && m.reward(a) < 100.0);
            }
        }
        let meta = m.metadata().unwrap();
        assert_eq!(meta["generator"]["num_states"], 40);
        assert_eq!(meta["rng"], RNG_NAME);
    }

    #[test]
    fn band_rows_stay_in_band() {
        let m = generate(&GeneratorSpec::band(30, 10, 0.9, 3)).unwrap();
        for i in 0..30usize {
            let lo = i.saturating_sub(5);
            let hi = (i + 5).min(29);
            for a in m.actions(i) {
                let cols: Vec<usize> = m.row(a).iter().map(|e| e.0).collect();
                assert_eq!(cols, (lo..=hi).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn band_density_must_fit() {
        let mut spec = GeneratorSpec::band(30, 10, 0.9, 3);
        spec.density = Some(0.5);
        assert!(matches!(generate(&spec), Err(Error::InfeasibleSpec(_))));
        spec.density = Some(0.1);
        assert!(generate(&spec).is_ok());
    }

    #[test]
    fn spec_errors() {
        assert!(generate(&GeneratorSpec::uniform(10, 0.05, 0.9, 0)).is_err());
        assert!(generate(&GeneratorSpec::uniform(10, 0.5, 1.0, 0)).is_err());
        assert!(generate(&GeneratorSpec::uniform(0, 0.5, 0.9, 0)).is_err());
        assert!(generate(&GeneratorSpec::band(10, 10, 0.9, 0)).is_err());
        assert!(generate(&GeneratorSpec::uniform(10, 0.5, 0.9, 0).with_actions(3, 2)).is_err());
    }

    #[test]
    fn total_reward_family() {
        let m = generate(&GeneratorSpec::total_reward(20, 0.3, 5)).unwrap();
        assert_eq!(m.mode(), Mode::TotalReward);
        assert!(m.is_absorbing(19));
        for i in 0..19 {
            assert!((2..=5).contains(&m.num_actions(i)));
            for a in m.actions(i) {
                let last = m.row(a).iter().last().unwrap();
                assert_eq!(last.0, 19);
                assert!(last.1 > 0.0);
                assert!(m.reward(a) > 0.0);
            }
        }
        assert!(m.total_reward_feasible_point().is_ok());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = GeneratorSpec::band(50, 20, 0.98, 11);
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<GeneratorSpec>(&text).unwrap(), spec);
        let short: GeneratorSpec =
            serde_json::from_str(r#"{"family":"uniform","num_states":5,"density":1.0,"discount":0.5}"#)
                .unwrap();
        assert_eq!(short.action_range, (2, 99));
    }
}
