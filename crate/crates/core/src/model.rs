//! MDP representation, validation, and the canonical JSON file format.
//!
//! Transition rows are stored compressed: every (state, action) pair owns a
//! slice of `(column, probability)` entries with strictly increasing columns.
//! Actions are numbered globally in state order, so per-action data (rewards,
//! rows, cached weighted sums) lives in flat arrays indexed by that number.

use std::fmt;
use std::fs;
use std::ops::{Deref, DerefMut, Range};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on `|sum(row) - 1|`.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

const NOT_CONTIGUOUS: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Discounted,
    TotalReward,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Discounted => "discounted",
            Mode::TotalReward => "total_reward",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One action as supplied to [`ModelBuilder`].
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSpec {
    pub reward: f64,
    pub transitions: Vec<(usize, f64)>,
}

impl ActionSpec {
    pub fn new(reward: f64, transitions: Vec<(usize, f64)>) -> Self {
        Self { reward, transitions }
    }
}

/// A sparse transition row.
#[derive(Clone, Copy, Debug)]
pub struct Row<'a> {
    pub cols: &'a [u32],
    pub probs: &'a [f64],
    contiguous_from: u32,
}

impl<'a> Row<'a> {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.cols
            .iter()
            .zip(self.probs)
            .map(|(&c, &p)| (c as usize, p))
    }

    /// `sum_j p_j * v_j`, accumulated in ascending column order.
    ///
    /// Rows whose columns form one unbroken range skip the index gather.
    #[inline]
    pub fn dot(&self, v: &[f64]) -> f64 {
        if self.contiguous_from != NOT_CONTIGUOUS {
            let lo = self.contiguous_from as usize;
            let window = &v[lo..lo + self.probs.len()];
            let mut acc = 0.0;
            for (p, x) in self.probs.iter().zip(window) {
                acc += p * x;
            }
            acc
        } else {
            let mut acc = 0.0;
            for (&c, p) in self.cols.iter().zip(self.probs) {
                acc += p * v[c as usize];
            }
            acc
        }
    }

    /// Like [`Row::dot`] but leaves out column `skip`.
    #[inline]
    pub fn dot_without(&self, v: &[f64], skip: usize) -> f64 {
        let mut acc = 0.0;
        for (&c, p) in self.cols.iter().zip(self.probs) {
            if c as usize != skip {
                acc += p * v[c as usize];
            }
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdpModel {
    mode: Mode,
    discount: f64,
    state_offsets: Vec<usize>,
    rewards: Vec<f64>,
    row_offsets: Vec<usize>,
    cols: Vec<u32>,
    probs: Vec<f64>,
    diag: Vec<f64>,
    contiguous_from: Vec<u32>,
    metadata: Option<serde_json::Value>,
}

impl MdpModel {
    pub fn builder(mode: Mode, discount: f64) -> ModelBuilder {
        ModelBuilder {
            mode,
            discount,
            states: Vec::new(),
            metadata: None,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn num_states(&self) -> usize {
        self.state_offsets.len() - 1
    }

    pub fn total_actions(&self) -> usize {
        self.rewards.len()
    }

    pub fn num_actions(&self, state: usize) -> usize {
        self.state_offsets[state + 1] - self.state_offsets[state]
    }

    /// Global action numbers owned by `state`.
    #[inline]
    pub fn actions(&self, state: usize) -> Range<usize> {
        self.state_offsets[state]..self.state_offsets[state + 1]
    }

    #[inline]
    pub fn reward(&self, action: usize) -> f64 {
        self.rewards[action]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    #[inline]
    pub fn row(&self, action: usize) -> Row<'_> {
        let span = self.row_offsets[action]..self.row_offsets[action + 1];
        Row {
            cols: &self.cols[span.clone()],
            probs: &self.probs[span],
            contiguous_from: self.contiguous_from[action],
        }
    }

    /// `p_ii(a)` for the state that owns global action `action`.
    #[inline]
    pub fn self_loop(&self, action: usize) -> f64 {
        self.diag[action]
    }

    pub fn nonzeros(&self) -> usize {
        self.probs.len()
    }

    pub fn metadata(&self) -> Option<&serde_json::Value> {
        self.metadata.as_ref()
    }

    pub fn set_metadata(&mut self, metadata: Option<serde_json::Value>) {
        self.metadata = metadata;
    }

    pub fn max_abs_reward(&self) -> f64 {
        self.rewards.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
    }

    pub fn min_reward(&self) -> f64 {
        self.rewards.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// First negative reward as `(state, local action, reward)`.
    pub fn negative_reward(&self) -> Option<(usize, usize, f64)> {
        for i in 0..self.num_states() {
            for (k, a) in self.actions(i).enumerate() {
                if self.rewards[a] < 0.0 {
                    return Some((i, k, self.rewards[a]));
                }
            }
        }
        None
    }

    /// States whose every action is a reward-free self-loop.
    pub fn is_absorbing(&self, state: usize) -> bool {
        self.actions(state).all(|a| {
            let row = self.row(a);
            self.rewards[a] == 0.0
                && row.len() == 1
                && row.cols[0] as usize == state
                && row.probs[0] == 1.0
        })
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_model(self)
    }

    /// Shift every reward by `max |r|` so all rewards become non-negative.
    ///
    /// Only meaningful for discounted models: the fixed point moves by
    /// `offset / (1 - discount)` in every coordinate and the optimal policy is
    /// unchanged.
    pub fn adjust_rewards_nonnegative(&self) -> Result<(MdpModel, f64)> {
        if self.mode != Mode::Discounted {
            return Err(Error::ModeMismatch {
                expected: "discounted",
            });
        }
        let offset = self.max_abs_reward();
        let mut shifted = self.clone();
        for r in &mut shifted.rewards {
            *r += offset;
        }
        Ok((shifted, offset))
    }

    /// The constant vector `max r / (1 - discount)`, which always satisfies
    /// `v >= Tv` when rewards are non-negative.
    pub fn initial_feasible_point(&self) -> Result<ValueVector> {
        if self.discount >= 1.0 {
            return Err(Error::DiscountTooLarge(self.discount));
        }
        if let Some((state, action, reward)) = self.negative_reward() {
            return Err(Error::NegativeReward {
                state,
                action,
                reward,
            });
        }
        let max_reward = self.rewards.iter().copied().fold(0.0_f64, f64::max);
        let alpha = max_reward / (1.0 - self.discount);
        Ok(ValueVector::filled(self.num_states(), alpha))
    }

    /// A point of `{v : v >= Lv}` for a positive total-reward model.
    ///
    /// Absorbing states get 0; every other state gets
    /// `K = max r(i,a) / P(i,a -> absorbing)`. This needs every action of a
    /// non-absorbing state to move into the absorbing set in one step with
    /// positive probability.
    pub fn total_reward_feasible_point(&self) -> Result<ValueVector> {
        if self.mode != Mode::TotalReward {
            return Err(Error::ModeMismatch {
                expected: "total_reward",
            });
        }
        let n = self.num_states();
        let absorbing: Vec<bool> = (0..n).map(|i| self.is_absorbing(i)).collect();
        let mut k = 0.0_f64;
        for i in (0..n).filter(|&i| !absorbing[i]) {
            for a in self.actions(i) {
                let r = self.rewards[a];
                if r < 0.0 {
                    return Err(Error::NegativeReward {
                        state: i,
                        action: a - self.state_offsets[i],
                        reward: r,
                    });
                }
                let exit: f64 = self
                    .row(a)
                    .iter()
                    .filter(|&(j, _)| absorbing[j])
                    .map(|(_, p)| p)
                    .sum();
                if exit <= 0.0 {
                    return Err(Error::NoInitialPoint(format!(
                        "state {i} action {} has no one-step transition into an absorbing state",
                        a - self.state_offsets[i]
                    )));
                }
                k = k.max(r / exit);
            }
        }
        Ok(ValueVector::from(
            absorbing
                .iter()
                .map(|&abs| if abs { 0.0 } else { k })
                .collect::<Vec<_>>(),
        ))
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string(&self.to_doc()).expect("model serializes");
        text.push('\n');
        text
    }

    /// Parse and validate a model document.
    pub fn from_json(text: &str) -> Result<MdpModel> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        let model = Self::from_doc(doc);
        let violations = model.validate();
        if violations.is_empty() {
            Ok(model)
        } else {
            Err(Error::Validation(violations))
        }
    }

    fn to_doc(&self) -> ModelDoc {
        let states = (0..self.num_states())
            .map(|i| StateDoc {
                actions: self
                    .actions(i)
                    .map(|a| ActionDoc {
                        reward: self.rewards[a],
                        transitions: self.row(a).iter().map(|(c, p)| (c as u64, p)).collect(),
                    })
                    .collect(),
            })
            .collect();
        ModelDoc {
            mode: self.mode,
            discount: self.discount,
            states,
            metadata: self.metadata.clone(),
        }
    }

    fn from_doc(doc: ModelDoc) -> MdpModel {
        let mut builder = MdpModel::builder(doc.mode, doc.discount);
        builder.metadata = doc.metadata;
        for state in doc.states {
            builder.push_state(
                state
                    .actions
                    .into_iter()
                    .map(|a| ActionSpec {
                        reward: a.reward,
                        transitions: a
                            .transitions
                            .into_iter()
                            .map(|(c, p)| (usize::try_from(c).unwrap_or(usize::MAX), p))
                            .collect(),
                    })
                    .collect(),
            );
        }
        builder.build_unchecked()
    }
}

pub fn save_model(model: &MdpModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_json()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MdpModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    MdpModel::from_json(&text)
}

pub struct ModelBuilder {
    mode: Mode,
    discount: f64,
    states: Vec<Vec<ActionSpec>>,
    metadata: Option<serde_json::Value>,
}

impl ModelBuilder {
    pub fn push_state(&mut self, actions: Vec<ActionSpec>) -> &mut Self {
        self.states.push(actions);
        self
    }

    pub fn state(mut self, actions: Vec<ActionSpec>) -> Self {
        self.states.push(actions);
        self
    }

    pub fn metadata(mut self, metadata: serde_json::Value) -> Self {
        self.metadata = Some(metadata);
        self
    }

    pub fn build(self) -> Result<MdpModel> {
        let model = self.build_unchecked();
        let violations = model.validate();
        if violations.is_empty() {
            Ok(model)
        } else {
            Err(Error::Validation(violations))
        }
    }

    /// Assemble without checking invariants. The result may fail
    /// [`validate_model`]; solver entry points assume it does not.
    pub fn build_unchecked(self) -> MdpModel {
        let total: usize = self.states.iter().map(Vec::len).sum();
        let nnz: usize = self
            .states
            .iter()
            .flat_map(|s| s.iter().map(|a| a.transitions.len()))
            .sum();
        let mut model = MdpModel {
            mode: self.mode,
            discount: self.discount,
            state_offsets: Vec::with_capacity(self.states.len() + 1),
            rewards: Vec::with_capacity(total),
            row_offsets: Vec::with_capacity(total + 1),
            cols: Vec::with_capacity(nnz),
            probs: Vec::with_capacity(nnz),
            diag: Vec::with_capacity(total),
            contiguous_from: Vec::with_capacity(total),
            metadata: self.metadata,
        };
        model.state_offsets.push(0);
        model.row_offsets.push(0);
        for (i, actions) in self.states.into_iter().enumerate() {
            for action in actions {
                model.rewards.push(action.reward);
                let start = model.cols.len();
                let mut diag = 0.0;
                for (c, p) in action.transitions {
                    if c == i {
                        diag = p;
                    }
                    model.cols.push(u32::try_from(c).unwrap_or(u32::MAX));
                    model.probs.push(p);
                }
                let cols = &model.cols[start..];
                let contiguous = !cols.is_empty()
                    && cols.windows(2).all(|w| w[1] == w[0].wrapping_add(1))
                    && cols[cols.len() - 1] != u32::MAX;
                model
                    .contiguous_from
                    .push(if contiguous { cols[0] } else { NOT_CONTIGUOUS });
                model.diag.push(diag);
                model.row_offsets.push(model.cols.len());
            }
            model.state_offsets.push(model.rewards.len());
        }
        model
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    NoStates,
    NoActions,
    EmptyRow,
    RowSum,
    Probability,
    ColumnOrder,
    ColumnRange,
    NonFinite,
    DiscountRange,
    DiscountMode,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::NoStates => "no-states",
            Rule::NoActions => "no-actions",
            Rule::EmptyRow => "empty-row",
            Rule::RowSum => "row-sum",
            Rule::Probability => "probability",
            Rule::ColumnOrder => "column-order",
            Rule::ColumnRange => "column-range",
            Rule::NonFinite => "non-finite",
            Rule::DiscountRange => "discount-range",
            Rule::DiscountMode => "discount-mode",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One broken invariant. `action` is the index within the state's action list.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub state: Option<usize>,
    pub action: Option<usize>,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.state, self.action) {
            (Some(s), Some(a)) => write!(f, "state {s} action {a}: ")?,
            (Some(s), None) => write!(f, "state {s}: ")?,
            _ => {}
        }
        write!(f, "{}", self.rule)?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

pub fn validate_model(m: &MdpModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |state, action, rule, detail: String| {
        out.push(Violation {
            state,
            action,
            rule,
            detail,
        })
    };

    let lambda = m.discount;
    if !lambda.is_finite() || !(0.0..=1.0).contains(&lambda) {
        push(None, None, Rule::DiscountRange, format!("discount {lambda}"));
    } else {
        match m.mode {
            Mode::Discounted if lambda >= 1.0 => push(
                None,
                None,
                Rule::DiscountMode,
                "discounted mode needs discount < 1".into(),
            ),
            Mode::TotalReward if lambda != 1.0 => push(
                None,
                None,
                Rule::DiscountMode,
                "total-reward mode needs discount = 1".into(),
            ),
            _ => {}
        }
    }

    let n = m.num_states();
    if n == 0 {
        push(None, None, Rule::NoStates, String::new());
    }
    for i in 0..n {
        if m.num_actions(i) == 0 {
            push(Some(i), None, Rule::NoActions, String::new());
        }
        for (k, a) in m.actions(i).enumerate() {
            let loc = (Some(i), Some(k));
            if !m.rewards[a].is_finite() {
                push(loc.0, loc.1, Rule::NonFinite, format!("reward {}", m.rewards[a]));
            }
            let row = m.row(a);
            if row.is_empty() {
                push(loc.0, loc.1, Rule::EmptyRow, String::new());
                continue;
            }
            if let Some(&p) = row
                .probs
                .iter()
                .find(|p| !(p.is_finite() && **p > 0.0 && **p <= 1.0))
            {
                push(loc.0, loc.1, Rule::Probability, format!("entry {p}"));
            }
            if row.cols.windows(2).any(|w| w[1] <= w[0]) {
                push(loc.0, loc.1, Rule::ColumnOrder, String::new());
            }
            if let Some(&c) = row.cols.iter().find(|&&c| c as usize >= n) {
                push(loc.0, loc.1, Rule::ColumnRange, format!("column {c}"));
            }
            let sum: f64 = row.probs.iter().sum();
            // written so a NaN sum is also rejected
            let close = (sum - 1.0).abs() <= ROW_SUM_TOLERANCE;
            if !close {
                push(loc.0, loc.1, Rule::RowSum, format!("sum {sum}"));
            }
        }
    }
    out
}

/// A value function indexed by state.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueVector(Vec<f64>);

impl ValueVector {
    pub fn filled(len: usize, value: f64) -> Self {
        Self(vec![value; len])
    }

    pub fn zeros(len: usize) -> Self {
        Self::filled(len, 0.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.0)
    }

    pub fn sup_distance(&self, other: &[f64]) -> f64 {
        sup_distance(&self.0, other)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl From<Vec<f64>> for ValueVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for ValueVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ValueVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Chosen action (index into the state's action list) per state.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl From<Vec<usize>> for Policy {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

impl Deref for Policy {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl DerefMut for Policy {
    fn deref_mut(&mut self) -> &mut [usize] {
        &mut self.0
    }
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    mode: Mode,
    discount: f64,
    states: Vec<StateDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDoc {
    actions: Vec<ActionDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionDoc {
    reward: f64,
    transitions: Vec<(u64, f64)>,
}
