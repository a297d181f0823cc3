//! The learning protocol.
//!
//! Each step `t` proceeds as: the adversary draws `(s_t, a_t^m)` from the
//! history; the algorithm sees `s_t` and decides whether to query; if it
//! queried it sees `a_t^m`; it then picks `a_t`. Algorithms keep their own
//! incremental state and are told about the finished step via
//! [`ActiveAlgorithm::observe`].

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, AlgorithmRng, StreamRng};

/// A point in ℝⁿ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    coords: Vec<f64>,
}

impl State {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("state must have at least one coordinate".into()));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite state coordinate {bad}")));
        }
        Ok(Self { coords })
    }

    /// One-dimensional state. Panics on a non-finite coordinate.
    pub fn scalar(x: f64) -> Self {
        Self::new(vec![x]).expect("finite scalar state")
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn distance(&self, other: &State) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Index of an action in `[0, |A|)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionId(pub usize);

impl ActionId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One finished step. `mentor_feedback` is `Some` exactly when the step was queried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: State,
    pub action: ActionId,
    pub mentor_feedback: Option<ActionId>,
}

impl Step {
    pub fn queried(&self) -> bool {
        self.mentor_feedback.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    steps: Vec<Step>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, step: Step) {
        self.steps.push(step);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn last(&self) -> Option<&Step> {
        self.steps.last()
    }

    pub fn query_count(&self) -> usize {
        self.steps.iter().filter(|s| s.queried()).count()
    }
}

impl FromIterator<Step> for History {
    fn from_iter<I: IntoIterator<Item = Step>>(iter: I) -> Self {
        Self { steps: iter.into_iter().collect() }
    }
}

/// The query-restricted history `F ∩ u`: the steps at indices with `u_i = 1`.
pub fn restrict_history(history: &History, mask: &[bool]) -> Result<History> {
    if mask.len() < history.len() {
        return Err(Error::InvalidArgument(format!(
            "restriction mask has length {} but history has {} steps",
            mask.len(),
            history.len()
        )));
    }
    Ok(history
        .steps
        .iter()
        .zip(mask)
        .filter(|(_, &keep)| keep)
        .map(|(s, _)| s.clone())
        .collect())
}

/// `1(a ≠ a^m)`.
pub fn binary_loss(action: ActionId, mentor: ActionId) -> f64 {
    if action == mentor {
        0.0
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Flags {
    /// Always queries.
    pub full_feedback: bool,
    /// The action never depends on the current step's query result.
    pub query_agnostic: bool,
}

/// One outcome of a step, used for exact enumeration.
pub struct Branch {
    pub probability: f64,
    pub queried: bool,
    pub action: ActionId,
    /// The algorithm after observing this outcome.
    pub successor: Box<dyn ActiveAlgorithm>,
}

/// An active learning algorithm: a query function and an action function.
///
/// Sampling goes through `decide_query` then `choose_action`, always in that
/// order within a step, followed by `observe` with the finished step.
pub trait ActiveAlgorithm: Send {
    fn action_count(&self) -> usize;

    fn flags(&self) -> Flags;

    fn decide_query(&mut self, state: &State, rng: &mut AlgorithmRng) -> Result<bool>;

    fn choose_action(
        &mut self,
        state: &State,
        feedback: Option<ActionId>,
        rng: &mut AlgorithmRng,
    ) -> Result<ActionId>;

    fn observe(&mut self, step: &Step) -> Result<()>;

    /// Exact query probability for the next step, if the algorithm can report it.
    fn query_probability(&self, _state: &State) -> Option<f64> {
        None
    }

    /// Exact action distribution for the next step given the query result.
    fn action_distribution(&self, _state: &State, _feedback: Option<ActionId>) -> Option<Vec<f64>> {
        None
    }

    /// Every outcome of the next step when the correct action is `mentor`,
    /// with probabilities and successor algorithms. `None` when the algorithm
    /// cannot be enumerated.
    fn branches(&self, state: &State, mentor: ActionId) -> Option<Vec<Branch>> {
        branches_from_distributions(self, state, mentor)
    }

    fn box_clone(&self) -> Box<dyn ActiveAlgorithm>;

    /// Numeric diagnostics (cache size, simulated queries, ...).
    fn diagnostics(&self) -> BTreeMap<&'static str, f64> {
        BTreeMap::new()
    }
}

impl Clone for Box<dyn ActiveAlgorithm> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

/// Enumerate a step from `query_probability` and `action_distribution`.
pub fn branches_from_distributions<A: ActiveAlgorithm + ?Sized>(
    alg: &A,
    state: &State,
    mentor: ActionId,
) -> Option<Vec<Branch>> {
    let pq = alg.query_probability(state)?;
    let mut out = Vec::new();
    for (queried, pq_branch) in [(false, 1.0 - pq), (true, pq)] {
        if pq_branch <= 0.0 {
            continue;
        }
        let feedback = queried.then_some(mentor);
        let dist = alg.action_distribution(state, feedback)?;
        for (a, &pa) in dist.iter().enumerate() {
            if pa <= 0.0 {
                continue;
            }
            let mut successor = alg.box_clone();
            let step = Step { state: state.clone(), action: ActionId(a), mentor_feedback: feedback };
            successor.observe(&step).ok()?;
            out.push(Branch { probability: pq_branch * pa, queried, action: ActionId(a), successor });
        }
    }
    Some(out)
}

/// Draws `(s_t, a_t^m)` given the history so far.
pub trait Adversary {
    fn action_count(&self) -> usize;

    fn next(&mut self, history: &History, rng: &mut StreamRng) -> Result<(State, ActionId)>;
}

/// An adversary whose next-step distribution can be listed exactly.
pub trait TabularAdversary {
    fn action_count(&self) -> usize;

    /// Support of `V(F)` as `(state, correct action, probability)` triples.
    fn distribution(&self, history: &History) -> Vec<(State, ActionId, f64)>;
}

/// The outcome of one protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub horizon: usize,
    pub seed: u64,
    pub history: History,
    /// The correct action `a_t^m` of every step, queried or not.
    pub mentor_actions: Vec<ActionId>,
    /// Binary loss `1(a_t ≠ a_t^m)` per step.
    pub losses: Vec<f64>,
}

impl RunTrace {
    pub fn total_loss(&self) -> f64 {
        self.losses.iter().sum()
    }

    pub fn query_count(&self) -> usize {
        self.history.query_count()
    }
}

/// Run `alg` against `adv` for `horizon` steps.
pub fn run_protocol(
    alg: &mut dyn ActiveAlgorithm,
    adv: &mut dyn Adversary,
    horizon: usize,
    seed: u64,
) -> Result<RunTrace> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let action_count = alg.action_count();
    if adv.action_count() != action_count {
        return Err(Error::InvalidArgument(format!(
            "algorithm has {} actions but adversary has {}",
            action_count,
            adv.action_count()
        )));
    }
    let mut adv_rng = rng::adversary_stream(seed);
    let mut alg_rng = AlgorithmRng::from_seed(seed);
    let mut history = History::new();
    let mut mentor_actions = Vec::with_capacity(horizon);
    let mut losses = Vec::with_capacity(horizon);

    for t in 0..horizon {
        let (state, mentor) = adv.next(&history, &mut adv_rng).map_err(|e| e.at_step(t))?;
        if mentor.0 >= action_count {
            return Err(Error::ProtocolViolation {
                step: t,
                detail: format!("adversary returned action {} of {}", mentor.0, action_count),
            });
        }
        let queried = alg.decide_query(&state, &mut alg_rng).map_err(|e| e.at_step(t))?;
        let feedback = queried.then_some(mentor);
        let action = alg.choose_action(&state, feedback, &mut alg_rng).map_err(|e| e.at_step(t))?;
        if action.0 >= action_count {
            return Err(Error::ProtocolViolation {
                step: t,
                detail: format!("algorithm returned action {} of {}", action.0, action_count),
            });
        }
        let step = Step { state, action, mentor_feedback: feedback };
        alg.observe(&step).map_err(|e| e.at_step(t))?;
        losses.push(binary_loss(action, mentor));
        mentor_actions.push(mentor);
        history.push(step);
    }
    Ok(RunTrace { horizon, seed, history, mentor_actions, losses })
}

/// Behavioural query-agnosticism check: with a shared randomness stream, the
/// action chosen with null feedback equals the action chosen with each
/// possible feedback value.
pub fn is_query_agnostic_at(alg: &dyn ActiveAlgorithm, state: &State, seed: u64) -> Result<bool> {
    let reference_rng = AlgorithmRng::from_seed(seed);
    let baseline = {
        let mut probe = alg.box_clone();
        probe.choose_action(state, None, &mut reference_rng.clone())?
    };
    for a in 0..alg.action_count() {
        let mut probe = alg.box_clone();
        if probe.choose_action(state, Some(ActionId(a)), &mut reference_rng.clone())? != baseline {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Always queries and plays the revealed mentor action.
#[derive(Debug, Clone)]
pub struct MentorCopy {
    action_count: usize,
}

impl MentorCopy {
    pub fn new(action_count: usize) -> Self {
        Self { action_count }
    }
}

impl ActiveAlgorithm for MentorCopy {
    fn action_count(&self) -> usize {
        self.action_count
    }

    fn flags(&self) -> Flags {
        Flags { full_feedback: true, query_agnostic: false }
    }

    fn decide_query(&mut self, _state: &State, _rng: &mut AlgorithmRng) -> Result<bool> {
        Ok(true)
    }

    fn choose_action(
        &mut self,
        _state: &State,
        feedback: Option<ActionId>,
        _rng: &mut AlgorithmRng,
    ) -> Result<ActionId> {
        feedback.ok_or_else(|| Error::ProtocolViolation {
            step: 0,
            detail: "mentor copy received no feedback".into(),
        })
    }

    fn observe(&mut self, _step: &Step) -> Result<()> {
        Ok(())
    }

    fn query_probability(&self, _state: &State) -> Option<f64> {
        Some(1.0)
    }

    fn action_distribution(&self, _state: &State, feedback: Option<ActionId>) -> Option<Vec<f64>> {
        let a = feedback?;
        let mut d = vec![0.0; self.action_count];
        d[a.0] = 1.0;
        Some(d)
    }

    fn box_clone(&self) -> Box<dyn ActiveAlgorithm> {
        Box::new(self.clone())
    }
}

/// Never queries; plays a uniformly random action.
#[derive(Debug, Clone)]
pub struct UniformRandom {
    action_count: usize,
}

impl UniformRandom {
    pub fn new(action_count: usize) -> Self {
        Self { action_count }
    }
}

impl ActiveAlgorithm for UniformRandom {
    fn action_count(&self) -> usize {
        self.action_count
    }

    fn flags(&self) -> Flags {
        Flags { full_feedback: false, query_agnostic: true }
    }

    fn decide_query(&mut self, _state: &State, _rng: &mut AlgorithmRng) -> Result<bool> {
        Ok(false)
    }

    fn choose_action(
        &mut self,
        _state: &State,
        _feedback: Option<ActionId>,
        rng: &mut AlgorithmRng,
    ) -> Result<ActionId> {
        Ok(ActionId(rng.action.gen_range(0..self.action_count)))
    }

    fn observe(&mut self, _step: &Step) -> Result<()> {
        Ok(())
    }

    fn query_probability(&self, _state: &State) -> Option<f64> {
        Some(0.0)
    }

    fn action_distribution(&self, _state: &State, _feedback: Option<ActionId>) -> Option<Vec<f64>> {
        Some(vec![1.0 / self.action_count as f64; self.action_count])
    }

    fn box_clone(&self) -> Box<dyn ActiveAlgorithm> {
        Box::new(self.clone())
    }
}

/// Plays the same action every step, never queries.
#[derive(Debug, Clone)]
pub struct FixedAction {
    action: ActionId,
    action_count: usize,
}

impl FixedAction {
    pub fn new(action: ActionId, action_count: usize) -> Self {
        Self { action, action_count }
    }
}

impl ActiveAlgorithm for FixedAction {
    fn action_count(&self) -> usize {
        self.action_count
    }

    fn flags(&self) -> Flags {
        Flags { full_feedback: false, query_agnostic: true }
    }

    fn decide_query(&mut self, _state: &State, _rng: &mut AlgorithmRng) -> Result<bool> {
        Ok(false)
    }

    fn choose_action(
        &mut self,
        _state: &State,
        _feedback: Option<ActionId>,
        _rng: &mut AlgorithmRng,
    ) -> Result<ActionId> {
        Ok(self.action)
    }

    fn observe(&mut self, _step: &Step) -> Result<()> {
        Ok(())
    }

    fn query_probability(&self, _state: &State) -> Option<f64> {
        Some(0.0)
    }

    fn action_distribution(&self, _state: &State, _feedback: Option<ActionId>) -> Option<Vec<f64>> {
        let mut d = vec![0.0; self.action_count];
        d[self.action.0] = 1.0;
        Some(d)
    }

    fn box_clone(&self) -> Box<dyn ActiveAlgorithm> {
        Box::new(self.clone())
    }
}

/// Sample an index from a probability vector with one uniform draw.
pub(crate) fn sample_index(dist: &[f64], u: f64) -> usize {
    let total: f64 = dist.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if target < acc {
            return i;
        }
    }
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}
