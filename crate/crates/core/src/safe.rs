//! Ask-for-help wrapper.
//!
//! Each step the wrapper simulates its base on the simulated history F̃ to
//! get a proposed query bit q̃ and action ã. If no cached mentor action equal
//! to ã lies within ε of the current state, it queries, plays the mentor
//! action and caches it. Otherwise it plays ã and queries iff q̃.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::budget::BudgetedActive;
use crate::error::{Error, Result};
use crate::experts::{realizable_smooth_learner, PolicyClass};
use crate::protocol::{ActionId, ActiveAlgorithm, Branch, Flags, State, Step};
use crate::rng::AlgorithmRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub state: State,
    pub action: ActionId,
    /// The base proposed the mentor's action at insertion time.
    pub matched_proposal: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MentorCache {
    entries: Vec<CacheEntry>,
}

impl MentorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[CacheEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, state: State, action: ActionId, matched_proposal: bool) {
        self.entries.push(CacheEntry { state, action, matched_proposal });
    }

    /// Index and distance of the closest entry with action `a`; the
    /// first-inserted entry wins ties.
    pub fn nearest(&self, state: &State, action: ActionId) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            if e.action != action {
                continue;
            }
            let d = e.state.distance(state);
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best
    }

    pub fn nn_distance(&self, state: &State, action: ActionId) -> f64 {
        self.nearest(state, action).map_or(f64::INFINITY, |(_, d)| d)
    }

    /// Every entry inserted while the base proposed the mentor's action is
    /// more than `eps` from every earlier entry with the same action.
    pub fn packing_holds(&self, eps: f64) -> bool {
        self.entries.iter().enumerate().all(|(i, e)| {
            !e.matched_proposal
                || self.entries[..i]
                    .iter()
                    .filter(|o| o.action == e.action)
                    .all(|o| o.state.distance(&e.state) > eps)
        })
    }
}

/// Minimum distance from `state` to a cached entry with action `a`; `+∞` if none.
pub fn nn_distance(cache: &MentorCache, state: &State, action: ActionId) -> f64 {
    cache.nn_distance(state, action)
}

/// What happened at one step of the wrapper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeStepRecord {
    /// The state looked unfamiliar, so the wrapper asked for help.
    pub ood: bool,
    pub sim_query: bool,
    pub sim_action: ActionId,
    pub action: ActionId,
    pub queried: bool,
    pub distance: f64,
    /// Nearest same-action cache entry, if any.
    pub witness: Option<usize>,
    pub cache_len_after: usize,
}

#[derive(Debug, Clone)]
struct Pending {
    sim_query: bool,
    sim_action: ActionId,
    ood: bool,
    distance: f64,
    witness: Option<usize>,
}

#[derive(Clone)]
pub struct SafeWrapper {
    base: Box<dyn ActiveAlgorithm>,
    epsilon: f64,
    horizon: usize,
    cache: MentorCache,
    simulated: Vec<Step>,
    log: Vec<SafeStepRecord>,
    pending: Option<Pending>,
    record_simulated: bool,
}

impl SafeWrapper {
    /// `epsilon = +∞` disables asking for help.
    pub fn new(base: Box<dyn ActiveAlgorithm>, epsilon: f64, horizon: usize) -> Result<Self> {
        if !base.flags().query_agnostic {
            return Err(Error::Contract("ask-for-help wrapper needs a query-agnostic base".into()));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        Ok(Self {
            base,
            epsilon,
            horizon,
            cache: MentorCache::new(),
            simulated: Vec::new(),
            log: Vec::with_capacity(horizon),
            pending: None,
            record_simulated: true,
        })
    }

    /// Stop storing the simulated history (the base keeps its own state).
    pub fn without_simulated_history(mut self) -> Self {
        self.record_simulated = false;
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn cache(&self) -> &MentorCache {
        &self.cache
    }

    pub fn log(&self) -> &[SafeStepRecord] {
        &self.log
    }

    /// The simulated history `(s_i, ã_i, π^m(s_i) q̃_i)`.
    pub fn simulated_history(&self) -> &[Step] {
        &self.simulated
    }

    pub fn base(&self) -> &dyn ActiveAlgorithm {
        self.base.as_ref()
    }

    fn missing_feedback(&self) -> Error {
        Error::ProtocolViolation {
            step: self.log.len(),
            detail: "wrapper queried but no mentor feedback was revealed".into(),
        }
    }

    fn finish(&mut self, state: &State, pending: Pending, action: ActionId, mentor: Option<ActionId>) -> Result<()> {
        let queried = mentor.is_some();
        if pending.ood {
            let m = mentor.ok_or_else(|| self.missing_feedback())?;
            self.cache.insert(state.clone(), m, pending.sim_action == m);
        }
        let sim_feedback = if pending.sim_query {
            Some(mentor.ok_or_else(|| self.missing_feedback())?)
        } else {
            None
        };
        let sim_step = Step { state: state.clone(), action: pending.sim_action, mentor_feedback: sim_feedback };
        self.base.observe(&sim_step)?;
        if self.record_simulated {
            self.simulated.push(sim_step);
        }
        self.log.push(SafeStepRecord {
            ood: pending.ood,
            sim_query: pending.sim_query,
            sim_action: pending.sim_action,
            action,
            queried,
            distance: pending.distance,
            witness: pending.witness,
            cache_len_after: self.cache.len(),
        });
        Ok(())
    }

    fn assess(&self, state: &State, sim_query: bool, sim_action: ActionId) -> Pending {
        let nearest = self.cache.nearest(state, sim_action);
        let distance = nearest.map_or(f64::INFINITY, |(_, d)| d);
        Pending {
            sim_query,
            sim_action,
            ood: distance > self.epsilon,
            distance,
            witness: nearest.map(|(i, _)| i),
        }
    }
}

impl ActiveAlgorithm for SafeWrapper {
    fn action_count(&self) -> usize {
        self.base.action_count()
    }

    fn flags(&self) -> Flags {
        Flags { full_feedback: self.base.flags().full_feedback, query_agnostic: false }
    }

    fn decide_query(&mut self, state: &State, rng: &mut AlgorithmRng) -> Result<bool> {
        let sim_query = self.base.decide_query(state, rng)?;
        let sim_action = self.base.choose_action(state, None, rng)?;
        let pending = self.assess(state, sim_query, sim_action);
        let q = pending.ood || sim_query;
        self.pending = Some(pending);
        Ok(q)
    }

    fn choose_action(
        &mut self,
        _state: &State,
        feedback: Option<ActionId>,
        _rng: &mut AlgorithmRng,
    ) -> Result<ActionId> {
        let pending = self.pending.as_ref().ok_or_else(|| Error::ProtocolViolation {
            step: self.log.len(),
            detail: "choose_action called before decide_query".into(),
        })?;
        if pending.ood {
            feedback.ok_or_else(|| self.missing_feedback())
        } else {
            Ok(pending.sim_action)
        }
    }

    fn observe(&mut self, step: &Step) -> Result<()> {
        let pending = self.pending.take().ok_or_else(|| Error::ProtocolViolation {
            step: self.log.len(),
            detail: "observe called before decide_query".into(),
        })?;
        self.finish(&step.state, pending, step.action, step.mentor_feedback)
    }

    fn branches(&self, state: &State, mentor: ActionId) -> Option<Vec<Branch>> {
        let inner = self.base.branches(state, mentor)?;
        let mut out = Vec::with_capacity(inner.len());
        for b in inner {
            let pending = self.assess(state, b.queried, b.action);
            let (queried, action) = if pending.ood { (true, mentor) } else { (b.queried, b.action) };
            let mut next = self.clone();
            next.base = b.successor;
            // the base already observed the simulated step inside `successor`
            if pending.ood {
                next.cache.insert(state.clone(), mentor, pending.sim_action == mentor);
            }
            if next.record_simulated {
                next.simulated.push(Step {
                    state: state.clone(),
                    action: pending.sim_action,
                    mentor_feedback: pending.sim_query.then_some(mentor),
                });
            }
            next.log.push(SafeStepRecord {
                ood: pending.ood,
                sim_query: pending.sim_query,
                sim_action: pending.sim_action,
                action,
                queried,
                distance: pending.distance,
                witness: pending.witness,
                cache_len_after: next.cache.len(),
            });
            out.push(Branch { probability: b.probability, queried, action, successor: Box::new(next) });
        }
        Some(out)
    }

    fn box_clone(&self) -> Box<dyn ActiveAlgorithm> {
        Box::new(self.clone())
    }

    fn diagnostics(&self) -> BTreeMap<&'static str, f64> {
        let mut d = self.base.diagnostics();
        d.insert("cache_size", self.cache.len() as f64);
        d.insert("simulated_queries", self.log.iter().filter(|r| r.sim_query).count() as f64);
        d.insert("ood_steps", self.log.iter().filter(|r| r.ood).count() as f64);
        d
    }
}

/// `(k, ε) = (T^{(2n+1)/(2n+2)}, T^{-1/(n+1)})`.
pub fn default_params(horizon: usize, n: usize) -> Result<(f64, f64)> {
    if horizon == 0 || n == 0 {
        return Err(Error::InvalidArgument("default parameters need T >= 1 and n >= 1".into()));
    }
    let t = horizon as f64;
    let n = n as f64;
    Ok((t.powf((2.0 * n + 1.0) / (2.0 * n + 2.0)), t.powf(-1.0 / (n + 1.0))))
}

/// Realizable smooth learner, budgeted with the default `k`, wrapped with the
/// default `ε`. The inner learner sees about `k` steps, so its cover is built
/// for horizon `⌈k⌉`.
pub fn full_stack(class: &PolicyClass, horizon: usize, n: usize) -> Result<SafeWrapper> {
    let (k, eps) = default_params(horizon, n)?;
    let inner_horizon = k.ceil() as usize;
    let base = realizable_smooth_learner(class, inner_horizon)?;
    let budget = BudgetedActive::new(Box::new(base), k, horizon)?;
    SafeWrapper::new(Box::new(budget), eps, horizon)
}
