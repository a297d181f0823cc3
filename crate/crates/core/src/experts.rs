//! Full-feedback learners over policy classes.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{sample_index, ActionId, ActiveAlgorithm, Flags, State, Step};
use crate::rng::AlgorithmRng;

/// Nearest-anchor table: the action of the closest anchor, first anchor on ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    pub anchors: Vec<(Vec<f64>, ActionId)>,
}

/// A deterministic map from states to actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    Constant(ActionId),
    /// Action 1 iff `s[axis] >= theta`, else action 0.
    Threshold { axis: usize, theta: f64 },
    Lookup(Arc<LookupTable>),
    /// Action 1 iff `base(s) == target`. Used for one-vs-rest copies.
    Indicator { base: Box<Policy>, target: ActionId },
}

impl Policy {
    pub fn threshold(theta: f64) -> Self {
        Policy::Threshold { axis: 0, theta }
    }

    /// A tabular policy on a finite set of anchor points.
    pub fn lookup(anchors: Vec<(Vec<f64>, ActionId)>) -> Self {
        Policy::Lookup(Arc::new(LookupTable { anchors }))
    }

    pub fn evaluate(&self, state: &State) -> ActionId {
        match self {
            Policy::Constant(a) => *a,
            Policy::Threshold { axis, theta } => match state.coords().get(*axis) {
                Some(&x) if x >= *theta => ActionId(1),
                _ => ActionId(0),
            },
            Policy::Lookup(table) => {
                let mut best = (f64::INFINITY, ActionId(0));
                for (anchor, action) in &table.anchors {
                    let d: f64 = anchor
                        .iter()
                        .zip(state.coords())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    if d < best.0 {
                        best = (d, *action);
                    }
                }
                best.1
            }
            Policy::Indicator { base, target } => ActionId(usize::from(base.evaluate(state) == *target)),
        }
    }
}

/// Exact disagreement mass `Pr_{s~U[0,1]^n}[p(s) != q(s)]` for constant and
/// threshold policies. `None` for other kinds.
pub fn disagreement(p: &Policy, q: &Policy) -> Option<f64> {
    // probability of action 1 on its own axis
    fn ones(p: &Policy) -> Option<(Option<usize>, f64)> {
        match p {
            Policy::Constant(ActionId(0)) => Some((None, 0.0)),
            Policy::Constant(ActionId(1)) => Some((None, 1.0)),
            Policy::Threshold { axis, theta } => Some((Some(*axis), 1.0 - theta.clamp(0.0, 1.0))),
            _ => None,
        }
    }
    let (ax_p, a) = ones(p)?;
    let (ax_q, b) = ones(q)?;
    match (ax_p, ax_q) {
        (Some(i), Some(j)) if i == j => Some((a - b).abs()),
        _ => Some(a * (1.0 - b) + (1.0 - a) * b),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyClass {
    Finite { policies: Vec<Policy>, action_count: usize },
    /// `{ s -> 1(s_1 >= θ) : θ ∈ [0,1] }` on `[0,1]`.
    Thresholds,
    /// `{ s -> 1(s_i >= θ) : i < dim, θ ∈ [0,1] }` on `[0,1]^dim`.
    AxisThresholds { dim: usize },
}

impl PolicyClass {
    pub fn action_count(&self) -> usize {
        match self {
            PolicyClass::Finite { action_count, .. } => *action_count,
            _ => 2,
        }
    }

    /// The dimension `d` recorded for the class. For a finite class this is
    /// `floor(log2 |Π|)`, an upper bound on its VC dimension.
    pub fn vc_dimension(&self) -> usize {
        match self {
            PolicyClass::Finite { policies, .. } => {
                let n = policies.len().max(1);
                (usize::BITS - 1 - n.leading_zeros()) as usize
            }
            PolicyClass::Thresholds => 1,
            PolicyClass::AxisThresholds { dim } => *dim,
        }
    }

    /// Dimension of the domain `[0,1]^n` carrying the baseline measure.
    pub fn domain_dim(&self) -> Option<usize> {
        match self {
            PolicyClass::Finite { .. } => None,
            PolicyClass::Thresholds => Some(1),
            PolicyClass::AxisThresholds { dim } => Some(*dim),
        }
    }

    pub fn sample_member<R: Rng + ?Sized>(&self, rng: &mut R) -> Policy {
        match self {
            PolicyClass::Finite { policies, .. } => policies[rng.gen_range(0..policies.len())].clone(),
            PolicyClass::Thresholds => Policy::threshold(rng.gen::<f64>()),
            PolicyClass::AxisThresholds { dim } => Policy::Threshold {
                axis: rng.gen_range(0..*dim),
                theta: rng.gen::<f64>(),
            },
        }
    }
}

/// A finite ε-cover of a class with respect to the uniform measure on its domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverResult {
    pub policies: Vec<Policy>,
    pub epsilon: f64,
    /// Baseline measure, uniform on `[0,1]^dim`; `None` for a finite class
    /// (which covers itself under any measure).
    pub baseline_dim: Option<usize>,
    pub vc_dimension: usize,
}

impl CoverResult {
    pub fn size_bound(&self) -> f64 {
        (41.0 / self.epsilon).powi(self.vc_dimension as i32)
    }
}

fn threshold_grid(eps: f64) -> Vec<f64> {
    if eps >= 1.0 {
        return vec![0.0];
    }
    let steps = (1.0 / eps).floor() as usize;
    let mut grid: Vec<f64> = (0..=steps).map(|j| (j as f64 * eps).min(1.0)).collect();
    if *grid.last().unwrap() < 1.0 {
        grid.push(1.0);
    }
    grid
}

pub fn epsilon_cover(class: &PolicyClass, eps: f64) -> Result<CoverResult> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("cover radius must be positive, got {eps}")));
    }
    let vc_dimension = class.vc_dimension();
    let policies = match class {
        PolicyClass::Finite { policies, .. } => {
            if policies.is_empty() {
                return Err(Error::InvalidArgument("empty policy class".into()));
            }
            policies.clone()
        }
        PolicyClass::Thresholds => threshold_grid(eps).into_iter().map(Policy::threshold).collect(),
        PolicyClass::AxisThresholds { dim } => {
            if *dim == 0 {
                return Err(Error::InvalidArgument("axis-threshold class needs dim >= 1".into()));
            }
            if eps >= 1.0 {
                vec![Policy::Threshold { axis: 0, theta: 0.0 }]
            } else {
                let grid = threshold_grid(eps);
                (0..*dim)
                    .flat_map(|axis| grid.iter().map(move |&theta| Policy::Threshold { axis, theta }))
                    .collect()
            }
        }
    };
    Ok(CoverResult { policies, epsilon: eps, baseline_dim: class.domain_dim(), vc_dimension })
}

/// Per-axis sorted thresholds with weight prefix sums, for fast action
/// probabilities when every expert is a threshold.
#[derive(Debug, Clone)]
struct ThresholdIndex {
    /// (axis, sorted thetas, expert ids in the same order)
    axes: Vec<(usize, Vec<f64>, Vec<usize>)>,
    prefix: Vec<Vec<f64>>,
}

impl ThresholdIndex {
    fn build(policies: &[Policy]) -> Option<Self> {
        let mut by_axis: BTreeMap<usize, Vec<(f64, usize)>> = BTreeMap::new();
        for (i, p) in policies.iter().enumerate() {
            match p {
                Policy::Threshold { axis, theta } => by_axis.entry(*axis).or_default().push((*theta, i)),
                _ => return None,
            }
        }
        let axes: Vec<_> = by_axis
            .into_iter()
            .map(|(axis, mut v)| {
                v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let (thetas, ids) = v.into_iter().unzip();
                (axis, thetas, ids)
            })
            .collect();
        let prefix = axes.iter().map(|(_, t, _): &(usize, Vec<f64>, Vec<usize>)| vec![0.0; t.len() + 1]).collect();
        Some(Self { axes, prefix })
    }

    fn refresh(&mut self, weights: &[f64]) {
        for ((_, _, ids), prefix) in self.axes.iter().zip(self.prefix.iter_mut()) {
            let mut acc = 0.0;
            for (j, &id) in ids.iter().enumerate() {
                acc += weights[id];
                prefix[j + 1] = acc;
            }
        }
    }

    fn prob_one(&self, state: &State) -> f64 {
        let mut p = 0.0;
        for ((axis, thetas, _), prefix) in self.axes.iter().zip(&self.prefix) {
            if let Some(&x) = state.coords().get(*axis) {
                let count = thetas.partition_point(|&t| t <= x);
                p += prefix[count];
            }
        }
        p.clamp(0.0, 1.0)
    }
}

/// Exponentially weighted forecaster with binary loss.
#[derive(Debug, Clone)]
pub struct ExpWeights {
    policies: Arc<Vec<Policy>>,
    action_count: usize,
    eta: f64,
    cumulative: Vec<f64>,
    weights: Vec<f64>,
    index: Option<ThresholdIndex>,
    expected_loss: f64,
    steps: usize,
}

impl ExpWeights {
    pub fn new(policies: Vec<Policy>, action_count: usize, eta: f64) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::InvalidArgument("exponential weights needs at least one expert".into()));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {eta}")));
        }
        if action_count < 2 {
            return Err(Error::InvalidArgument("need at least two actions".into()));
        }
        let n = policies.len();
        let index = if action_count == 2 { ThresholdIndex::build(&policies) } else { None };
        let mut out = Self {
            policies: Arc::new(policies),
            action_count,
            eta,
            cumulative: vec![0.0; n],
            weights: vec![1.0 / n as f64; n],
            index,
            expected_loss: 0.0,
            steps: 0,
        };
        out.renormalise();
        Ok(out)
    }

    /// Exponential weights with `η = 1` over a cover.
    pub fn over_cover(cover: &CoverResult, action_count: usize) -> Result<Self> {
        Self::new(cover.policies.clone(), action_count, 1.0)
    }

    fn renormalise(&mut self) {
        let best = self.cumulative.iter().cloned().fold(f64::INFINITY, f64::min);
        for (w, l) in self.weights.iter_mut().zip(&self.cumulative) {
            *w = (-self.eta * (l - best)).exp();
        }
        let total: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= total;
        }
        if let Some(index) = &mut self.index {
            index.refresh(&self.weights);
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn cumulative_losses(&self) -> &[f64] {
        &self.cumulative
    }

    /// `Σ_t <w_t, ℓ_t>` over observed feedback steps.
    pub fn cumulative_expected_loss(&self) -> f64 {
        self.expected_loss
    }

    pub fn best_expert_loss(&self) -> f64 {
        self.cumulative.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `e/(e-1) (L* + ln N)`.
    pub fn small_loss_bound(&self) -> f64 {
        let e = std::f64::consts::E;
        e / (e - 1.0) * (self.best_expert_loss() + (self.policies.len() as f64).ln())
    }

    pub fn distribution(&self, state: &State) -> Vec<f64> {
        let mut dist = vec![0.0; self.action_count];
        match &self.index {
            Some(index) => {
                let p1 = index.prob_one(state);
                dist[0] = 1.0 - p1;
                dist[1] = p1;
            }
            None => {
                for (p, w) in self.policies.iter().zip(&self.weights) {
                    dist[p.evaluate(state).0] += w;
                }
            }
        }
        dist
    }
}

impl ActiveAlgorithm for ExpWeights {
    fn action_count(&self) -> usize {
        self.action_count
    }

    fn flags(&self) -> Flags {
        Flags { full_feedback: true, query_agnostic: true }
    }

    fn decide_query(&mut self, _state: &State, _rng: &mut AlgorithmRng) -> Result<bool> {
        Ok(true)
    }

    fn choose_action(
        &mut self,
        state: &State,
        _feedback: Option<ActionId>,
        rng: &mut AlgorithmRng,
    ) -> Result<ActionId> {
        let u: f64 = rng.action.gen();
        Ok(ActionId(sample_index(&self.distribution(state), u)))
    }

    fn observe(&mut self, step: &Step) -> Result<()> {
        let Some(mentor) = step.mentor_feedback else {
            return Ok(());
        };
        let dist = self.distribution(&step.state);
        self.expected_loss += 1.0 - dist.get(mentor.0).copied().unwrap_or(0.0);
        for (l, p) in self.cumulative.iter_mut().zip(self.policies.iter()) {
            if p.evaluate(&step.state) != mentor {
                *l += 1.0;
            }
        }
        self.steps += 1;
        self.renormalise();
        Ok(())
    }

    fn query_probability(&self, _state: &State) -> Option<f64> {
        Some(1.0)
    }

    fn action_distribution(&self, state: &State, _feedback: Option<ActionId>) -> Option<Vec<f64>> {
        Some(self.distribution(state))
    }

    fn box_clone(&self) -> Box<dyn ActiveAlgorithm> {
        Box::new(self.clone())
    }

    fn diagnostics(&self) -> BTreeMap<&'static str, f64> {
        BTreeMap::from([
            ("experts", self.policies.len() as f64),
            ("expected_loss", self.expected_loss),
            ("best_expert_loss", self.best_expert_loss()),
        ])
    }
}

/// The learner of the realizable smooth setting: exponential weights with
/// `η = 1` over a `1/T`-cover of the class.
pub fn realizable_smooth_learner(class: &PolicyClass, horizon: usize) -> Result<ExpWeights> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let cover = epsilon_cover(class, 1.0 / horizon as f64)?;
    ExpWeights::over_cover(&cover, class.action_count())
}

/// Halving over a finite version space. Predicts the plurality vote,
/// lowest action index on ties.
#[derive(Debug, Clone)]
pub struct Halving {
    policies: Arc<Vec<Policy>>,
    action_count: usize,
    version_space: Vec<usize>,
    mistakes: usize,
    realizability_violated: bool,
}

impl Halving {
    pub fn new(policies: Vec<Policy>, action_count: usize) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::InvalidArgument("halving needs a non-empty class".into()));
        }
        if action_count < 2 {
            return Err(Error::InvalidArgument("need at least two actions".into()));
        }
        let version_space = (0..policies.len()).collect();
        Ok(Self {
            policies: Arc::new(policies),
            action_count,
            version_space,
            mistakes: 0,
            realizability_violated: false,
        })
    }

    pub fn from_class(class: &PolicyClass) -> Result<Self> {
        match class {
            PolicyClass::Finite { policies, action_count } => Self::new(policies.clone(), *action_count),
            _ => Err(Error::Capability("halving needs an explicit finite class".into())),
        }
    }

    pub fn predict(&self, state: &State) -> ActionId {
        let mut votes = vec![0usize; self.action_count];
        for &i in &self.version_space {
            votes[self.policies[i].evaluate(state).0] += 1;
        }
        let mut best = 0;
        for (a, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = a;
            }
        }
        ActionId(best)
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn version_space(&self) -> &[usize] {
        &self.version_space
    }

    pub fn mistakes(&self) -> usize {
        self.mistakes
    }

    /// Set once feedback contradicted every remaining policy.
    pub fn realizability_violated(&self) -> bool {
        self.realizability_violated
    }
}

impl ActiveAlgorithm for Halving {
    fn action_count(&self) -> usize {
        self.action_count
    }

    fn flags(&self) -> Flags {
        Flags { full_feedback: true, query_agnostic: true }
    }

    fn decide_query(&mut self, _state: &State, _rng: &mut AlgorithmRng) -> Result<bool> {
        Ok(true)
    }

    fn choose_action(
        &mut self,
        state: &State,
        _feedback: Option<ActionId>,
        _rng: &mut AlgorithmRng,
    ) -> Result<ActionId> {
        Ok(self.predict(state))
    }

    fn observe(&mut self, step: &Step) -> Result<()> {
        let Some(mentor) = step.mentor_feedback else {
            return Ok(());
        };
        if self.predict(&step.state) != mentor {
            self.mistakes += 1;
        }
        let policies = &self.policies;
        let kept: Vec<usize> = self
            .version_space
            .iter()
            .copied()
            .filter(|&i| policies[i].evaluate(&step.state) == mentor)
            .collect();
        if kept.is_empty() {
            self.realizability_violated = true;
            self.version_space.truncate(1);
        } else {
            self.version_space = kept;
        }
        Ok(())
    }

    fn query_probability(&self, _state: &State) -> Option<f64> {
        Some(1.0)
    }

    fn action_distribution(&self, state: &State, _feedback: Option<ActionId>) -> Option<Vec<f64>> {
        let mut d = vec![0.0; self.action_count];
        d[self.predict(state).0] = 1.0;
        Some(d)
    }

    fn box_clone(&self) -> Box<dyn ActiveAlgorithm> {
        Box::new(self.clone())
    }

    fn diagnostics(&self) -> BTreeMap<&'static str, f64> {
        BTreeMap::from([
            ("version_space", self.version_space.len() as f64),
            ("mistakes", self.mistakes as f64),
        ])
    }
}

/// Multi-action learner built from one binary learner per action; copy `a`
/// learns `1(a^m = a)`.
#[derive(Clone)]
pub struct OneVsRest {
    copies: Vec<Box<dyn ActiveAlgorithm>>,
    pending: Vec<ActionId>,
    mistakes: usize,
}

impl OneVsRest {
    pub fn new<F>(action_count: usize, mut factory: F) -> Result<Self>
    where
        F: FnMut(ActionId) -> Result<Box<dyn ActiveAlgorithm>>,
    {
        if action_count < 2 {
            return Err(Error::InvalidArgument("one-vs-rest needs at least two actions".into()));
        }
        let copies = (0..action_count)
            .map(|a| factory(ActionId(a)))
            .collect::<Result<Vec<_>>>()?;
        for c in &copies {
            let flags = c.flags();
            if c.action_count() != 2 || !flags.full_feedback || !flags.query_agnostic {
                return Err(Error::Contract(
                    "one-vs-rest copies must be binary, full-feedback and query-agnostic".into(),
                ));
            }
        }
        Ok(Self { copies, pending: Vec::new(), mistakes: 0 })
    }

    /// Halving copies over the indicator classes of a finite class.
    pub fn halving(policies: &[Policy], action_count: usize) -> Result<Self> {
        Self::new(action_count, |a| {
            let indicators = policies
                .iter()
                .map(|p| Policy::Indicator { base: Box::new(p.clone()), target: a })
                .collect();
            Ok(Box::new(Halving::new(indicators, 2)?) as Box<dyn ActiveAlgorithm>)
        })
    }

    fn combine(votes: &[ActionId]) -> ActionId {
        votes
            .iter()
            .position(|v| v.0 == 1)
            .map(ActionId)
            .unwrap_or(ActionId(0))
    }

    pub fn mistakes(&self) -> usize {
        self.mistakes
    }
}

impl ActiveAlgorithm for OneVsRest {
    fn action_count(&self) -> usize {
        self.copies.len()
    }

    fn flags(&self) -> Flags {
        Flags { full_feedback: true, query_agnostic: true }
    }

    fn decide_query(&mut self, _state: &State, _rng: &mut AlgorithmRng) -> Result<bool> {
        Ok(true)
    }

    fn choose_action(
        &mut self,
        state: &State,
        _feedback: Option<ActionId>,
        rng: &mut AlgorithmRng,
    ) -> Result<ActionId> {
        self.pending = self
            .copies
            .iter_mut()
            .map(|c| c.choose_action(state, None, rng))
            .collect::<Result<_>>()?;
        Ok(Self::combine(&self.pending))
    }

    fn observe(&mut self, step: &Step) -> Result<()> {
        let Some(mentor) = step.mentor_feedback else {
            return Ok(());
        };
        if step.action != mentor {
            self.mistakes += 1;
        }
        for (a, copy) in self.copies.iter_mut().enumerate() {
            let own = self.pending.get(a).copied().unwrap_or(ActionId(0));
            copy.observe(&Step {
                state: step.state.clone(),
                action: own,
                mentor_feedback: Some(ActionId(usize::from(mentor.0 == a))),
            })?;
        }
        Ok(())
    }

    fn query_probability(&self, _state: &State) -> Option<f64> {
        Some(1.0)
    }

    fn action_distribution(&self, state: &State, _feedback: Option<ActionId>) -> Option<Vec<f64>> {
        let k = self.copies.len();
        if k > 16 {
            return None;
        }
        let marginals: Vec<f64> = self
            .copies
            .iter()
            .map(|c| c.action_distribution(state, None).map(|d| d[1]))
            .collect::<Option<_>>()?;
        let mut dist = vec![0.0; k];
        for mask in 0u32..(1 << k) {
            let mut p = 1.0;
            for (a, &m) in marginals.iter().enumerate() {
                p *= if mask & (1 << a) != 0 { m } else { 1.0 - m };
            }
            let winner = if mask == 0 { 0 } else { mask.trailing_zeros() as usize };
            dist[winner] += p;
        }
        Some(dist)
    }

    fn branches(&self, _state: &State, _mentor: ActionId) -> Option<Vec<crate::protocol::Branch>> {
        // successors depend on every copy's own draw, not only the combined action
        None
    }

    fn box_clone(&self) -> Box<dyn ActiveAlgorithm> {
        Box::new(self.clone())
    }

    fn diagnostics(&self) -> BTreeMap<&'static str, f64> {
        BTreeMap::from([("mistakes", self.mistakes as f64)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{run_protocol, Adversary, History};
    use crate::rng::StreamRng;

    fn s(x: f64) -> State {
        State::scalar(x)
    }

    fn feed(alg: &mut dyn ActiveAlgorithm, x: f64, mentor: usize) -> ActionId {
        let mut rng = AlgorithmRng::from_seed(0);
        let a = alg.choose_action(&s(x), None, &mut rng).unwrap();
        alg.observe(&Step { state: s(x), action: a, mentor_feedback: Some(ActionId(mentor)) })
            .unwrap();
        a
    }

    struct UniformThreshold {
        theta: f64,
    }

    impl Adversary for UniformThreshold {
        fn action_count(&self) -> usize {
            2
        }
        fn next(&mut self, _h: &History, rng: &mut StreamRng) -> Result<(State, ActionId)> {
            let x: f64 = rng.gen();
            Ok((s(x), Policy::threshold(self.theta).evaluate(&s(x))))
        }
    }

    #[test]
    fn threshold_cover_at_half() {
        let cover = epsilon_cover(&PolicyClass::Thresholds, 0.5).unwrap();
        let thetas: Vec<f64> = cover
            .policies
            .iter()
            .map(|p| match p {
                Policy::Threshold { theta, .. } => *theta,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(thetas, vec![0.0, 0.5, 1.0]);
        assert!(cover.policies.len() as f64 <= cover.size_bound());
        assert_eq!(cover.size_bound(), 82.0);
    }

    #[test]
    fn cover_edge_cases() {
        assert_eq!(epsilon_cover(&PolicyClass::Thresholds, 1.0).unwrap().policies.len(), 1);
        assert_eq!(epsilon_cover(&PolicyClass::Thresholds, 3.0).unwrap().policies.len(), 1);
        let fin = PolicyClass::Finite {
            policies: vec![Policy::Constant(ActionId(0)), Policy::Constant(ActionId(1))],
            action_count: 2,
        };
        assert_eq!(epsilon_cover(&fin, 0.1).unwrap().policies.len(), 2);
        assert!(epsilon_cover(&PolicyClass::Thresholds, 0.0).is_err());
    }

    #[test]
    fn disagreement_examples() {
        let d = disagreement(&Policy::threshold(0.2), &Policy::threshold(0.7)).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        let a = Policy::Threshold { axis: 0, theta: 0.5 };
        let b = Policy::Threshold { axis: 1, theta: 0.5 };
        assert!((disagreement(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(disagreement(&Policy::Constant(ActionId(1)), &Policy::threshold(0.0)), Some(0.0));
    }

    #[test]
    fn single_expert_is_followed() {
        let mut ew = ExpWeights::new(vec![Policy::threshold(0.5)], 2, 1.0).unwrap();
        for (i, x) in [0.1, 0.9, 0.4, 0.6].into_iter().enumerate() {
            let a = feed(&mut ew, x, i % 2);
            assert_eq!(a, Policy::threshold(0.5).evaluate(&s(x)));
        }
        assert_eq!(ew.cumulative_expected_loss(), ew.best_expert_loss());
    }

    #[test]
    fn identical_experts_share_loss() {
        let p = Policy::threshold(0.3);
        let mut ew = ExpWeights::new(vec![p.clone(), p.clone(), p], 2, 1.0).unwrap();
        for x in [0.1, 0.2, 0.8, 0.5] {
            feed(&mut ew, x, 0);
        }
        assert!((ew.cumulative_expected_loss() - ew.best_expert_loss()).abs() < 1e-12);
    }

    /// Oracle for two experts, one perfect: the wrong expert's weight after
    /// j mistakes is e^{-j}/(1+e^{-j}), so the expected loss is the sum of
    /// those terms over the steps where the experts disagree.
    #[test]
    fn two_experts_one_perfect() {
        let mut ew = ExpWeights::new(vec![Policy::Constant(ActionId(0)), Policy::Constant(ActionId(1))], 2, 1.0)
            .unwrap();
        for t in 0..100 {
            feed(&mut ew, t as f64 / 100.0, 0);
        }
        let oracle: f64 = (0..100).map(|j| (-(j as f64)).exp() / (1.0 + (-(j as f64)).exp())).sum();
        assert!((ew.cumulative_expected_loss() - oracle).abs() < 1e-12);
        // frozen value of the oracle
        assert!((oracle - 0.964_163_515_761_259_4).abs() < 1e-12, "{oracle}");
        let e = std::f64::consts::E;
        assert!(ew.cumulative_expected_loss() <= e / (e - 1.0) * 2f64.ln());
    }

    #[test]
    fn threshold_fast_path_matches_direct_sum() {
        let cover = epsilon_cover(&PolicyClass::AxisThresholds { dim: 2 }, 0.1).unwrap();
        let mut ew = ExpWeights::over_cover(&cover, 2).unwrap();
        let mentor = Policy::Threshold { axis: 1, theta: 0.35 };
        let mut rng = crate::rng::aux_stream(3);
        for _ in 0..40 {
            let st = State::new(vec![rng.gen(), rng.gen()]).unwrap();
            let fast = ew.distribution(&st);
            let mut slow = [0.0; 2];
            for (p, w) in ew.policies().iter().zip(ew.weights()) {
                slow[p.evaluate(&st).0] += w;
            }
            assert!((fast[1] - slow[1]).abs() < 1e-12);
            let m = mentor.evaluate(&st);
            ew.observe(&Step { state: st, action: ActionId(0), mentor_feedback: Some(m) }).unwrap();
        }
    }

    #[test]
    fn realizable_smooth_at_horizon_one() {
        let ew = realizable_smooth_learner(&PolicyClass::Thresholds, 1).unwrap();
        assert_eq!(ew.policies().len(), 1);
    }

    #[test]
    fn realizable_smooth_threshold_loss() {
        let mut ew = realizable_smooth_learner(&PolicyClass::Thresholds, 1024).unwrap();
        let trace = run_protocol(&mut ew, &mut UniformThreshold { theta: 0.37 }, 1024, 5).unwrap();
        let e = std::f64::consts::E;
        let constant = e / (e - 1.0) * ((41.0f64 * 1024.0).ln() + 1.0);
        assert!(trace.total_loss() <= constant * (1024f64.ln() + 1.0));
    }

    #[test]
    fn halving_single_policy_never_errs() {
        let mut h = Halving::new(vec![Policy::threshold(0.5)], 2).unwrap();
        let trace = run_protocol(&mut h, &mut UniformThreshold { theta: 0.5 }, 50, 2).unwrap();
        assert_eq!(trace.total_loss(), 0.0);
    }

    #[test]
    fn halving_four_thresholds() {
        let policies: Vec<Policy> = [0.0, 0.25, 0.5, 0.75].into_iter().map(Policy::threshold).collect();
        for seed in 0..20 {
            let mut h = Halving::new(policies.clone(), 2).unwrap();
            let trace = run_protocol(&mut h, &mut GridThreshold { theta: 0.5 }, 50, seed).unwrap();
            assert!(trace.total_loss() <= 2.0);
            assert!(!h.realizability_violated());
        }
    }

    struct GridThreshold {
        theta: f64,
    }

    impl Adversary for GridThreshold {
        fn action_count(&self) -> usize {
            2
        }
        fn next(&mut self, _h: &History, rng: &mut StreamRng) -> Result<(State, ActionId)> {
            let x = [0.1, 0.3, 0.6, 0.9][rng.gen_range(0..4)];
            Ok((s(x), Policy::threshold(self.theta).evaluate(&s(x))))
        }
    }

    #[test]
    fn halving_fallback_on_contradiction() {
        let mut h = Halving::new(vec![Policy::Constant(ActionId(0)), Policy::Constant(ActionId(0))], 2).unwrap();
        feed(&mut h, 0.0, 1);
        assert!(h.realizability_violated());
        assert_eq!(h.version_space(), &[0]);
    }

    #[test]
    fn one_vs_rest_combine_rule() {
        assert_eq!(OneVsRest::combine(&[ActionId(0), ActionId(1), ActionId(0)]), ActionId(1));
        assert_eq!(OneVsRest::combine(&[ActionId(0), ActionId(1), ActionId(1)]), ActionId(1));
        assert_eq!(OneVsRest::combine(&[ActionId(0), ActionId(0), ActionId(0)]), ActionId(0));
    }

    /// Copies 0 and 1 both err at the first step only; copy 2 never errs.
    #[test]
    fn one_vs_rest_mistake_sum() {
        let table = |actions: [usize; 2]| {
            Policy::lookup(vec![(vec![0.0], ActionId(actions[0])), (vec![1.0], ActionId(actions[1]))])
        };
        // truth: state 0 -> action 2, state 1 -> action 0
        let truth = table([2, 0]);
        let wrong = table([0, 0]);
        let mut ovr = OneVsRest::new(3, |a| {
            let ps = match a.0 {
                0 | 1 => vec![
                    Policy::Indicator { base: Box::new(wrong.clone()), target: a },
                    Policy::Indicator { base: Box::new(truth.clone()), target: a },
                ],
                _ => vec![Policy::Indicator { base: Box::new(truth.clone()), target: a }],
            };
            Ok(Box::new(Halving::new(ps, 2)?) as Box<dyn ActiveAlgorithm>)
        })
        .unwrap();
        for x in [0.0, 1.0, 0.0, 1.0, 0.0] {
            let m = truth.evaluate(&s(x));
            feed(&mut ovr, x, m.0);
        }
        assert!(ovr.mistakes() <= 2);
    }

    #[test]
    fn one_vs_rest_perfect_copies() {
        let truth = Policy::lookup(vec![(vec![0.0], ActionId(2)), (vec![1.0], ActionId(1)), (vec![2.0], ActionId(0))]);
        let mut ovr = OneVsRest::halving(&[truth.clone()], 3).unwrap();
        for x in [0.0, 1.0, 2.0, 1.0] {
            let a = feed(&mut ovr, x, truth.evaluate(&s(x)).0);
            assert_eq!(a, truth.evaluate(&s(x)));
        }
        assert_eq!(ovr.mistakes(), 0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn weights_stay_normalised(
                xs in proptest::collection::vec(0.0f64..1.0, 1..60),
                theta in 0.0f64..1.0,
                eps in 0.01f64..0.5,
            ) {
                let cover = epsilon_cover(&PolicyClass::Thresholds, eps).unwrap();
                let mut ew = ExpWeights::over_cover(&cover, 2).unwrap();
                for x in xs {
                    let total: f64 = ew.weights().iter().sum();
                    prop_assert!((total - 1.0).abs() < 1e-12);
                    prop_assert!(ew.weights().iter().all(|w| *w >= 0.0));
                    let d = ew.distribution(&s(x));
                    prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    let m = Policy::threshold(theta).evaluate(&s(x));
                    ew.observe(&Step { state: s(x), action: ActionId(0), mentor_feedback: Some(m) }).unwrap();
                }
                prop_assert!(ew.cumulative_expected_loss() <= ew.small_loss_bound() + 1e-9);
            }

            #[test]
            fn threshold_cover_is_sound(eps in 0.001f64..1.5, theta in -0.2f64..1.2) {
                let cover = epsilon_cover(&PolicyClass::Thresholds, eps).unwrap();
                prop_assert!(cover.policies.len() as f64 <= cover.size_bound());
                let member = Policy::threshold(theta);
                let best = cover
                    .policies
                    .iter()
                    .map(|p| disagreement(&member, p).unwrap())
                    .fold(f64::INFINITY, f64::min);
                prop_assert!(best <= eps.min(1.0) + 1e-12);
            }

            #[test]
            fn axis_cover_is_sound(eps in 0.01f64..1.0, dim in 1usize..4, axis_seed in 0usize..100, theta in 0.0f64..1.0) {
                let class = PolicyClass::AxisThresholds { dim };
                let cover = epsilon_cover(&class, eps).unwrap();
                prop_assert!(cover.policies.len() as f64 <= cover.size_bound());
                let member = Policy::Threshold { axis: axis_seed % dim, theta };
                let best = cover
                    .policies
                    .iter()
                    .map(|p| disagreement(&member, p).unwrap())
                    .fold(f64::INFINITY, f64::min);
                prop_assert!(best <= eps + 1e-12);
            }

            #[test]
            fn halving_version_space_shrinks(
                thetas in proptest::collection::vec(0.0f64..1.0, 1..12),
                target in 0usize..12,
                xs in proptest::collection::vec(0.0f64..1.0, 1..40),
            ) {
                let policies: Vec<Policy> = thetas.iter().copied().map(Policy::threshold).collect();
                let truth = policies[target % policies.len()].clone();
                let mut h = Halving::new(policies.clone(), 2).unwrap();
                let bound = (policies.len() as f64).log2().ceil() as usize;
                for x in xs {
                    let before = h.version_space().len();
                    let predicted = h.predict(&s(x));
                    let m = truth.evaluate(&s(x));
                    h.observe(&Step { state: s(x), action: predicted, mentor_feedback: Some(m) }).unwrap();
                    let after = h.version_space().len();
                    prop_assert!(after <= before);
                    if predicted != m {
                        prop_assert!(2 * after <= before);
                    }
                }
                prop_assert!(h.mistakes() <= bound);
                prop_assert!(!h.realizability_violated());
            }
        }
    }
}
