//! Environments: MDPs with a mentor, survival-probability sequences and
//! smooth adversaries.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experts::Policy;
use crate::protocol::{ActionId, Adversary, History, State, TabularAdversary};
use crate::rng::{self, StreamRng};

/// A measurable test set for exact kernel evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TestSet {
    All,
    Empty,
    /// A finite set of points, matched coordinate-wise.
    Points(Vec<State>),
    /// Closed axis-aligned box.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Complement(Box<TestSet>),
}

impl TestSet {
    pub fn contains(&self, s: &State) -> bool {
        match self {
            TestSet::All => true,
            TestSet::Empty => false,
            TestSet::Points(ps) => ps.iter().any(|p| p == s),
            TestSet::Box { lo, hi } => s
                .coords()
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(x, (l, h))| l <= x && x <= h),
            TestSet::Complement(inner) => !inner.contains(s),
        }
    }
}

fn support_mass(support: &[(State, f64)], set: &TestSet) -> f64 {
    support.iter().filter(|(s, _)| set.contains(s)).map(|(_, p)| p).sum()
}

fn support_tv(p: &[(State, f64)], q: &[(State, f64)]) -> f64 {
    let mut points: Vec<&State> = p.iter().chain(q).map(|(s, _)| s).collect();
    points.dedup();
    let mut seen: Vec<&State> = Vec::new();
    let mut total = 0.0;
    for s in points {
        if seen.contains(&s) {
            continue;
        }
        seen.push(s);
        let a: f64 = p.iter().filter(|(x, _)| x == s).map(|(_, w)| w).sum();
        let b: f64 = q.iter().filter(|(x, _)| x == s).map(|(_, w)| w).sum();
        total += (a - b).abs();
    }
    total / 2.0
}

/// An episodic MDP with a mentor policy.
pub trait MdpInstance: Send + Sync {
    fn dim(&self) -> usize;

    fn action_count(&self) -> usize;

    fn sample_initial(&self, rng: &mut StreamRng) -> State;

    fn sample_transition(&self, s: &State, a: ActionId, rng: &mut StreamRng) -> State;

    fn mentor(&self, s: &State) -> ActionId;

    /// Reward in `[0,1]`.
    fn reward(&self, s: &State, a: ActionId) -> f64;

    /// Declared local-generalization constant `L`.
    fn lipschitz(&self) -> f64;

    /// Declared smoothness `σ` (0 for deterministic kernels).
    fn sigma(&self) -> f64;

    /// A state drawn from the domain, used by the local-generalization verifier.
    fn sample_domain_state(&self, rng: &mut StreamRng) -> State;

    /// Absorbing failure state (reward 0 forever).
    fn is_catastrophe(&self, s: &State) -> bool;

    /// The mentor as a policy, when it has a closed form.
    fn mentor_policy(&self) -> Option<Policy> {
        None
    }

    /// Finite support of `D1`, if any.
    fn initial_support(&self) -> Option<Vec<(State, f64)>> {
        None
    }

    /// Finite support of `P(s, a)`, if any.
    fn transition_support(&self, _s: &State, _a: ActionId) -> Option<Vec<(State, f64)>> {
        None
    }

    /// `P(s, a, X)`.
    fn transition_mass(&self, s: &State, a: ActionId, set: &TestSet) -> Result<f64> {
        let support = self
            .transition_support(s, a)
            .ok_or_else(|| Error::Capability("no exact kernel evaluator".into()))?;
        Ok(support_mass(&support, set))
    }

    /// `||P(s, a) - P(s, b)||_TV`.
    fn transition_tv(&self, s: &State, a: ActionId, b: ActionId) -> Result<f64> {
        match (self.transition_support(s, a), self.transition_support(s, b)) {
            (Some(p), Some(q)) => Ok(support_tv(&p, &q)),
            _ => Err(Error::Capability("no exact total-variation evaluator".into())),
        }
    }

    /// `||P(s, π^m(s)) - P(s, π^m(s'))||_TV`.
    fn mentor_tv(&self, s: &State, s2: &State) -> Result<f64> {
        self.transition_tv(s, self.mentor(s), self.mentor(s2))
    }
}

/// Three states on a line: Start at 0, Heaven at +1, Hell at −1. From Start,
/// action 0 leads to Heaven and action 1 to Hell; both are absorbing. Reward
/// is 1 in Heaven and 0 elsewhere. The mentor always plays action 0.
#[derive(Debug, Clone)]
pub struct HeavenHell {
    horizon: usize,
}

impl HeavenHell {
    pub const START: f64 = 0.0;
    pub const HEAVEN: f64 = 1.0;
    pub const HELL: f64 = -1.0;

    pub fn new(horizon: usize) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::InvalidArgument("Heaven-or-Hell needs T >= 2".into()));
        }
        Ok(Self { horizon })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn states() -> [State; 3] {
        [State::scalar(Self::START), State::scalar(Self::HEAVEN), State::scalar(Self::HELL)]
    }

    /// All eight deterministic policies on the three states.
    pub fn tabular_class() -> Vec<Policy> {
        (0..8usize)
            .map(|bits| {
                Policy::lookup(
                    [Self::START, Self::HEAVEN, Self::HELL]
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| (vec![x], ActionId((bits >> i) & 1)))
                        .collect(),
                )
            })
            .collect()
    }

    fn next(&self, s: &State, a: ActionId) -> State {
        if s.coords()[0] == Self::START {
            State::scalar(if a.0 == 0 { Self::HEAVEN } else { Self::HELL })
        } else {
            s.clone()
        }
    }
}

pub fn heaven_hell(horizon: usize) -> Result<HeavenHell> {
    HeavenHell::new(horizon)
}

impl MdpInstance for HeavenHell {
    fn dim(&self) -> usize {
        1
    }

    fn action_count(&self) -> usize {
        2
    }

    fn sample_initial(&self, _rng: &mut StreamRng) -> State {
        State::scalar(Self::START)
    }

    fn sample_transition(&self, s: &State, a: ActionId, _rng: &mut StreamRng) -> State {
        self.next(s, a)
    }

    fn mentor(&self, _s: &State) -> ActionId {
        ActionId(0)
    }

    fn reward(&self, s: &State, _a: ActionId) -> f64 {
        if s.coords()[0] == Self::HEAVEN {
            1.0
        } else {
            0.0
        }
    }

    fn lipschitz(&self) -> f64 {
        1.0
    }

    fn sigma(&self) -> f64 {
        0.0
    }

    fn sample_domain_state(&self, rng: &mut StreamRng) -> State {
        Self::states()[rng.gen_range(0..3)].clone()
    }

    fn is_catastrophe(&self, s: &State) -> bool {
        s.coords()[0] == Self::HELL
    }

    fn mentor_policy(&self) -> Option<Policy> {
        Some(Policy::Constant(ActionId(0)))
    }

    fn initial_support(&self) -> Option<Vec<(State, f64)>> {
        Some(vec![(State::scalar(Self::START), 1.0)])
    }

    fn transition_support(&self, s: &State, a: ActionId) -> Option<Vec<(State, f64)>> {
        Some(vec![(self.next(s, a), 1.0)])
    }
}

/// Which per-step target set defines the survival probabilities of a cliff line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CliffTarget {
    /// Land within `w/2` of the mentor's threshold in the first coordinate.
    Band,
    /// Stay alive.
    Survival,
}

/// A continuous irreversible MDP on `[0,1]^n` plus an absorbing Dead state.
///
/// With `w = σ^{1/n}`, the next state is uniform on a box of side `w` centred
/// at the current state displaced by `∓ w/2 · g(s)` in the first coordinate,
/// where `g(s) = min(1, L |s_1 − θ|)`. Box mass below 0 in the first
/// coordinate goes to Dead. Action 1 moves toward the cliff at 0 and action 0
/// retreats. The mentor plays action 1 iff `s_1 >= θ`, which pulls the state
/// toward `θ` and keeps the box at least `w/2` above the cliff.
#[derive(Debug, Clone)]
pub struct CliffLine {
    n: usize,
    lipschitz: f64,
    sigma: f64,
    horizon: usize,
    width: f64,
    step: f64,
    ramp: f64,
    theta: f64,
}

impl CliffLine {
    pub fn new(n: usize, lipschitz: f64, sigma: f64, horizon: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Construction("cliff line needs n >= 1".into()));
        }
        if !(sigma > 0.0 && sigma <= 1.0) {
            return Err(Error::Construction(format!("sigma = {sigma} must lie in (0, 1]")));
        }
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::Construction(format!("L = {lipschitz} must be positive")));
        }
        let width = sigma.powf(1.0 / n as f64);
        let ramp = 1.0 / lipschitz;
        let theta = ramp.max(width) + width / 2.0;
        if theta + width / 2.0 > 1.0 {
            return Err(Error::Construction(format!(
                "infeasible: max(1/L, w) + w = {} exceeds 1 (w = sigma^(1/n) = {width}, L = {lipschitz})",
                theta + width / 2.0
            )));
        }
        Ok(Self { n, lipschitz, sigma, horizon, width, step: width / 2.0, ramp, theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dead(&self) -> State {
        let mut c = vec![0.0; self.n];
        c[0] = -1.0;
        State::new(c).expect("finite")
    }

    fn is_dead(&self, s: &State) -> bool {
        s.coords()[0] < 0.0
    }

    fn gain(&self, x: f64) -> f64 {
        ((x - self.theta).abs() / self.ramp).min(1.0)
    }

    /// Centre of the next-state box, or `None` from Dead.
    fn centre(&self, s: &State, a: ActionId) -> Option<Vec<f64>> {
        if self.is_dead(s) {
            return None;
        }
        let half = self.width / 2.0;
        let mut c: Vec<f64> = s.coords().iter().map(|&x| x.clamp(half, 1.0 - half)).collect();
        let x = s.coords()[0];
        let shift = self.step * self.gain(x);
        c[0] = if a.0 == 1 { x - shift } else { x + shift }.min(1.0 - half);
        Some(c)
    }

    /// Mass sent to Dead and the live interval in the first coordinate.
    fn first_axis(&self, c0: f64) -> (f64, f64, f64) {
        let lo = c0 - self.width / 2.0;
        let hi = c0 + self.width / 2.0;
        let dead = ((-lo).max(0.0) / self.width).min(1.0);
        (dead, lo.max(0.0), hi.max(0.0))
    }

    /// The test sets behind the survival probabilities.
    pub fn target(&self, kind: CliffTarget) -> TestSet {
        match kind {
            CliffTarget::Band => {
                let mut lo = vec![0.0; self.n];
                let mut hi = vec![1.0; self.n];
                lo[0] = self.theta - self.width / 2.0;
                hi[0] = self.theta + self.width / 2.0;
                TestSet::Box { lo, hi }
            }
            CliffTarget::Survival => TestSet::Box { lo: vec![0.0; self.n], hi: vec![1.0; self.n] },
        }
    }
}

pub fn cliff_line(n: usize, lipschitz: f64, sigma: f64, horizon: usize) -> Result<CliffLine> {
    CliffLine::new(n, lipschitz, sigma, horizon)
}

impl MdpInstance for CliffLine {
    fn dim(&self) -> usize {
        self.n
    }

    fn action_count(&self) -> usize {
        2
    }

    fn sample_initial(&self, rng: &mut StreamRng) -> State {
        let half = self.width / 2.0;
        let coords = (0..self.n)
            .map(|i| {
                let centre = if i == 0 { self.theta } else { 0.5 };
                centre - half + self.width * rng.gen::<f64>()
            })
            .collect();
        State::new(coords).expect("finite")
    }

    fn sample_transition(&self, s: &State, a: ActionId, rng: &mut StreamRng) -> State {
        // always draw n uniforms so coupled runs stay in step
        let u: Vec<f64> = (0..self.n).map(|_| rng.gen::<f64>()).collect();
        let Some(c) = self.centre(s, a) else {
            return self.dead();
        };
        let coords: Vec<f64> = c.iter().zip(&u).map(|(ci, ui)| ci - self.width / 2.0 + self.width * ui).collect();
        if coords[0] < 0.0 {
            self.dead()
        } else {
            State::new(coords).expect("finite")
        }
    }

    fn mentor(&self, s: &State) -> ActionId {
        ActionId(usize::from(s.coords()[0] >= self.theta))
    }

    fn reward(&self, s: &State, _a: ActionId) -> f64 {
        if self.is_dead(s) {
            0.0
        } else {
            (1.0 - (s.coords()[0] - self.theta).abs()).max(0.0)
        }
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn sample_domain_state(&self, rng: &mut StreamRng) -> State {
        State::new((0..self.n).map(|_| rng.gen::<f64>()).collect()).expect("finite")
    }

    fn is_catastrophe(&self, s: &State) -> bool {
        self.is_dead(s)
    }

    fn mentor_policy(&self) -> Option<Policy> {
        Some(Policy::Threshold { axis: 0, theta: self.theta })
    }

    fn transition_mass(&self, s: &State, a: ActionId, set: &TestSet) -> Result<f64> {
        let dead = self.dead();
        let Some(c) = self.centre(s, a) else {
            return Ok(if set.contains(&dead) { 1.0 } else { 0.0 });
        };
        Ok(match set {
            TestSet::All => 1.0,
            TestSet::Empty => 0.0,
            TestSet::Complement(inner) => 1.0 - self.transition_mass(s, a, inner)?,
            TestSet::Points(_) => {
                let (dead_mass, _, _) = self.first_axis(c[0]);
                if set.contains(&dead) {
                    dead_mass
                } else {
                    0.0
                }
            }
            TestSet::Box { lo, hi } => {
                let (dead_mass, live_lo, live_hi) = self.first_axis(c[0]);
                let mut live = 1.0;
                for i in 0..self.n {
                    let (blo, bhi) = if i == 0 {
                        (live_lo, live_hi)
                    } else {
                        (c[i] - self.width / 2.0, c[i] + self.width / 2.0)
                    };
                    let overlap = (bhi.min(hi[i]) - blo.max(lo[i])).max(0.0);
                    live *= (overlap / self.width).min(1.0);
                }
                (live + if set.contains(&dead) { dead_mass } else { 0.0 }).clamp(0.0, 1.0)
            }
        })
    }

    fn transition_tv(&self, s: &State, a: ActionId, b: ActionId) -> Result<f64> {
        let (Some(ca), Some(cb)) = (self.centre(s, a), self.centre(s, b)) else {
            return Ok(0.0);
        };
        let (da, la, ha) = self.first_axis(ca[0]);
        let (db, lb, hb) = self.first_axis(cb[0]);
        let overlap = (ha.min(hb) - la.max(lb)).max(0.0);
        let live = ((ha - la) + (hb - lb) - 2.0 * overlap) / self.width;
        Ok(0.5 * (live + (da - db).abs()))
    }
}

/// A small random MDP on integer-coordinate states `0..|S|` with dyadic
/// transition probabilities. Used by the exact-oracle cross-checks.
#[derive(Debug, Clone)]
pub struct TinyMdp {
    states: Vec<State>,
    actions: usize,
    initial: Vec<f64>,
    /// `kernel[s][a][s']`
    kernel: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<f64>>,
    mentor: Vec<ActionId>,
}

fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    // eighths keep the enumeration exact in binary floating point
    let mut counts = vec![0u32; n];
    for _ in 0..8 {
        counts[rng.gen_range(0..n)] += 1;
    }
    counts.into_iter().map(|c| c as f64 / 8.0).collect()
}

impl TinyMdp {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, states: usize, actions: usize) -> Result<Self> {
        if !(1..=4).contains(&states) || !(2..=3).contains(&actions) {
            return Err(Error::Capability("tiny MDPs have at most 4 states and 2-3 actions".into()));
        }
        let kernel = (0..states)
            .map(|_| (0..actions).map(|_| random_simplex(rng, states)).collect())
            .collect();
        let rewards = (0..states)
            .map(|_| (0..actions).map(|_| (rng.gen_range(0..=4) as f64) / 4.0).collect())
            .collect();
        let mentor = (0..states).map(|_| ActionId(rng.gen_range(0..actions))).collect();
        Ok(Self {
            states: (0..states).map(|i| State::scalar(i as f64)).collect(),
            actions,
            initial: random_simplex(rng, states),
            kernel,
            rewards,
            mentor,
        })
    }

    fn index(&self, s: &State) -> usize {
        (s.coords()[0].round().max(0.0) as usize).min(self.states.len() - 1)
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    fn draw(&self, dist: &[f64], rng: &mut StreamRng) -> State {
        let u: f64 = rng.gen();
        self.states[crate::protocol::sample_index(dist, u)].clone()
    }
}

impl MdpInstance for TinyMdp {
    fn dim(&self) -> usize {
        1
    }

    fn action_count(&self) -> usize {
        self.actions
    }

    fn sample_initial(&self, rng: &mut StreamRng) -> State {
        self.draw(&self.initial, rng)
    }

    fn sample_transition(&self, s: &State, a: ActionId, rng: &mut StreamRng) -> State {
        self.draw(&self.kernel[self.index(s)][a.0], rng)
    }

    fn mentor(&self, s: &State) -> ActionId {
        self.mentor[self.index(s)]
    }

    fn reward(&self, s: &State, a: ActionId) -> f64 {
        self.rewards[self.index(s)][a.0]
    }

    fn lipschitz(&self) -> f64 {
        // distinct states are at least 1 apart and TV is at most 1
        1.0
    }

    fn sigma(&self) -> f64 {
        0.0
    }

    fn sample_domain_state(&self, rng: &mut StreamRng) -> State {
        self.states[rng.gen_range(0..self.states.len())].clone()
    }

    fn is_catastrophe(&self, _s: &State) -> bool {
        false
    }

    fn mentor_policy(&self) -> Option<Policy> {
        Some(Policy::lookup(
            self.states.iter().zip(&self.mentor).map(|(s, a)| (s.coords().to_vec(), *a)).collect(),
        ))
    }

    fn initial_support(&self) -> Option<Vec<(State, f64)>> {
        Some(self.states.iter().cloned().zip(self.initial.iter().copied()).filter(|(_, p)| *p > 0.0).collect())
    }

    fn transition_support(&self, s: &State, a: ActionId) -> Option<Vec<(State, f64)>> {
        let row = &self.kernel[self.index(s)][a.0];
        Some(self.states.iter().cloned().zip(row.iter().copied()).filter(|(_, p)| *p > 0.0).collect())
    }
}

/// The MDP seen as an adversary: `s_1 ~ D1`, `s_{t+1} ~ P(s_t, a_t)`, and the
/// correct action is always `π^m(s_t)`.
#[derive(Clone)]
pub struct MdpAdversary {
    mdp: Arc<dyn MdpInstance>,
}

impl MdpAdversary {
    pub fn new(mdp: Arc<dyn MdpInstance>) -> Self {
        Self { mdp }
    }
}

impl Adversary for MdpAdversary {
    fn action_count(&self) -> usize {
        self.mdp.action_count()
    }

    fn next(&mut self, history: &History, rng: &mut StreamRng) -> Result<(State, ActionId)> {
        let s = match history.last() {
            None => self.mdp.sample_initial(rng),
            Some(step) => self.mdp.sample_transition(&step.state, step.action, rng),
        };
        let a = self.mdp.mentor(&s);
        Ok((s, a))
    }
}

impl TabularAdversary for MdpAdversary {
    fn action_count(&self) -> usize {
        self.mdp.action_count()
    }

    fn distribution(&self, history: &History) -> Vec<(State, ActionId, f64)> {
        let support = match history.last() {
            None => self.mdp.initial_support(),
            Some(step) => self.mdp.transition_support(&step.state, step.action),
        }
        .unwrap_or_default();
        support.into_iter().map(|(s, p)| (s.clone(), self.mdp.mentor(&s), p)).collect()
    }
}

/// The mentor's own trajectory `s_1^m, …, s_T^m`. It draws from the same
/// adversary stream as an agent run with the same seed, so the two are
/// coupled whenever their actions agree.
pub fn mentor_rollout(mdp: &dyn MdpInstance, horizon: usize, seed: u64) -> Result<Vec<State>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut rng = rng::adversary_stream(seed);
    let mut states = Vec::with_capacity(horizon);
    let mut s = mdp.sample_initial(&mut rng);
    for _ in 1..horizon {
        let next = mdp.sample_transition(&s, mdp.mentor(&s), &mut rng);
        states.push(std::mem::replace(&mut s, next));
    }
    states.push(s);
    Ok(states)
}

/// Per-step survival probabilities `μ_t(s, a)`.
pub trait MuSequence: Send + Sync {
    fn horizon(&self) -> usize;

    /// `t` is 0-based.
    fn mu(&self, t: usize, s: &State, a: ActionId) -> f64;

    fn mentor(&self, s: &State) -> ActionId;

    fn mentor_mu(&self, t: usize, s: &State) -> f64 {
        self.mu(t, s, self.mentor(s))
    }

    /// A lower bound on `μ_t(s, a)` over reachable triples.
    fn mu_min(&self) -> f64;

    fn lipschitz(&self) -> f64;
}

/// `μ_i(s, a) = P(s, a, X_i)` for `i < len(targets)`, and 1 afterwards.
#[derive(Clone)]
pub struct MuFromMdp {
    mdp: Arc<dyn MdpInstance>,
    targets: Vec<TestSet>,
    mu_min: f64,
}

pub fn mu_from_mdp(mdp: Arc<dyn MdpInstance>, targets: Vec<TestSet>) -> Result<MuFromMdp> {
    let mut probe_rng = rng::aux_stream(0);
    let probe = mdp.sample_domain_state(&mut probe_rng);
    mdp.transition_mass(&probe, ActionId(0), &TestSet::All)?;
    let mu_min = match mdp.initial_support() {
        // finite instances: exact minimum over the state space
        Some(_) => {
            let mut states: Vec<State> = Vec::new();
            let mut frontier: Vec<State> = mdp.initial_support().unwrap().into_iter().map(|(s, _)| s).collect();
            while let Some(s) = frontier.pop() {
                if states.contains(&s) {
                    continue;
                }
                for a in 0..mdp.action_count() {
                    for (n, _) in mdp.transition_support(&s, ActionId(a)).unwrap_or_default() {
                        frontier.push(n);
                    }
                }
                states.push(s);
            }
            let mut m: f64 = if targets.is_empty() { 1.0 } else { f64::INFINITY };
            for x in &targets {
                for s in &states {
                    for a in 0..mdp.action_count() {
                        m = m.min(mdp.transition_mass(s, ActionId(a), x)?);
                    }
                }
            }
            m.min(1.0)
        }
        None => 0.0,
    };
    Ok(MuFromMdp { mdp, targets, mu_min })
}

impl MuFromMdp {
    /// The same target set at every one of `horizon` steps.
    pub fn constant(mdp: Arc<dyn MdpInstance>, target: TestSet, horizon: usize) -> Result<Self> {
        mu_from_mdp(mdp, vec![target; horizon])
    }
}

impl MuSequence for MuFromMdp {
    fn horizon(&self) -> usize {
        self.targets.len()
    }

    fn mu(&self, t: usize, s: &State, a: ActionId) -> f64 {
        match self.targets.get(t) {
            Some(x) => self.mdp.transition_mass(s, a, x).unwrap_or(0.0).clamp(0.0, 1.0),
            None => 1.0,
        }
    }

    fn mentor(&self, s: &State) -> ActionId {
        self.mdp.mentor(s)
    }

    fn mu_min(&self) -> f64 {
        self.mu_min
    }

    fn lipschitz(&self) -> f64 {
        self.mdp.lipschitz()
    }
}

/// Survival probabilities given by a table over a finite state list.
#[derive(Debug, Clone)]
pub struct TabularMu {
    states: Vec<State>,
    /// `table[t][s][a]`
    table: Vec<Vec<Vec<f64>>>,
    mentor: Vec<ActionId>,
}

impl TabularMu {
    pub fn new(states: Vec<State>, table: Vec<Vec<Vec<f64>>>, mentor: Vec<ActionId>) -> Result<Self> {
        for row in table.iter().flatten().flatten() {
            if !(0.0..=1.0).contains(row) {
                return Err(Error::InvalidArgument(format!("mu value {row} outside [0,1]")));
            }
        }
        if mentor.len() != states.len() || table.iter().any(|t| t.len() != states.len()) {
            return Err(Error::InvalidArgument("table shape does not match the state list".into()));
        }
        Ok(Self { states, table, mentor })
    }

    fn index(&self, s: &State) -> usize {
        self.states.iter().position(|x| x == s).unwrap_or(0)
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }
}

impl MuSequence for TabularMu {
    fn horizon(&self) -> usize {
        self.table.len()
    }

    fn mu(&self, t: usize, s: &State, a: ActionId) -> f64 {
        self.table.get(t).map_or(1.0, |tab| tab[self.index(s)][a.0])
    }

    fn mentor(&self, s: &State) -> ActionId {
        self.mentor[self.index(s)]
    }

    fn mu_min(&self) -> f64 {
        self.table.iter().flatten().flatten().cloned().fold(1.0, f64::min)
    }

    fn lipschitz(&self) -> f64 {
        1.0
    }
}

/// A tiny instance for the additive/multiplicative comparison: a finite state
/// set, an adversary whose state distribution depends on the agent's last
/// action, and a survival table in which the mentor's action is best.
#[derive(Debug, Clone)]
pub struct TinyMuInstance {
    pub states: Vec<State>,
    pub actions: usize,
    /// State distributions after action `a` (index `a`), and at `t = 1` (last index).
    pub dists: Vec<Vec<f64>>,
    pub mu: TabularMu,
}

impl TinyMuInstance {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, states: usize, actions: usize, horizon: usize) -> Result<Self> {
        if !(1..=4).contains(&states) || !(2..=3).contains(&actions) || horizon == 0 || horizon > 6 {
            return Err(Error::Capability("tiny instances have |S| <= 4, |A| <= 3, T <= 6".into()));
        }
        let st: Vec<State> = (0..states).map(|i| State::scalar(i as f64)).collect();
        let mentor: Vec<ActionId> = (0..states).map(|_| ActionId(rng.gen_range(0..actions))).collect();
        let table = (0..horizon)
            .map(|_| {
                (0..states)
                    .map(|s| {
                        let best = rng.gen_range(0.55..=1.0);
                        (0..actions)
                            .map(|a| if a == mentor[s].0 { best } else { rng.gen_range(0.05..=best) })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let dists = (0..=actions).map(|_| random_simplex(rng, states)).collect();
        Ok(Self { states: st.clone(), actions, dists, mu: TabularMu::new(st, table, mentor)? })
    }

    pub fn mentor_policy(&self) -> Policy {
        Policy::lookup(
            self.states.iter().map(|s| (s.coords().to_vec(), self.mu.mentor(s))).collect(),
        )
    }
}

impl TabularAdversary for TinyMuInstance {
    fn action_count(&self) -> usize {
        self.actions
    }

    fn distribution(&self, history: &History) -> Vec<(State, ActionId, f64)> {
        let dist = match history.last() {
            None => &self.dists[self.actions],
            Some(step) => &self.dists[step.action.0],
        };
        self.states
            .iter()
            .zip(dist)
            .filter(|(_, p)| **p > 0.0)
            .map(|(s, p)| (s.clone(), self.mu.mentor(s), *p))
            .collect()
    }
}

impl Adversary for TinyMuInstance {
    fn action_count(&self) -> usize {
        self.actions
    }

    fn next(&mut self, history: &History, rng: &mut StreamRng) -> Result<(State, ActionId)> {
        let support = TabularAdversary::distribution(self, history);
        let weights: Vec<f64> = support.iter().map(|(_, _, p)| *p).collect();
        let i = crate::protocol::sample_index(&weights, rng.gen());
        let (s, a, _) = support[i].clone();
        Ok((s, a))
    }
}

/// An axis-aligned box inside `[0,1]^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn unit(dim: usize) -> Self {
        Self { lo: vec![0.0; dim], hi: vec![1.0; dim] }
    }

    /// A cube of volume `sigma` inside `[0,1]^dim` containing `centre`.
    pub fn around(centre: &[f64], sigma: f64) -> Self {
        let side = sigma.powf(1.0 / centre.len() as f64).min(1.0);
        let lo: Vec<f64> = centre.iter().map(|&c| (c - side / 2.0).clamp(0.0, 1.0 - side)).collect();
        let hi = lo.iter().map(|l| l + side).collect();
        Self { lo, hi }
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l).max(0.0)).product()
    }

    fn validate(&self, sigma: f64) -> Result<()> {
        let inside = self.lo.len() == self.hi.len()
            && self.lo.iter().zip(&self.hi).all(|(l, h)| 0.0 <= *l && l <= h && *h <= 1.0);
        if !inside {
            return Err(Error::InvalidArgument(format!("region {self:?} is not a box inside the unit cube")));
        }
        // tolerate the rounding of `around`
        if self.volume() < sigma * (1.0 - 1e-12) {
            return Err(Error::SmoothnessViolation { measure: self.volume(), sigma });
        }
        Ok(())
    }
}

type AdaptivePlan = Arc<dyn Fn(usize, &History) -> Region + Send + Sync>;

/// How a smooth adversary picks its region at each step.
#[derive(Clone)]
pub enum RegionPlan {
    Fixed(Region),
    /// Cycled by step index.
    Schedule(Vec<Region>),
    Adaptive(AdaptivePlan),
}

/// Draws `s_t` uniformly from a region of measure at least `σ`, so the state
/// density is at most `1/σ` w.r.t. the uniform measure; labels with a fixed
/// mentor policy.
#[derive(Clone)]
pub struct SmoothSequenceAdversary {
    sigma: f64,
    plan: RegionPlan,
    mentor: Policy,
    action_count: usize,
}

impl SmoothSequenceAdversary {
    pub fn new(sigma: f64, plan: RegionPlan, mentor: Policy, action_count: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma <= 1.0) {
            return Err(Error::InvalidArgument(format!("sigma = {sigma} must lie in (0, 1]")));
        }
        match &plan {
            RegionPlan::Fixed(r) => r.validate(sigma)?,
            RegionPlan::Schedule(rs) => {
                if rs.is_empty() {
                    return Err(Error::InvalidArgument("empty region schedule".into()));
                }
                rs.iter().try_for_each(|r| r.validate(sigma))?;
            }
            RegionPlan::Adaptive(_) => {}
        }
        Ok(Self { sigma, plan, mentor, action_count })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mentor(&self) -> &Policy {
        &self.mentor
    }

    /// I.i.d. uniform states on `[0,1]^dim`.
    pub fn uniform(dim: usize, mentor: Policy, action_count: usize) -> Self {
        Self { sigma: 1.0, plan: RegionPlan::Fixed(Region::unit(dim)), mentor, action_count }
    }
}

impl Adversary for SmoothSequenceAdversary {
    fn action_count(&self) -> usize {
        self.action_count
    }

    fn next(&mut self, history: &History, rng: &mut StreamRng) -> Result<(State, ActionId)> {
        let t = history.len();
        let region = match &self.plan {
            RegionPlan::Fixed(r) => r.clone(),
            RegionPlan::Schedule(rs) => rs[t % rs.len()].clone(),
            RegionPlan::Adaptive(f) => {
                let r = f(t, history);
                r.validate(self.sigma)?;
                r
            }
        };
        let coords = region.lo.iter().zip(&region.hi).map(|(l, h)| l + (h - l) * rng.gen::<f64>()).collect();
        let s = State::new(coords)?;
        let a = self.mentor.evaluate(&s);
        Ok((s, a))
    }
}

pub enum Subject<'a> {
    Mdp(&'a dyn MdpInstance),
    /// Checks `|μ_t^m(s) − μ_t(s, π^m(s'))|` at every step `t`.
    Mu { mu: &'a dyn MuSequence, sampler: &'a dyn MdpInstance },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalGeneralizationReport {
    pub max_ratio: f64,
    pub witness: Option<(State, State)>,
    pub pairs: usize,
    pub lipschitz: f64,
    pub pass: bool,
}

/// Sample state pairs at several scales and report the largest
/// `gap / ||s − s'||`. Pairs with `s = s'` are skipped.
pub fn check_local_generalization(
    subject: &Subject<'_>,
    lipschitz: f64,
    num_pairs: usize,
    seed: u64,
) -> Result<LocalGeneralizationReport> {
    let sampler: &dyn MdpInstance = match subject {
        Subject::Mdp(m) => *m,
        Subject::Mu { sampler, .. } => *sampler,
    };
    let mut rng = rng::aux_stream(seed);
    let mut max_ratio: f64 = 0.0;
    let mut witness = None;
    let mut pairs = 0;
    for i in 0..num_pairs {
        let s = sampler.sample_domain_state(&mut rng);
        let s2 = if i % 2 == 0 || sampler.sigma() == 0.0 {
            sampler.sample_domain_state(&mut rng)
        } else {
            // a nearby point, with the radius spread over four decades
            let radius = 10f64.powf(-4.0 * rng.gen::<f64>());
            let coords = s
                .coords()
                .iter()
                .map(|&x| (x + radius * (2.0 * rng.gen::<f64>() - 1.0)).clamp(0.0, 1.0))
                .collect();
            State::new(coords)?
        };
        let dist = s.distance(&s2);
        if dist == 0.0 {
            continue;
        }
        pairs += 1;
        let gap = match subject {
            Subject::Mdp(m) => m.mentor_tv(&s, &s2)?,
            Subject::Mu { mu, .. } => {
                let other = mu.mentor(&s2);
                (0..mu.horizon().max(1))
                    .map(|t| (mu.mentor_mu(t, &s) - mu.mu(t, &s, other)).abs())
                    .fold(0.0, f64::max)
            }
        };
        let ratio = gap / dist;
        if ratio > max_ratio {
            max_ratio = ratio;
            witness = Some((s, s2));
        }
    }
    Ok(LocalGeneralizationReport {
        max_ratio,
        witness,
        pairs,
        lipschitz,
        pass: max_ratio <= lipschitz + 1e-12,
    })
}
