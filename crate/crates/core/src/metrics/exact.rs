//! Exact expectations by enumerating every branch of a tiny instance.

use serde::{Deserialize, Serialize};

use crate::env::MdpInstance;
use crate::error::{Error, Result};
use crate::protocol::{ActionId, ActiveAlgorithm, History, State, Step, TabularAdversary};

use super::Evaluation;

pub const MAX_STATES: usize = 4;
pub const MAX_ACTIONS: usize = 3;
pub const MAX_HORIZON: usize = 6;
const NODE_CAP: usize = 5_000_000;

/// Call `visit(probability, history, mentor_actions)` for every complete
/// trajectory with positive probability. Returns the number of trajectories.
pub fn enumerate_paths(
    adv: &dyn TabularAdversary,
    alg: &dyn ActiveAlgorithm,
    horizon: usize,
    visit: &mut dyn FnMut(f64, &History, &[ActionId]),
) -> Result<usize> {
    if horizon == 0 || horizon > MAX_HORIZON {
        return Err(Error::Capability(format!("exact enumeration needs 1 <= T <= {MAX_HORIZON}")));
    }
    if alg.action_count() > MAX_ACTIONS {
        return Err(Error::Capability(format!("exact enumeration needs |A| <= {MAX_ACTIONS}")));
    }
    let mut nodes = 0usize;
    let mut paths = 0usize;
    let mut history = History::new();
    let mut mentors = Vec::new();
    recurse(adv, alg, horizon, 1.0, &mut history, &mut mentors, &mut nodes, &mut paths, visit)?;
    Ok(paths)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    adv: &dyn TabularAdversary,
    alg: &dyn ActiveAlgorithm,
    horizon: usize,
    prob: f64,
    history: &mut History,
    mentors: &mut Vec<ActionId>,
    nodes: &mut usize,
    paths: &mut usize,
    visit: &mut dyn FnMut(f64, &History, &[ActionId]),
) -> Result<()> {
    if history.len() == horizon {
        *paths += 1;
        visit(prob, history, mentors);
        return Ok(());
    }
    *nodes += 1;
    if *nodes > NODE_CAP {
        return Err(Error::Capability("exact enumeration exceeded its node budget".into()));
    }
    let dist = adv.distribution(history);
    if dist.len() > MAX_STATES {
        return Err(Error::Capability(format!("adversary support exceeds {MAX_STATES} states")));
    }
    for (state, mentor, ps) in dist {
        if ps <= 0.0 {
            continue;
        }
        let branches = alg
            .branches(&state, mentor)
            .ok_or_else(|| Error::Capability("algorithm cannot be enumerated".into()))?;
        for b in branches {
            if b.probability <= 0.0 {
                continue;
            }
            let mut h = history.clone();
            h.push(Step { state: state.clone(), action: b.action, mentor_feedback: b.queried.then_some(mentor) });
            mentors.push(mentor);
            recurse(adv, b.successor.as_ref(), horizon, prob * ps * b.probability, &mut h, mentors, nodes, paths, visit)?;
            mentors.pop();
        }
    }
    Ok(())
}

/// Exact values of every regret that the evaluation context supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactRegret {
    pub sa: Option<f64>,
    pub plus: Option<f64>,
    /// `None` when some reachable step has zero survival probability.
    pub mul: Option<f64>,
    pub mdp: Option<f64>,
    pub state_based: Option<f64>,
    pub action_based: Option<f64>,
    pub expected_queries: f64,
    pub paths: usize,
    pub total_probability: f64,
}

/// Expected total mentor reward `E Σ r(s_t^m, π^m(s_t^m))`, by propagating
/// the state distribution of the mentor's chain.
pub fn exact_mentor_reward(mdp: &dyn MdpInstance, horizon: usize) -> Result<f64> {
    let mut dist: Vec<(State, f64)> = mdp
        .initial_support()
        .ok_or_else(|| Error::Capability("initial distribution has no finite support".into()))?;
    let mut total = 0.0;
    for t in 0..horizon {
        for (s, p) in &dist {
            total += p * mdp.reward(s, mdp.mentor(s));
        }
        if t + 1 == horizon {
            break;
        }
        let mut next: Vec<(State, f64)> = Vec::new();
        for (s, p) in &dist {
            let support = mdp
                .transition_support(s, mdp.mentor(s))
                .ok_or_else(|| Error::Capability("kernel has no finite support".into()))?;
            for (n, q) in support {
                match next.iter_mut().find(|(x, _)| *x == n) {
                    Some(entry) => entry.1 += p * q,
                    None => next.push((n, p * q)),
                }
            }
        }
        dist = next;
    }
    Ok(total)
}

pub fn exact_regret_oracle(
    adv: &dyn TabularAdversary,
    alg: &dyn ActiveAlgorithm,
    horizon: usize,
    eval: &Evaluation<'_>,
) -> Result<ExactRegret> {
    let mut sa = 0.0;
    let mut plus = 0.0;
    let mut mul = 0.0;
    let mut mul_defined = true;
    let mut agent_reward = 0.0;
    let mut mentor_action_reward = 0.0;
    let mut queries = 0.0;
    let mut total_probability = 0.0;
    let paths = enumerate_paths(adv, alg, horizon, &mut |p, history, mentors| {
        total_probability += p;
        queries += p * history.query_count() as f64;
        if let Some(comparators) = eval.comparators {
            sa += p * super::regret_sa_sample(history, mentors, comparators);
        }
        if let Some(mu) = eval.mu {
            plus += p * super::regret_plus_sample(history, mu);
            match super::regret_mul_sample(history, mu) {
                Ok(v) => mul += p * v,
                Err(_) => mul_defined = false,
            }
        }
        if let Some(mdp) = eval.mdp {
            for step in history.steps() {
                agent_reward += p * mdp.reward(&step.state, step.action);
                mentor_action_reward += p * mdp.reward(&step.state, mdp.mentor(&step.state));
            }
        }
    })?;
    let (mdp, state_based, action_based) = match eval.mdp {
        Some(m) => {
            let mentor = exact_mentor_reward(m, horizon)?;
            (
                Some(mentor - agent_reward),
                Some(mentor - mentor_action_reward),
                Some(mentor_action_reward - agent_reward),
            )
        }
        None => (None, None, None),
    };
    Ok(ExactRegret {
        sa: eval.comparators.map(|_| sa),
        plus: eval.mu.map(|_| plus),
        mul: (eval.mu.is_some() && mul_defined).then_some(mul),
        mdp,
        state_based,
        action_based,
        expected_queries: queries,
        paths,
        total_probability,
    })
}
