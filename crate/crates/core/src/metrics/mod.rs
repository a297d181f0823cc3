//! Regret estimators and the utilities used to check them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{mentor_rollout, MdpAdversary, MdpInstance, MuSequence};
use crate::error::{Error, Result};
use crate::experts::{epsilon_cover, Policy, PolicyClass};
use crate::protocol::{run_protocol, ActionId, ActiveAlgorithm, Adversary, History, RunTrace, State};
use crate::rng::trial_seed;

pub mod exact;
pub mod geometry;
pub mod stats;

pub use exact::{enumerate_paths, exact_mentor_reward, exact_regret_oracle, ExactRegret};
pub use geometry::{
    jung_radius_check, packing_number_bruteforce, packing_volume_bound, JungReport, PackingResult,
};
pub use stats::{fit_loglog_slope, kahan_sum, mean_ci, SlopeFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RegretKind {
    #[serde(rename = "SA")]
    Sa,
    #[serde(rename = "PLUS")]
    Plus,
    #[serde(rename = "MUL")]
    Mul,
    #[serde(rename = "MDP")]
    Mdp,
    #[serde(rename = "QUERIES")]
    Queries,
}

impl fmt::Display for RegretKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegretKind::Sa => "SA",
            RegretKind::Plus => "PLUS",
            RegretKind::Mul => "MUL",
            RegretKind::Mdp => "MDP",
            RegretKind::Queries => "QUERIES",
        })
    }
}

impl std::str::FromStr for RegretKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SA" => Ok(RegretKind::Sa),
            "PLUS" => Ok(RegretKind::Plus),
            "MUL" => Ok(RegretKind::Mul),
            "MDP" => Ok(RegretKind::Mdp),
            "QUERIES" => Ok(RegretKind::Queries),
            other => Err(Error::InvalidArgument(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub kind: RegretKind,
    pub estimate: f64,
    /// Half-width of the 95% normal confidence interval.
    pub ci_halfwidth: f64,
    pub trials: usize,
    pub query_mean: f64,
    pub extra: BTreeMap<String, f64>,
}

/// What a trial is scored against.
#[derive(Clone, Copy, Default)]
pub struct Evaluation<'a> {
    /// Comparator policies for `R_SA`.
    pub comparators: Option<&'a [Policy]>,
    /// Survival probabilities for `R_plus` and `R_mul`.
    pub mu: Option<&'a dyn MuSequence>,
    /// The MDP for `R_MDP`; trials then also roll out the mentor.
    pub mdp: Option<&'a dyn MdpInstance>,
}

/// Comparators standing in for the supremum over a class: the class itself
/// when finite, otherwise its `1/T`-cover. The flag is `true` for a cover.
pub fn comparators_for(class: &PolicyClass, horizon: usize) -> Result<(Vec<Policy>, bool)> {
    match class {
        PolicyClass::Finite { policies, .. } => Ok((policies.clone(), false)),
        _ => Ok((epsilon_cover(class, 1.0 / horizon.max(1) as f64)?.policies, true)),
    }
}

/// `Σ ℓ(a_t, a_t^m) − min_π Σ ℓ(π(s_t), a_t^m)`.
pub fn regret_sa_sample(history: &History, mentors: &[ActionId], comparators: &[Policy]) -> f64 {
    let own = history.steps().iter().zip(mentors).filter(|(s, m)| s.action != **m).count();
    let best = comparators
        .iter()
        .map(|p| history.steps().iter().zip(mentors).filter(|(s, m)| p.evaluate(&s.state) != **m).count())
        .min()
        .unwrap_or(0);
    own as f64 - best as f64
}

/// `Σ μ_t^m(s_t) − μ_t(s_t, a_t)`.
pub fn regret_plus_sample(history: &History, mu: &dyn MuSequence) -> f64 {
    kahan_sum(
        history
            .steps()
            .iter()
            .enumerate()
            .map(|(t, s)| mu.mentor_mu(t, &s.state) - mu.mu(t, &s.state, s.action)),
    )
}

/// `Σ log(μ_t^m(s_t) / μ_t(s_t, a_t))`; undefined if any factor is 0.
pub fn regret_mul_sample(history: &History, mu: &dyn MuSequence) -> Result<f64> {
    let mut terms = Vec::with_capacity(history.len());
    for (t, s) in history.steps().iter().enumerate() {
        let m = mu.mentor_mu(t, &s.state);
        let a = mu.mu(t, &s.state, s.action);
        if m <= 0.0 || a <= 0.0 {
            return Err(Error::UndefinedObjective(format!(
                "zero survival probability at step {t}; the multiplicative objective needs mu_min > 0"
            )));
        }
        terms.push(m.ln() - a.ln());
    }
    Ok(kahan_sum(terms))
}

/// Split `Σ r(s^m, π^m(s^m)) − Σ r(s, a)` into state-based and action-based parts.
pub fn decompose_mdp_regret(
    agent: &RunTrace,
    mentor_states: &[State],
    mdp: &dyn MdpInstance,
) -> Result<(f64, f64)> {
    let steps = agent.history.steps();
    if steps.len() != mentor_states.len() {
        return Err(Error::InvalidArgument(format!(
            "agent trace has {} steps but mentor trace has {}",
            steps.len(),
            mentor_states.len()
        )));
    }
    let mentor_total = kahan_sum(mentor_states.iter().map(|s| mdp.reward(s, mdp.mentor(s))));
    let on_agent_states = kahan_sum(steps.iter().map(|s| mdp.reward(&s.state, mdp.mentor(&s.state))));
    let agent_total = kahan_sum(steps.iter().map(|s| mdp.reward(&s.state, s.action)));
    Ok((mentor_total - on_agent_states, on_agent_states - agent_total))
}

/// `Σ r(s^m, π^m(s^m)) − Σ r(s, a)` for one pair of traces.
pub fn mdp_regret_sample(agent: &RunTrace, mentor_states: &[State], mdp: &dyn MdpInstance) -> f64 {
    let mentor_total = kahan_sum(mentor_states.iter().map(|s| mdp.reward(s, mdp.mentor(s))));
    let agent_total = kahan_sum(agent.history.steps().iter().map(|s| mdp.reward(&s.state, s.action)));
    mentor_total - agent_total
}

/// Diameter of the visited states. Exact; linear time in one dimension.
pub fn state_diameter(history: &History) -> f64 {
    let steps = history.steps();
    if steps.is_empty() {
        return 0.0;
    }
    if steps[0].state.dim() == 1 {
        let (lo, hi) = steps.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            let x = s.state.coords()[0];
            (lo.min(x), hi.max(x))
        });
        return hi - lo;
    }
    let mut d: f64 = 0.0;
    for i in 0..steps.len() {
        for j in i + 1..steps.len() {
            d = d.max(steps[i].state.distance(&steps[j].state));
        }
    }
    d
}

/// Everything measured on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSample {
    pub seed: u64,
    pub queries: f64,
    pub loss: f64,
    pub diam: f64,
    pub sa: Option<f64>,
    pub plus: Option<f64>,
    /// `Err` text when the multiplicative objective is undefined.
    pub mul: Option<std::result::Result<f64, String>>,
    pub mdp: Option<f64>,
    pub state_based: Option<f64>,
    pub action_based: Option<f64>,
    pub diagnostics: BTreeMap<String, f64>,
}

pub type AlgorithmFactory<'a> = dyn Fn() -> Result<Box<dyn ActiveAlgorithm>> + Sync + 'a;
pub type AdversaryFactory<'a> = dyn Fn() -> Result<Box<dyn Adversary>> + Sync + 'a;

/// Run one trial and score it.
pub fn run_trial(
    alg: &AlgorithmFactory<'_>,
    adv: &AdversaryFactory<'_>,
    eval: &Evaluation<'_>,
    horizon: usize,
    seed: u64,
) -> Result<TrialSample> {
    let mut algorithm = alg()?;
    let mut adversary = adv()?;
    let trace = run_protocol(algorithm.as_mut(), adversary.as_mut(), horizon, seed)?;
    let mut sample = TrialSample {
        seed,
        queries: trace.query_count() as f64,
        loss: trace.total_loss(),
        diam: state_diameter(&trace.history),
        sa: eval.comparators.map(|c| regret_sa_sample(&trace.history, &trace.mentor_actions, c)),
        plus: eval.mu.map(|mu| regret_plus_sample(&trace.history, mu)),
        mul: eval.mu.map(|mu| regret_mul_sample(&trace.history, mu).map_err(|e| e.to_string())),
        mdp: None,
        state_based: None,
        action_based: None,
        diagnostics: algorithm.diagnostics().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    };
    if let Some(mdp) = eval.mdp {
        let mentor_states = mentor_rollout(mdp, horizon, seed)?;
        let (state_based, action_based) = decompose_mdp_regret(&trace, &mentor_states, mdp)?;
        sample.mdp = Some(mdp_regret_sample(&trace, &mentor_states, mdp));
        sample.state_based = Some(state_based);
        sample.action_based = Some(action_based);
    }
    Ok(sample)
}

/// Run `trials` independent trials in parallel. Trial `i` uses seed
/// `trial_seed(seed, i)`; results come back in trial order.
pub fn run_trials(
    alg: &AlgorithmFactory<'_>,
    adv: &AdversaryFactory<'_>,
    eval: &Evaluation<'_>,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<TrialSample>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    (0..trials as u64)
        .into_par_iter()
        .map(|i| run_trial(alg, adv, eval, horizon, trial_seed(seed, i)))
        .collect()
}

fn mean_of(samples: &[TrialSample], f: impl Fn(&TrialSample) -> f64) -> f64 {
    mean_ci(&samples.iter().map(f).collect::<Vec<_>>()).0
}

/// Aggregate trial samples into one report.
pub fn summarize(kind: RegretKind, samples: &[TrialSample]) -> Result<RegretReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no trial samples".into()));
    }
    let missing = || Error::InvalidArgument(format!("trials were not scored for {kind}"));
    let values: Vec<f64> = match kind {
        RegretKind::Sa => samples.iter().map(|s| s.sa.ok_or_else(missing)).collect::<Result<_>>()?,
        RegretKind::Plus => samples.iter().map(|s| s.plus.ok_or_else(missing)).collect::<Result<_>>()?,
        RegretKind::Mul => samples
            .iter()
            .map(|s| match &s.mul {
                Some(Ok(v)) => Ok(*v),
                Some(Err(e)) => Err(Error::UndefinedObjective(e.clone())),
                None => Err(missing()),
            })
            .collect::<Result<_>>()?,
        RegretKind::Mdp => samples.iter().map(|s| s.mdp.ok_or_else(missing)).collect::<Result<_>>()?,
        RegretKind::Queries => samples.iter().map(|s| s.queries).collect(),
    };
    let (estimate, ci_halfwidth) = mean_ci(&values);
    let mut extra = BTreeMap::new();
    extra.insert("diam_mean".to_string(), mean_of(samples, |s| s.diam));
    extra.insert("loss_mean".to_string(), mean_of(samples, |s| s.loss));
    if kind == RegretKind::Mdp {
        extra.insert("state_based".into(), mean_of(samples, |s| s.state_based.unwrap_or(0.0)));
        extra.insert("action_based".into(), mean_of(samples, |s| s.action_based.unwrap_or(0.0)));
    }
    if let Some(first) = samples.first() {
        for key in first.diagnostics.keys() {
            if samples.iter().all(|s| s.diagnostics.contains_key(key)) {
                extra.insert(key.clone(), mean_of(samples, |s| s.diagnostics[key]));
            }
        }
    }
    Ok(RegretReport {
        kind,
        estimate,
        ci_halfwidth,
        trials: samples.len(),
        query_mean: mean_of(samples, |s| s.queries),
        extra,
    })
}

pub fn estimate_regret_sa(
    alg: &AlgorithmFactory<'_>,
    adv: &AdversaryFactory<'_>,
    class: &PolicyClass,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<RegretReport> {
    let (comparators, covered) = comparators_for(class, horizon)?;
    let eval = Evaluation { comparators: Some(&comparators), ..Default::default() };
    let samples = run_trials(alg, adv, &eval, horizon, trials, seed)?;
    let mut report = summarize(RegretKind::Sa, &samples)?;
    report.extra.insert("comparator_cover".into(), if covered { 1.0 } else { 0.0 });
    report.extra.insert("comparators".into(), comparators.len() as f64);
    Ok(report)
}

fn mu_report(
    kind: RegretKind,
    alg: &AlgorithmFactory<'_>,
    adv: &AdversaryFactory<'_>,
    mu: &dyn MuSequence,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<RegretReport> {
    let eval = Evaluation { mu: Some(mu), ..Default::default() };
    let samples = run_trials(alg, adv, &eval, horizon, trials, seed)?;
    let mut report = summarize(kind, &samples)?;
    report.extra.insert("mu_min".into(), mu.mu_min());
    Ok(report)
}

pub fn estimate_regret_plus(
    alg: &AlgorithmFactory<'_>,
    adv: &AdversaryFactory<'_>,
    mu: &dyn MuSequence,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<RegretReport> {
    mu_report(RegretKind::Plus, alg, adv, mu, horizon, trials, seed)
}

pub fn estimate_regret_mul(
    alg: &AlgorithmFactory<'_>,
    adv: &AdversaryFactory<'_>,
    mu: &dyn MuSequence,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<RegretReport> {
    mu_report(RegretKind::Mul, alg, adv, mu, horizon, trials, seed)
}

/// Per trial: an agent run and a mentor rollout on the same seed, so both
/// consume the same stream of transition randomness.
pub fn estimate_regret_mdp(
    alg: &AlgorithmFactory<'_>,
    mdp: Arc<dyn MdpInstance>,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<RegretReport> {
    let adv_mdp = mdp.clone();
    let adv = move || Ok(Box::new(MdpAdversary::new(adv_mdp.clone())) as Box<dyn Adversary>);
    let eval = Evaluation { mdp: Some(mdp.as_ref()), ..Default::default() };
    let samples = run_trials(alg, &adv, &eval, horizon, trials, seed)?;
    summarize(RegretKind::Mdp, &samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{heaven_hell, HeavenHell, SmoothSequenceAdversary};
    use crate::experts::Halving;
    use crate::protocol::{FixedAction, MentorCopy, Step, UniformRandom};

    fn hh_factory() -> Arc<dyn MdpInstance> {
        Arc::new(heaven_hell(10).unwrap())
    }

    #[test]
    fn mentor_copy_has_zero_sa() {
        let class = PolicyClass::Thresholds;
        let alg = || Ok(Box::new(MentorCopy::new(2)) as Box<dyn ActiveAlgorithm>);
        let adv = || Ok(Box::new(SmoothSequenceAdversary::uniform(1, Policy::threshold(0.5), 2)) as Box<dyn Adversary>);
        let r = estimate_regret_sa(&alg, &adv, &class, 50, 20, 1).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.query_mean, 50.0);
    }

    #[test]
    fn always_wrong_has_sa_t() {
        let class = PolicyClass::Finite { policies: vec![Policy::Constant(ActionId(0))], action_count: 2 };
        let alg = || Ok(Box::new(FixedAction::new(ActionId(1), 2)) as Box<dyn ActiveAlgorithm>);
        let adv = || Ok(Box::new(SmoothSequenceAdversary::uniform(1, Policy::Constant(ActionId(0)), 2)) as Box<dyn Adversary>);
        let r = estimate_regret_sa(&alg, &adv, &class, 30, 5, 1).unwrap();
        assert_eq!(r.estimate, 30.0);
    }

    #[test]
    fn halving_regret_at_most_three() {
        let policies: Vec<Policy> = (0..8).map(|i| Policy::threshold(i as f64 / 8.0)).collect();
        let class = PolicyClass::Finite { policies: policies.clone(), action_count: 2 };
        let alg = || Ok(Box::new(Halving::new(policies.clone(), 2)?) as Box<dyn ActiveAlgorithm>);
        let adv = || Ok(Box::new(SmoothSequenceAdversary::uniform(1, Policy::threshold(0.625), 2)) as Box<dyn Adversary>);
        let r = estimate_regret_sa(&alg, &adv, &class, 100, 50, 3).unwrap();
        assert!(r.estimate <= 3.0);
    }

    #[test]
    fn heaven_hell_mdp_regret() {
        let forced = || Ok(Box::new(FixedAction::new(ActionId(1), 2)) as Box<dyn ActiveAlgorithm>);
        let r = estimate_regret_mdp(&forced, hh_factory(), 10, 3, 0).unwrap();
        assert_eq!(r.estimate, 9.0);
        let copy = || Ok(Box::new(MentorCopy::new(2)) as Box<dyn ActiveAlgorithm>);
        let r = estimate_regret_mdp(&copy, hh_factory(), 10, 3, 0).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.ci_halfwidth, 0.0);
    }

    #[test]
    fn decomposition_examples() {
        let hh = heaven_hell(4).unwrap();
        let roll = mentor_rollout(&hh, 4, 0).unwrap();
        let steps: Vec<Step> =
            roll.iter().map(|s| Step { state: s.clone(), action: ActionId(0), mentor_feedback: None }).collect();
        let trace = RunTrace {
            horizon: 4,
            seed: 0,
            history: steps.into_iter().collect(),
            mentor_actions: vec![ActionId(0); 4],
            losses: vec![0.0; 4],
        };
        assert_eq!(decompose_mdp_regret(&trace, &roll, &hh).unwrap(), (0.0, 0.0));
        assert!(decompose_mdp_regret(&trace, &roll[..3], &hh).is_err());
    }

    #[test]
    fn multiplicative_log_identity() {
        use crate::env::TabularMu;
        let s = State::scalar(0.0);
        let mu = TabularMu::new(vec![s.clone()], vec![vec![vec![1.0, (-1.0f64).exp()]]], vec![ActionId(0)]).unwrap();
        let h: History = vec![Step { state: s.clone(), action: ActionId(1), mentor_feedback: None }].into_iter().collect();
        assert!((regret_mul_sample(&h, &mu).unwrap() - 1.0).abs() < 1e-15);
        let zero = TabularMu::new(vec![s.clone()], vec![vec![vec![1.0, 0.0]]], vec![ActionId(0)]).unwrap();
        assert!(matches!(regret_mul_sample(&h, &zero), Err(Error::UndefinedObjective(_))));
    }

    #[test]
    fn exact_oracle_heaven_hell_random_first_action() {
        let hh: Arc<dyn MdpInstance> = Arc::new(heaven_hell(5).unwrap());
        let adv = MdpAdversary::new(hh.clone());
        let eval = Evaluation { mdp: Some(hh.as_ref()), ..Default::default() };
        let r = exact_regret_oracle(&adv, &UniformRandom::new(2), 5, &eval).unwrap();
        assert!((r.mdp.unwrap() - 2.0).abs() < 1e-12);
        assert!((r.total_probability - 1.0).abs() < 1e-12);
        let _ = HeavenHell::states();
    }

    #[test]
    fn exact_oracle_limits() {
        let hh: Arc<dyn MdpInstance> = Arc::new(heaven_hell(8).unwrap());
        let adv = MdpAdversary::new(hh.clone());
        let eval = Evaluation::default();
        assert!(matches!(
            exact_regret_oracle(&adv, &UniformRandom::new(2), 7, &eval),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn kinds_round_trip() {
        for k in [RegretKind::Sa, RegretKind::Plus, RegretKind::Mul, RegretKind::Mdp, RegretKind::Queries] {
            assert_eq!(k.to_string().parse::<RegretKind>().unwrap(), k);
        }
    }
}
