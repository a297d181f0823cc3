//! Query-budgeted active learning.
//!
//! [`BudgetedActive`] queries with probability `k/T` at every step,
//! independently of everything else, and feeds its base learner only the
//! steps it queried. The base must be full-feedback and query-agnostic.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::protocol::{ActionId, ActiveAlgorithm, Flags, State, Step};
use crate::rng::AlgorithmRng;

#[derive(Clone)]
pub struct BudgetedActive {
    base: Box<dyn ActiveAlgorithm>,
    k: f64,
    horizon: usize,
    p: f64,
    query_log: Vec<bool>,
    pending_query: Option<bool>,
    pending_action: Option<ActionId>,
}

impl BudgetedActive {
    pub fn new(base: Box<dyn ActiveAlgorithm>, k: f64, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if !(k > 0.0 && k <= horizon as f64) {
            return Err(Error::InvalidArgument(format!(
                "query budget k = {k} must lie in (0, T = {horizon}]"
            )));
        }
        let flags = base.flags();
        if !flags.full_feedback || !flags.query_agnostic {
            return Err(Error::Contract(format!(
                "budgeted reduction needs a full-feedback, query-agnostic base (got {flags:?})"
            )));
        }
        Ok(Self {
            base,
            k,
            horizon,
            p: k / horizon as f64,
            query_log: Vec::with_capacity(horizon),
            pending_query: None,
            pending_action: None,
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn query_probability_value(&self) -> f64 {
        self.p
    }

    /// This wrapper's own query decisions, one per finished step.
    pub fn query_log(&self) -> &[bool] {
        &self.query_log
    }

    pub fn base(&self) -> &dyn ActiveAlgorithm {
        self.base.as_ref()
    }
}

impl ActiveAlgorithm for BudgetedActive {
    fn action_count(&self) -> usize {
        self.base.action_count()
    }

    fn flags(&self) -> Flags {
        Flags { full_feedback: self.p >= 1.0, query_agnostic: true }
    }

    fn decide_query(&mut self, _state: &State, rng: &mut AlgorithmRng) -> Result<bool> {
        let q = rng.query.gen_bool(self.p);
        self.pending_query = Some(q);
        Ok(q)
    }

    fn choose_action(
        &mut self,
        state: &State,
        _feedback: Option<ActionId>,
        rng: &mut AlgorithmRng,
    ) -> Result<ActionId> {
        let a = self.base.choose_action(state, None, rng)?;
        self.pending_action = Some(a);
        Ok(a)
    }

    fn observe(&mut self, step: &Step) -> Result<()> {
        let q = self.pending_query.take().unwrap_or(step.queried());
        let action = self.pending_action.take().unwrap_or(step.action);
        if q != step.queried() {
            return Err(Error::ProtocolViolation {
                step: self.query_log.len(),
                detail: format!("query decision {q} but step carries feedback {:?}", step.mentor_feedback),
            });
        }
        self.query_log.push(q);
        if q {
            self.base.observe(&Step {
                state: step.state.clone(),
                action,
                mentor_feedback: step.mentor_feedback,
            })?;
        }
        Ok(())
    }

    fn query_probability(&self, _state: &State) -> Option<f64> {
        Some(self.p)
    }

    fn action_distribution(&self, state: &State, _feedback: Option<ActionId>) -> Option<Vec<f64>> {
        self.base.action_distribution(state, None)
    }

    fn box_clone(&self) -> Box<dyn ActiveAlgorithm> {
        Box::new(self.clone())
    }

    fn diagnostics(&self) -> BTreeMap<&'static str, f64> {
        let mut d = self.base.diagnostics();
        d.insert("k", self.k);
        d.insert("budget_queries", self.query_log.iter().filter(|&&q| q).count() as f64);
        d
    }
}

/// The importance-weighted loss `q (T/k) ℓ`.
pub fn tilde_loss(queried: bool, k: f64, horizon: usize, loss: f64) -> Result<f64> {
    if !(k > 0.0 && k <= horizon as f64) {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in (0, T = {horizon}]")));
    }
    Ok(if queried { horizon as f64 / k * loss } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experts::{epsilon_cover, ExpWeights, Halving, Policy, PolicyClass};
    use crate::protocol::{run_protocol, Adversary, History, MentorCopy, UniformRandom};
    use crate::rng::StreamRng;

    struct Uniform {
        theta: f64,
    }

    impl Adversary for Uniform {
        fn action_count(&self) -> usize {
            2
        }
        fn next(&mut self, _h: &History, rng: &mut StreamRng) -> Result<(State, ActionId)> {
            let s = State::scalar(rng.gen());
            let a = Policy::threshold(self.theta).evaluate(&s);
            Ok((s, a))
        }
    }

    fn base() -> Box<dyn ActiveAlgorithm> {
        let cover = epsilon_cover(&PolicyClass::Thresholds, 0.05).unwrap();
        Box::new(ExpWeights::over_cover(&cover, 2).unwrap())
    }

    #[test]
    fn rejects_bad_budget_and_base() {
        assert!(matches!(BudgetedActive::new(base(), 0.0, 10), Err(Error::InvalidArgument(_))));
        assert!(matches!(BudgetedActive::new(base(), 10.5, 10), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            BudgetedActive::new(Box::new(MentorCopy::new(2)), 5.0, 10),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            BudgetedActive::new(Box::new(UniformRandom::new(2)), 5.0, 10),
            Err(Error::Contract(_))
        ));
        assert!(BudgetedActive::new(base(), 2.5, 10).is_ok());
    }

    #[test]
    fn full_budget_matches_base_bit_for_bit() {
        let t = 300;
        let mut wrapped = BudgetedActive::new(base(), t as f64, t).unwrap();
        let mut direct = base();
        let a = run_protocol(&mut wrapped, &mut Uniform { theta: 0.3 }, t, 17).unwrap();
        let b = run_protocol(direct.as_mut(), &mut Uniform { theta: 0.3 }, t, 17).unwrap();
        assert_eq!(a, b);
        assert!(wrapped.flags().full_feedback);
    }

    #[test]
    fn half_budget_binomial_band() {
        let t = 10_000;
        let mut wrapped = BudgetedActive::new(base(), t as f64 / 2.0, t).unwrap();
        let trace = run_protocol(&mut wrapped, &mut Uniform { theta: 0.3 }, t, 1).unwrap();
        let k = trace.query_count() as f64;
        // 4 standard deviations of Binomial(10^4, 1/2) is 200
        assert!((k - 5000.0).abs() <= 200.0, "{k}");
    }

    #[test]
    fn base_sees_only_queried_steps() {
        let t = 200;
        let mut wrapped = BudgetedActive::new(Box::new(Halving::new(
            [0.0, 0.2, 0.4, 0.6, 0.8].into_iter().map(Policy::threshold).collect(),
            2,
        ).unwrap()), 20.0, t)
        .unwrap();
        let trace = run_protocol(&mut wrapped, &mut Uniform { theta: 0.4 }, t, 3).unwrap();
        assert_eq!(wrapped.query_log().len(), t);
        let logged: Vec<bool> = trace.history.steps().iter().map(|s| s.queried()).collect();
        assert_eq!(wrapped.query_log(), logged.as_slice());
        assert!(wrapped.flags().query_agnostic);
    }

    #[test]
    fn tilde_loss_examples() {
        assert_eq!(tilde_loss(false, 3.0, 10, 1.0).unwrap(), 0.0);
        assert_eq!(tilde_loss(true, 10.0, 10, 0.7).unwrap(), 0.7);
        assert_eq!(tilde_loss(true, 2.0, 10, 1.0).unwrap(), 5.0);
        assert!(tilde_loss(true, 0.0, 10, 1.0).is_err());
    }
}
