//! Building environments and stacks from a config, and running the sweep.

use std::sync::Arc;
use std::time::Instant;

use mentorcore::budget::BudgetedActive;
use mentorcore::env::{cliff_line, heaven_hell, HeavenHell, MdpAdversary, MdpInstance, MuFromMdp, SmoothSequenceAdversary, TestSet};
use mentorcore::experts::{epsilon_cover, ExpWeights, Halving, Policy, PolicyClass};
use mentorcore::metrics::{comparators_for, run_trials, summarize, Evaluation, RegretKind};
use mentorcore::protocol::{FixedAction, MentorCopy, UniformRandom};
use mentorcore::safe::{default_params, SafeWrapper};
use mentorcore::{ActionId, ActiveAlgorithm, Adversary, State};
use serde::{Deserialize, Serialize};

use crate::config::{invalid, ConfigError, EnvironmentConfig, ExperimentConfig, LayerConfig};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("T = {horizon}: {source}")]
    Run { horizon: usize, source: mentorcore::Error },
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub metric: RegretKind,
    pub estimate: f64,
    pub ci95: f64,
    pub trials: usize,
    pub query_mean: f64,
    pub diam_mean: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Record wall-clock time per horizon. Off by default so output is
    /// reproducible byte for byte.
    pub timing: bool,
}

/// An environment instantiated at one horizon.
pub struct Environment {
    pub dim: usize,
    pub action_count: usize,
    pub class: PolicyClass,
    pub mdp: Option<Arc<dyn MdpInstance>>,
    pub target: Option<TestSet>,
    mentor: Policy,
}

impl Environment {
    pub fn build(config: &EnvironmentConfig, horizon: usize) -> Result<Self, ConfigError> {
        let env_err = |e: mentorcore::Error| invalid("environment", e.to_string());
        Ok(match config {
            EnvironmentConfig::HeavenHell => {
                let hh = heaven_hell(horizon).map_err(env_err)?;
                Environment {
                    dim: 1,
                    action_count: 2,
                    class: PolicyClass::Finite { policies: HeavenHell::tabular_class(), action_count: 2 },
                    mentor: Policy::Constant(ActionId(0)),
                    mdp: Some(Arc::new(hh)),
                    target: Some(TestSet::Complement(Box::new(TestSet::Points(vec![State::scalar(HeavenHell::HELL)])))),
                }
            }
            EnvironmentConfig::CliffLine { n, lipschitz, sigma, target } => {
                let cliff = cliff_line(*n, *lipschitz, *sigma, horizon).map_err(env_err)?;
                Environment {
                    dim: *n,
                    action_count: 2,
                    class: if *n == 1 { PolicyClass::Thresholds } else { PolicyClass::AxisThresholds { dim: *n } },
                    mentor: Policy::Threshold { axis: 0, theta: cliff.theta() },
                    target: Some(cliff.target(*target)),
                    mdp: Some(Arc::new(cliff)),
                }
            }
            EnvironmentConfig::SmoothThresholds { dim, theta } => Environment {
                dim: *dim,
                action_count: 2,
                class: if *dim == 1 { PolicyClass::Thresholds } else { PolicyClass::AxisThresholds { dim: *dim } },
                mentor: Policy::Threshold { axis: 0, theta: *theta },
                mdp: None,
                target: None,
            },
        })
    }

    pub fn adversary(&self) -> Box<dyn Adversary> {
        match &self.mdp {
            Some(mdp) => Box::new(MdpAdversary::new(mdp.clone())),
            None => Box::new(SmoothSequenceAdversary::uniform(self.dim, self.mentor.clone(), self.action_count)),
        }
    }
}

/// Horizon seen by the innermost learner: `⌈k⌉` when it sits directly under
/// a budget layer, else `T`.
fn learner_horizon(stack: &[LayerConfig], dim: usize, horizon: usize) -> Result<usize, ConfigError> {
    match stack.get(1) {
        Some(LayerConfig::Budget { k }) => {
            let (k_default, _) = default_params(horizon, dim).map_err(|e| invalid("stack[1].k", e.to_string()))?;
            let k = k.resolve(horizon, k_default, "stack[1].k")?;
            if !(k > 0.0 && k.is_finite()) {
                return Err(invalid("stack[1].k", format!("resolves to {k} at T = {horizon}")));
            }
            Ok((k.ceil() as usize).clamp(1, horizon))
        }
        _ => Ok(horizon),
    }
}

/// Build the algorithm stack for one trial at horizon `T`.
pub fn build_stack(
    stack: &[LayerConfig],
    env: &Environment,
    horizon: usize,
) -> Result<Box<dyn ActiveAlgorithm>, ConfigError> {
    let inner_horizon = learner_horizon(stack, env.dim, horizon)?;
    let (k_default, eps_default) =
        default_params(horizon, env.dim).map_err(|e| invalid("stack", e.to_string()))?;
    let mut alg: Option<Box<dyn ActiveAlgorithm>> = None;
    for (i, layer) in stack.iter().enumerate() {
        let path = format!("stack[{i}]");
        let err = |e: mentorcore::Error| invalid(path.clone(), e.to_string());
        let built: Box<dyn ActiveAlgorithm> = match layer {
            LayerConfig::MentorCopy => Box::new(MentorCopy::new(env.action_count)),
            LayerConfig::UniformRandom => Box::new(UniformRandom::new(env.action_count)),
            LayerConfig::FixedAction { action } => {
                if *action >= env.action_count {
                    return Err(invalid(format!("{path}.action"), format!("must be below {}", env.action_count)));
                }
                Box::new(FixedAction::new(ActionId(*action), env.action_count))
            }
            LayerConfig::Halving => {
                let policies = match &env.class {
                    PolicyClass::Finite { policies, .. } => policies.clone(),
                    class => epsilon_cover(class, 1.0 / inner_horizon as f64).map_err(err)?.policies,
                };
                Box::new(Halving::new(policies, env.action_count).map_err(err)?)
            }
            LayerConfig::ExpWeights { eta } => {
                let cover = epsilon_cover(&env.class, 1.0 / inner_horizon as f64).map_err(err)?;
                Box::new(ExpWeights::new(cover.policies, env.action_count, eta.unwrap_or(1.0)).map_err(err)?)
            }
            LayerConfig::Budget { k } => {
                let k = k.resolve(horizon, k_default, &format!("{path}.k"))?;
                Box::new(BudgetedActive::new(alg.take().expect("validated"), k, horizon).map_err(err)?)
            }
            LayerConfig::Safe { epsilon } => {
                let eps = epsilon.resolve(horizon, eps_default, &format!("{path}.epsilon"))?;
                Box::new(SafeWrapper::new(alg.take().expect("validated"), eps, horizon).map_err(err)?)
            }
        };
        alg = Some(built);
    }
    Ok(alg.expect("validated"))
}

/// Run every horizon in the config; one row per `(T, metric)`, in config order.
pub fn run_experiment(config: &ExperimentConfig, options: RunOptions) -> Result<Vec<ResultRow>, ExperimentError> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.t_list.len() * config.metrics.len());
    for &horizon in &config.t_list {
        let start = Instant::now();
        let env = Environment::build(&config.environment, horizon)?;
        // surface stack errors once, before fanning out
        build_stack(&config.stack, &env, horizon)?;
        let wants = |k: RegretKind| config.metrics.contains(&k);
        let comparators = if wants(RegretKind::Sa) {
            Some(comparators_for(&env.class, horizon).map_err(|source| ExperimentError::Run { horizon, source })?.0)
        } else {
            None
        };
        let mu = match (&env.mdp, &env.target) {
            (Some(mdp), Some(target)) if wants(RegretKind::Plus) || wants(RegretKind::Mul) => Some(
                MuFromMdp::constant(mdp.clone(), target.clone(), horizon)
                    .map_err(|source| ExperimentError::Run { horizon, source })?,
            ),
            _ => None,
        };
        let eval = Evaluation {
            comparators: comparators.as_deref(),
            mu: mu.as_ref().map(|m| m as &dyn mentorcore::env::MuSequence),
            mdp: if wants(RegretKind::Mdp) { env.mdp.as_deref() } else { None },
        };
        let alg = || {
            build_stack(&config.stack, &env, horizon).map_err(|e| mentorcore::Error::InvalidArgument(e.to_string()))
        };
        let adv = || Ok(env.adversary());
        let samples = run_trials(&alg, &adv, &eval, horizon, config.trials, config.seed)
            .map_err(|source| ExperimentError::Run { horizon, source })?;
        let wall_ms = if options.timing { start.elapsed().as_millis() as u64 } else { 0 };
        for &metric in &config.metrics {
            let report = summarize(metric, &samples).map_err(|source| ExperimentError::Run { horizon, source })?;
            rows.push(ResultRow {
                horizon,
                metric,
                estimate: report.estimate,
                ci95: report.ci_halfwidth,
                trials: report.trials,
                query_mean: report.query_mean,
                diam_mean: report.extra["diam_mean"],
                wall_ms,
            });
        }
    }
    Ok(rows)
}
