//! Experiment configuration, read from TOML.
//!
//! ```toml
//! schema_version = 1
//! T_list = [256, 512, 1024]
//! trials = 200
//! seed = 7
//! metrics = ["MDP", "QUERIES"]
//! output = "results.csv"
//!
//! [environment]
//! name = "cliff_line"
//! n = 1
//! lipschitz = 2.0
//! sigma = 0.1
//!
//! [[stack]]
//! layer = "exp_weights"
//!
//! [[stack]]
//! layer = "budget"
//! k = "default"
//!
//! [[stack]]
//! layer = "safe"
//! epsilon = "default"
//!
//! [ceilings]
//! MDP = 0.95
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mentorcore::env::CliffTarget;
use mentorcore::metrics::RegretKind;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
}

pub(crate) fn invalid(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub environment: EnvironmentConfig,
    /// Innermost learner first, then wrappers outward.
    pub stack: Vec<LayerConfig>,
    #[serde(rename = "T_list")]
    pub t_list: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub metrics: Vec<RegretKind>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Maximum fitted log-log slope per metric.
    #[serde(default)]
    pub ceilings: BTreeMap<RegretKind, f64>,
}

fn one() -> usize {
    1
}

fn band() -> CliffTarget {
    CliffTarget::Band
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    HeavenHell,
    CliffLine {
        #[serde(default = "one")]
        n: usize,
        lipschitz: f64,
        sigma: f64,
        /// Target set behind the survival probabilities.
        #[serde(default = "band")]
        target: CliffTarget,
    },
    /// I.i.d. uniform states on `[0,1]^dim`, mentor a threshold on axis 0.
    SmoothThresholds {
        #[serde(default = "one")]
        dim: usize,
        theta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerConfig {
    MentorCopy,
    UniformRandom,
    FixedAction {
        action: usize,
    },
    /// Halving over the environment's class (or its cover).
    Halving,
    /// Exponential weights over the cover of the environment's class.
    ExpWeights {
        #[serde(default)]
        eta: Option<f64>,
    },
    Budget {
        k: ParamRule,
    },
    Safe {
        epsilon: ParamRule,
    },
}

impl LayerConfig {
    pub fn is_learner(&self) -> bool {
        !matches!(self, LayerConfig::Budget { .. } | LayerConfig::Safe { .. })
    }
}

/// A parameter given as a number, as `"default"`, as `"inf"`, or as
/// `{ scale, exponent }` meaning `scale · T^exponent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamRule {
    Value(f64),
    Keyword(String),
    Power {
        #[serde(default = "unit_scale")]
        scale: f64,
        exponent: f64,
    },
}

fn unit_scale() -> f64 {
    1.0
}

impl ParamRule {
    /// Resolve at horizon `T`; `default` is the value to use for `"default"`.
    pub fn resolve(&self, horizon: usize, default: f64, path: &str) -> Result<f64, ConfigError> {
        match self {
            ParamRule::Value(v) => Ok(*v),
            ParamRule::Keyword(k) if k == "default" => Ok(default),
            ParamRule::Keyword(k) if k == "inf" => Ok(f64::INFINITY),
            ParamRule::Keyword(k) => Err(invalid(path, format!("unknown rule {k:?}; expected \"default\" or \"inf\""))),
            ParamRule::Power { scale, exponent } => Ok(scale * (horizon as f64).powf(*exponent)),
        }
    }
}

impl EnvironmentConfig {
    pub fn dim(&self) -> usize {
        match self {
            EnvironmentConfig::HeavenHell => 1,
            EnvironmentConfig::CliffLine { n, .. } => *n,
            EnvironmentConfig::SmoothThresholds { dim, .. } => *dim,
        }
    }

    pub fn is_mdp(&self) -> bool {
        !matches!(self, EnvironmentConfig::SmoothThresholds { .. })
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}; this build reads {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.t_list.is_empty() {
            return Err(invalid("T_list", "must not be empty"));
        }
        if self.t_list[0] == 0 {
            return Err(invalid("T_list[0]", "horizons must be at least 1"));
        }
        for (i, w) in self.t_list.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(invalid(format!("T_list[{}]", i + 1), "horizons must be strictly increasing"));
            }
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.metrics.is_empty() {
            return Err(invalid("metrics", "must name at least one metric"));
        }
        for (i, m) in self.metrics.iter().enumerate() {
            let needs_mdp = matches!(m, RegretKind::Mdp | RegretKind::Plus | RegretKind::Mul);
            if needs_mdp && !self.environment.is_mdp() {
                return Err(invalid(format!("metrics[{i}]"), format!("{m} needs an MDP environment")));
            }
        }
        for (kind, c) in &self.ceilings {
            if !c.is_finite() {
                return Err(invalid(format!("ceilings.{kind}"), "must be finite"));
            }
        }
        match &self.environment {
            EnvironmentConfig::CliffLine { n, lipschitz, sigma, .. } => {
                mentorcore::env::cliff_line(*n, *lipschitz, *sigma, 1)
                    .map_err(|e| invalid("environment", e.to_string()))?;
            }
            EnvironmentConfig::SmoothThresholds { dim, theta } => {
                if *dim == 0 {
                    return Err(invalid("environment.dim", "must be at least 1"));
                }
                if !theta.is_finite() {
                    return Err(invalid("environment.theta", "must be finite"));
                }
            }
            EnvironmentConfig::HeavenHell => {
                if self.t_list[0] < 2 {
                    return Err(invalid("T_list[0]", "Heaven-or-Hell needs T >= 2"));
                }
            }
        }
        if self.stack.is_empty() {
            return Err(invalid("stack", "needs a learner"));
        }
        if !self.stack[0].is_learner() {
            return Err(invalid("stack[0]", "the innermost layer must be a learner"));
        }
        for (i, layer) in self.stack.iter().enumerate().skip(1) {
            if layer.is_learner() {
                return Err(invalid(format!("stack[{i}]"), "only the innermost layer may be a learner"));
            }
        }
        for (i, layer) in self.stack.iter().enumerate() {
            let path = format!("stack[{i}]");
            match layer {
                LayerConfig::Budget { k } => {
                    k.resolve(1, 1.0, &format!("{path}.k"))?;
                }
                LayerConfig::Safe { epsilon } => {
                    epsilon.resolve(1, 1.0, &format!("{path}.epsilon"))?;
                }
                LayerConfig::ExpWeights { eta: Some(eta) } if !(*eta > 0.0 && eta.is_finite()) => {
                    return Err(invalid(format!("{path}.eta"), "must be positive and finite"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}
