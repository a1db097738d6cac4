//! Declarative run configuration (TOML). Section and key names follow the
//! dotted config keys, e.g. `[hc] tau_in = 0.99` is `hc.tau_in`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::PredicateId;
use crate::error::ConfigError;
use crate::hybrid::DecisionThresholds;
use crate::ml::TrainConfig;
use crate::policy::PolicyConfig;
use crate::sampling::SamplingStrategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Votes collected per pair on the learning arm; odd.
    pub votes_per_learning_label: u32,
    /// Retrain after every n-th exploitation iteration.
    pub retrain_every: usize,
    /// Exploitation votes also become training labels.
    pub exploit_votes_train: bool,
    /// When false, no classifier is trained and the machine prior is the
    /// selectivity estimate (crowd-only screening).
    pub ml_enabled: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            votes_per_learning_label: 3,
            retrain_every: 5,
            exploit_votes_train: true,
            ml_enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrowdConfig {
    pub default_accuracy: f64,
    /// Per-predicate accuracy keyed by one-based predicate id.
    pub accuracy: BTreeMap<String, f64>,
    /// Half-width of per-vote accuracy jitter.
    pub jitter: f64,
}

impl Default for CrowdConfig {
    fn default() -> Self {
        Self {
            default_accuracy: 0.9,
            accuracy: BTreeMap::new(),
            jitter: 0.0,
        }
    }
}

impl CrowdConfig {
    pub fn accuracy_of(&self, p: PredicateId) -> f64 {
        self.accuracy
            .get(&p.label().to_string())
            .copied()
            .unwrap_or(self.default_accuracy)
    }

    pub fn accuracies(&self, n_predicates: usize) -> Vec<f64> {
        (0..n_predicates).map(|p| self.accuracy_of(PredicateId(p))).collect()
    }

    pub fn set_accuracies(&mut self, values: &[f64]) {
        self.accuracy = values
            .iter()
            .enumerate()
            .map(|(p, &a)| (PredicateId(p).label().to_string(), a))
            .collect();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlConfig {
    pub l2_penalty: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub class_weighting: bool,
    pub min_df: usize,
    pub cv_folds: usize,
    pub cv_beta: f64,
    /// A new cross-validation point is taken once the labeled set has grown
    /// by this factor and by at least `cv_min_step` labels.
    pub cv_growth: f64,
    pub cv_min_step: usize,
    /// Cross-validated F_β at which raw classifier output replaces the
    /// blended prior.
    pub prior_gate: f64,
}

impl Default for MlConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            l2_penalty: t.l2_penalty,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            class_weighting: t.class_weighting,
            min_df: 2,
            cv_folds: 5,
            cv_beta: 3.0,
            cv_growth: 1.1,
            cv_min_step: 20,
            prior_gate: 0.6,
        }
    }
}

impl MlConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            l2_penalty: self.l2_penalty,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            class_weighting: self.class_weighting,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Total crowd votes available.
    pub budget: u64,
    /// Pairs per iteration.
    pub batch_size: usize,
    pub seed: u64,
    /// β values reported in the metric bundle.
    pub betas: Vec<f64>,
    pub al_strategy: SamplingStrategy,
    pub engine: EngineConfig,
    pub policy: PolicyConfig,
    pub hc: DecisionThresholds,
    pub crowd: CrowdConfig,
    pub ml: MlConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            budget: 0,
            batch_size: 20,
            seed: 0,
            betas: vec![1.0, 3.0],
            al_strategy: SamplingStrategy::Uncertainty,
            engine: EngineConfig::default(),
            policy: PolicyConfig::default(),
            hc: DecisionThresholds::default(),
            crowd: CrowdConfig::default(),
            ml: MlConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.batch_size == 0 {
            return invalid("batch_size must be >= 1".into());
        }
        let k = self.engine.votes_per_learning_label;
        if k == 0 || k % 2 == 0 {
            return invalid(format!("engine.votes_per_learning_label must be odd, got {k}"));
        }
        if self.engine.retrain_every == 0 {
            return invalid("engine.retrain_every must be >= 1".into());
        }
        if self.betas.is_empty() || self.betas.iter().any(|b| !(*b > 0.0)) {
            return invalid("betas must be a non-empty list of positive numbers".into());
        }
        let acc_ok = |a: f64| (0.0..=1.0).contains(&a);
        if !acc_ok(self.crowd.default_accuracy) || !self.crowd.accuracy.values().all(|&a| acc_ok(a)) {
            return invalid("crowd accuracies must lie in [0,1]".into());
        }
        for key in self.crowd.accuracy.keys() {
            if key.parse::<usize>().ok().and_then(PredicateId::from_label).is_none() {
                return invalid(format!("crowd.accuracy key {key:?} is not a one-based predicate id"));
            }
        }
        if !(0.0..0.5).contains(&self.crowd.jitter) {
            return invalid("crowd.jitter must be in [0, 0.5)".into());
        }
        if self.ml.cv_folds < 2 || !(self.ml.cv_growth >= 1.0) || !(self.ml.cv_beta > 0.0) {
            return invalid("ml.cv_folds >= 2, ml.cv_growth >= 1 and ml.cv_beta > 0 required".into());
        }
        if !(self.ml.learning_rate > 0.0) || !(self.ml.l2_penalty >= 0.0) {
            return invalid("ml.learning_rate > 0 and ml.l2_penalty >= 0 required".into());
        }
        self.hc.validate()?;
        self.policy.validate()
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
