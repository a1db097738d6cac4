//! Multi-seed experiment grids over policies, budgets and crowd accuracies.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::domain::ArmChoice;
use crate::engine;
use crate::error::ConfigError;
use crate::eval::metrics::MetricBundle;
use crate::eval::scenario::Scenario;
use crate::policy::{PolicyConfig, PolicyKind};

/// A named policy setting. `ml_enabled = false` turns the run into
/// crowd-only screening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyVariant {
    pub name: String,
    pub policy: PolicyConfig,
    pub ml_enabled: bool,
}

impl PolicyVariant {
    pub fn crowd_only() -> Self {
        Self {
            name: "crowd_only".into(),
            policy: PolicyConfig::baseline(ArmChoice::Exploit),
            ml_enabled: false,
        }
    }

    pub fn hybrid(policy: PolicyConfig) -> Self {
        let name = match (policy.kind, policy.arm) {
            (PolicyKind::Baseline, ArmChoice::Learn) => "baseline_learn".to_string(),
            (PolicyKind::Baseline, ArmChoice::Exploit) => "baseline_exploit".to_string(),
            (kind, _) => kind.to_string(),
        };
        Self {
            name,
            policy,
            ml_enabled: true,
        }
    }

    pub fn fixed_switch(learn_fraction: f64) -> Self {
        Self::hybrid(PolicyConfig::fixed_switch(learn_fraction))
    }

    pub fn param(&self) -> Option<f64> {
        self.policy.param()
    }

    /// Parses `crowd_only`, `adaptive`, `baseline_learn`, `baseline_exploit`,
    /// or `kind:param` such as `fixed_switch:0.2`, `stochastic:0.5`, `exp3:0.1`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let bad = || ConfigError::Invalid(format!("unknown policy variant {text:?}"));
        let (kind, param) = match text.split_once(':') {
            Some((k, v)) => (k, Some(v.parse::<f64>().map_err(|_| bad())?)),
            None => (text, None),
        };
        let variant = match (kind, param) {
            ("crowd_only", None) => Self::crowd_only(),
            ("baseline_learn", None) => Self::hybrid(PolicyConfig::baseline(ArmChoice::Learn)),
            ("baseline_exploit", None) => Self::hybrid(PolicyConfig::baseline(ArmChoice::Exploit)),
            ("adaptive", None) => Self::hybrid(PolicyConfig::adaptive()),
            ("fixed_switch", Some(g)) => Self::fixed_switch(g),
            ("stochastic", Some(p)) => Self::hybrid(PolicyConfig::stochastic(p)),
            ("exp3", Some(g)) => Self::hybrid(PolicyConfig::exp3(g)),
            _ => return Err(bad()),
        };
        variant.policy.validate()?;
        Ok(variant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub scenario: Scenario,
    pub policies: Vec<PolicyVariant>,
    pub budgets_per_item: Vec<f64>,
    /// `None` keeps the scenario's own accuracies.
    pub crowd_accuracies: Vec<Option<f64>>,
    pub seeds: usize,
    /// Settings shared by every cell; budget, seed, policy and crowd
    /// accuracy are overwritten per run.
    pub base: RunConfig,
}

impl ExperimentGrid {
    pub fn new(scenario: Scenario) -> Self {
        let base = RunConfig {
            engine: scenario.engine.clone(),
            ml: scenario.ml.clone(),
            ..RunConfig::default()
        };
        Self {
            scenario,
            policies: vec![PolicyVariant::crowd_only()],
            budgets_per_item: (1..=10).map(f64::from).collect(),
            crowd_accuracies: vec![None],
            seeds: 10,
            base,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.policies.is_empty() || self.budgets_per_item.is_empty() || self.crowd_accuracies.is_empty() {
            return Err(ConfigError::Invalid("experiment grid needs at least one cell".into()));
        }
        if self.seeds == 0 {
            return Err(ConfigError::Invalid("experiment grid needs seeds >= 1".into()));
        }
        if self.budgets_per_item.iter().any(|b| !(*b >= 0.0)) {
            return Err(ConfigError::Invalid("budgets per item must be >= 0".into()));
        }
        self.scenario.synthesis.validate()?;
        for v in &self.policies {
            v.policy.validate()?;
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<CellKey> {
        let mut cells = Vec::new();
        for (pi, _) in self.policies.iter().enumerate() {
            for &budget in &self.budgets_per_item {
                for &acc in &self.crowd_accuracies {
                    cells.push(CellKey {
                        policy: pi,
                        budget_per_item: budget,
                        crowd_acc: acc,
                    });
                }
            }
        }
        cells
    }

    /// The exact configuration of one run.
    pub fn run_config(&self, key: &CellKey, seed: u64, pool_size: usize) -> RunConfig {
        let variant = &self.policies[key.policy];
        let mut cfg = self.base.clone();
        cfg.seed = seed;
        cfg.budget = (key.budget_per_item * pool_size as f64).round() as u64;
        cfg.policy = variant.policy;
        cfg.engine.ml_enabled = variant.ml_enabled;
        let n = self.scenario.n_predicates();
        let acc = match key.crowd_acc {
            Some(a) => vec![a; n],
            None => self.scenario.accuracies(seed),
        };
        cfg.crowd.set_accuracies(&acc);
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub policy: usize,
    pub budget_per_item: f64,
    pub crowd_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub metrics: MetricBundle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cost: Stat,
    pub precision: Stat,
    pub recall: Stat,
    /// `(β, stat)` for each reported β.
    pub fbeta: Vec<(f64, Stat)>,
}

impl CellSummary {
    pub fn from_outcomes(outcomes: &[SeedOutcome], betas: &[f64]) -> Self {
        let field = |f: &dyn Fn(&MetricBundle) -> f64| {
            Stat::of(&outcomes.iter().map(|o| f(&o.metrics)).collect::<Vec<_>>())
        };
        Self {
            cost: field(&|m| m.cost_per_item),
            precision: field(&|m| m.precision),
            recall: field(&|m| m.recall),
            fbeta: betas
                .iter()
                .map(|&b| (b, field(&|m| m.f(b).unwrap_or(f64::NAN))))
                .collect(),
        }
    }

    pub fn f(&self, beta: f64) -> Option<Stat> {
        self.fbeta.iter().find(|(b, _)| *b == beta).map(|(_, s)| *s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub scenario: String,
    pub policy: String,
    pub param: Option<f64>,
    pub budget_per_item: f64,
    pub crowd_acc: Option<f64>,
    pub outcomes: Vec<SeedOutcome>,
    pub summary: CellSummary,
    /// First error met by any seed; the cell is then excluded from analysis.
    pub failed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub cells: Vec<CellResult>,
}

impl ResultsTable {
    pub fn find(&self, policy: &str, param: Option<f64>, budget: f64, acc: Option<f64>) -> Option<&CellResult> {
        self.cells.iter().find(|c| {
            c.policy == policy && c.param == param && c.budget_per_item == budget && c.crowd_acc == acc
        })
    }
}

fn run_one(grid: &ExperimentGrid, key: &CellKey, seed: u64, data: &Dataset) -> Result<MetricBundle, String> {
    let cfg = grid.run_config(key, seed, data.len());
    let result = engine::run(&cfg, data).map_err(|e| e.to_string())?;
    result.metrics.ok_or_else(|| "dataset has no gold labels".to_string())
}

/// Runs every cell over seeds `0..grid.seeds`. Seed `s` uses the same
/// dataset in every cell. A failing run marks its cell failed and the grid
/// carries on.
pub fn run_experiment(grid: &ExperimentGrid) -> Result<ResultsTable, ConfigError> {
    grid.validate()?;
    let seeds: Vec<u64> = (0..grid.seeds as u64).collect();
    let datasets = seeds
        .iter()
        .map(|&s| grid.scenario.dataset(s))
        .collect::<Result<Vec<_>, _>>()?;
    let cells = grid.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..seeds.len()).map(move |s| (c, s)))
        .collect();
    let work = |&(c, s): &(usize, usize)| run_one(grid, &cells[c], seeds[s], &datasets[s]);
    #[cfg(feature = "parallel")]
    let outputs: Vec<Result<MetricBundle, String>> = jobs.par_iter().map(work).collect();
    #[cfg(not(feature = "parallel"))]
    let outputs: Vec<Result<MetricBundle, String>> = jobs.iter().map(work).collect();

    let mut results = Vec::with_capacity(cells.len());
    let mut outputs = outputs.into_iter();
    for key in &cells {
        let mut outcomes = Vec::new();
        let mut failed = None;
        for &seed in &seeds {
            match outputs.next().expect("one output per job") {
                Ok(metrics) => outcomes.push(SeedOutcome { seed, metrics }),
                Err(e) => {
                    failed.get_or_insert(format!("seed {seed}: {e}"));
                }
            }
        }
        let variant = &grid.policies[key.policy];
        results.push(CellResult {
            scenario: grid.scenario.name.clone(),
            policy: variant.name.clone(),
            param: variant.param(),
            budget_per_item: key.budget_per_item,
            crowd_acc: key.crowd_acc,
            summary: CellSummary::from_outcomes(&outcomes, &grid.base.betas),
            outcomes,
            failed,
        });
    }
    Ok(ResultsTable { cells: results })
}
