//! Learn-vs-exploit arm selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ArmChoice, IterationContext};
use crate::error::ConfigError;
use crate::hybrid::{expected_votes_for_item, DecisionThresholds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Baseline,
    #[default]
    FixedSwitch,
    Stochastic,
    Adaptive,
    Exp3,
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "fixed_switch" => Ok(Self::FixedSwitch),
            "stochastic" => Ok(Self::Stochastic),
            "adaptive" => Ok(Self::Adaptive),
            "exp3" => Ok(Self::Exp3),
            other => Err(format!("unknown policy kind {other:?}")),
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Baseline => "baseline",
            Self::FixedSwitch => "fixed_switch",
            Self::Stochastic => "stochastic",
            Self::Adaptive => "adaptive",
            Self::Exp3 => "exp3",
        })
    }
}

/// Flat policy settings; only the fields of the selected `kind` are read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Baseline arm.
    pub arm: ArmChoice,
    /// FixedSwitch: fraction of the budget spent learning.
    pub learn_fraction: f64,
    /// Stochastic: probability of learning at each iteration.
    pub p_learn: f64,
    /// Adaptive: trend threshold.
    pub epsilon: f64,
    /// Adaptive: learning labels collected before switching is considered.
    pub warmup_labels: usize,
    /// Adaptive: moving-average window over the accuracy curve.
    pub window: usize,
    /// Adaptive: map the trend through a logistic curve instead of a hard switch.
    pub soft_adaptive: bool,
    pub steepness: f64,
    /// Exp3 exploration rate.
    pub gamma_x: f64,
    /// Exp3: divide the reward by the probability of the pulled arm.
    pub importance_weighting: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::FixedSwitch,
            arm: ArmChoice::Exploit,
            learn_fraction: 0.2,
            p_learn: 0.5,
            epsilon: 0.02,
            warmup_labels: 500,
            window: 3,
            soft_adaptive: false,
            steepness: 200.0,
            gamma_x: 0.1,
            importance_weighting: false,
        }
    }
}

impl PolicyConfig {
    pub fn baseline(arm: ArmChoice) -> Self {
        Self { kind: PolicyKind::Baseline, arm, ..Self::default() }
    }

    pub fn fixed_switch(learn_fraction: f64) -> Self {
        Self { kind: PolicyKind::FixedSwitch, learn_fraction, ..Self::default() }
    }

    pub fn stochastic(p_learn: f64) -> Self {
        Self { kind: PolicyKind::Stochastic, p_learn, ..Self::default() }
    }

    pub fn adaptive() -> Self {
        Self { kind: PolicyKind::Adaptive, ..Self::default() }
    }

    pub fn exp3(gamma_x: f64) -> Self {
        Self { kind: PolicyKind::Exp3, gamma_x, ..Self::default() }
    }

    /// The policy's scalar parameter, for reporting.
    pub fn param(&self) -> Option<f64> {
        match self.kind {
            PolicyKind::Baseline => None,
            PolicyKind::FixedSwitch => Some(self.learn_fraction),
            PolicyKind::Stochastic => Some(self.p_learn),
            PolicyKind::Adaptive => Some(self.epsilon),
            PolicyKind::Exp3 => Some(self.gamma_x),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("policy.{name} must be in [0,1], got {v}")))
            }
        };
        unit("learn_fraction", self.learn_fraction)?;
        unit("p_learn", self.p_learn)?;
        if !(self.gamma_x > 0.0 && self.gamma_x <= 1.0) {
            return Err(ConfigError::Invalid(format!("policy.gamma_x must be in (0,1], got {}", self.gamma_x)));
        }
        if self.window == 0 {
            return Err(ConfigError::Invalid("policy.window must be >= 1".into()));
        }
        if !(self.steepness > 0.0) {
            return Err(ConfigError::Invalid("policy.steepness must be > 0".into()));
        }
        Ok(())
    }
}

/// Exp3 probability of pulling the learning arm.
pub fn exp3_probability(w_learn: f64, w_exploit: f64, gamma_x: f64) -> f64 {
    // (1-γ)·s + γ/2, arranged to round exactly on decimal inputs.
    let share = w_learn / (w_learn + w_exploit);
    share + gamma_x * (0.5 - share)
}

/// Exp3 weight update for the pulled arm.
pub fn exp3_update_weight(w: f64, reward: f64, gamma_x: f64) -> f64 {
    w * (0.5 * gamma_x * reward).exp()
}

/// Relative change of the moving-averaged accuracy between the last two
/// points. `+inf` when fewer than two points exist.
pub fn accuracy_trend(history: &[f64], window: usize) -> f64 {
    if history.len() < 2 {
        return f64::INFINITY;
    }
    let window = window.max(1);
    let avg = |end: usize| {
        let start = end.saturating_sub(window);
        history[start..end].iter().sum::<f64>() / (end - start) as f64
    };
    let now = avg(history.len());
    let before = avg(history.len() - 1);
    (now - before) / before.max(1e-9)
}

/// Logistic map from the accuracy trend to a learning probability, centred
/// on the trend threshold `epsilon`.
pub fn trend_to_probability(delta: f64, steepness: f64, epsilon: f64) -> f64 {
    1.0 / (1.0 + (-steepness * (delta - epsilon)).exp())
}

/// Expected votes still needed to decide every undecided item.
pub fn expected_remaining_cost(
    ctx: &IterationContext,
    accuracies: &[f64],
    thresholds: &DecisionThresholds,
) -> f64 {
    let cap = thresholds.max_votes_per_pair as f64 * ctx.psi_hc.n_predicates() as f64;
    ctx.ui
        .iter()
        .map(|&i| {
            let c = expected_votes_for_item(ctx.psi_hc.row(i), accuracies, thresholds);
            if c.is_finite() {
                c.min(cap)
            } else {
                cap
            }
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardEstimate {
    /// Cost reduction per vote spent, clipped to [0, 1].
    pub value: f64,
    pub cost_before: f64,
    pub cost_after: f64,
}

pub fn reward_from_costs(cost_before: f64, cost_after: f64, votes_spent: u64) -> RewardEstimate {
    let raw = (cost_before - cost_after) / votes_spent.max(1) as f64;
    RewardEstimate {
        value: raw.clamp(0.0, 1.0),
        cost_before,
        cost_after,
    }
}

pub fn estimate_reward(
    before: &IterationContext,
    after: &IterationContext,
    accuracies: &[f64],
    thresholds: &DecisionThresholds,
) -> RewardEstimate {
    reward_from_costs(
        expected_remaining_cost(before, accuracies, thresholds),
        expected_remaining_cost(after, accuracies, thresholds),
        after.spent.saturating_sub(before.spent),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    config: PolicyConfig,
    switched: bool,
    w_learn: f64,
    w_exploit: f64,
    last_p_learn: f64,
    rewards: Vec<(ArmChoice, f64)>,
}

impl PolicyState {
    pub fn new(config: PolicyConfig) -> Self {
        Self {
            config,
            switched: false,
            w_learn: 1.0,
            w_exploit: 1.0,
            last_p_learn: 1.0,
            rewards: Vec::new(),
        }
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn weights(&self) -> (f64, f64) {
        (self.w_learn, self.w_exploit)
    }

    pub fn has_switched(&self) -> bool {
        self.switched
    }

    pub fn rewards(&self) -> &[(ArmChoice, f64)] {
        &self.rewards
    }

    pub fn choose_arm<R: Rng + ?Sized>(&mut self, ctx: &IterationContext, rng: &mut R) -> ArmChoice {
        let c = &self.config;
        let arm = match c.kind {
            PolicyKind::Baseline => c.arm,
            PolicyKind::FixedSwitch => {
                if (ctx.spent as f64) < c.learn_fraction * ctx.budget as f64 {
                    ArmChoice::Learn
                } else {
                    ArmChoice::Exploit
                }
            }
            PolicyKind::Stochastic => bernoulli_arm(c.p_learn, rng),
            PolicyKind::Adaptive => {
                if self.switched {
                    ArmChoice::Exploit
                } else {
                    let values: Vec<f64> = ctx.accuracy.iter().map(|p| p.fbeta).collect();
                    let delta = accuracy_trend(&values, c.window);
                    let warm = ctx.learning_labels >= c.warmup_labels;
                    if !warm {
                        ArmChoice::Learn
                    } else if c.soft_adaptive {
                        bernoulli_arm(trend_to_probability(delta, c.steepness, c.epsilon), rng)
                    } else if delta < c.epsilon {
                        self.switched = true;
                        ArmChoice::Exploit
                    } else {
                        ArmChoice::Learn
                    }
                }
            }
            PolicyKind::Exp3 => {
                let p = exp3_probability(self.w_learn, self.w_exploit, c.gamma_x);
                self.last_p_learn = p;
                bernoulli_arm(p, rng)
            }
        };
        arm
    }

    /// Feed back the reward of the arm pulled this iteration.
    pub fn observe(&mut self, arm: ArmChoice, reward: &RewardEstimate) {
        self.rewards.push((arm, reward.value));
        if self.config.kind != PolicyKind::Exp3 {
            return;
        }
        let gamma = self.config.gamma_x;
        let mut x = reward.value;
        if self.config.importance_weighting {
            let p = match arm {
                ArmChoice::Learn => self.last_p_learn,
                ArmChoice::Exploit => 1.0 - self.last_p_learn,
            };
            x /= p.max(1e-12);
        }
        match arm {
            ArmChoice::Learn => self.w_learn = exp3_update_weight(self.w_learn, x, gamma),
            ArmChoice::Exploit => self.w_exploit = exp3_update_weight(self.w_exploit, x, gamma),
        }
        // Rescaling both weights leaves the arm probabilities unchanged.
        let top = self.w_learn.max(self.w_exploit);
        if top > 1e200 {
            self.w_learn /= top;
            self.w_exploit /= top;
        }
    }
}

fn bernoulli_arm<R: Rng + ?Sized>(p_learn: f64, rng: &mut R) -> ArmChoice {
    if rng.gen::<f64>() < p_learn {
        ArmChoice::Learn
    } else {
        ArmChoice::Exploit
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AccuracyPoint, PsiTable};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx(spent: u64, budget: u64) -> IterationContext {
        IterationContext {
            t: 1,
            psi_ml: PsiTable::filled(1, 1, 0.5),
            psi_hc: PsiTable::filled(1, 1, 0.5),
            ci: vec![],
            ui: vec![0],
            spent,
            budget,
            learning_labels: 0,
            accuracy: vec![],
        }
    }

    #[test]
    fn fixed_switch_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = PolicyState::new(PolicyConfig::fixed_switch(0.3));
        assert_eq!(p.choose_arm(&ctx(10, 100), &mut rng), ArmChoice::Learn);
        assert_eq!(p.choose_arm(&ctx(50, 100), &mut rng), ArmChoice::Exploit);
        let mut never = PolicyState::new(PolicyConfig::fixed_switch(0.0));
        assert_eq!(never.choose_arm(&ctx(0, 100), &mut rng), ArmChoice::Exploit);
        let mut always = PolicyState::new(PolicyConfig::fixed_switch(1.0));
        assert_eq!(always.choose_arm(&ctx(99, 100), &mut rng), ArmChoice::Learn);
    }

    #[test]
    fn adaptive_switches_once_trend_flattens() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = PolicyState::new(PolicyConfig::adaptive());
        let mut c = ctx(0, 100);
        c.accuracy = vec![
            AccuracyPoint { labels: 480, fbeta: 0.50 },
            AccuracyPoint { labels: 500, fbeta: 0.505 },
        ];
        c.learning_labels = 499;
        assert_eq!(p.choose_arm(&c, &mut rng), ArmChoice::Learn);
        c.learning_labels = 500;
        assert_eq!(p.choose_arm(&c, &mut rng), ArmChoice::Exploit);
        // Monotone: improving accuracy later does not bring learning back.
        c.accuracy.push(AccuracyPoint { labels: 600, fbeta: 0.9 });
        assert_eq!(p.choose_arm(&c, &mut rng), ArmChoice::Exploit);
    }

    #[test]
    fn exp3_probability_examples() {
        assert_eq!(exp3_probability(1.0, 1.0, 0.2), 0.5);
        assert!((exp3_probability(3.0, 1.0, 0.1) - 0.725).abs() < 1e-15);
        assert_eq!(exp3_probability(17.0, 0.3, 1.0), 0.5);
    }

    #[test]
    fn exp3_update_examples() {
        assert_eq!(exp3_update_weight(1.7, 0.0, 0.3), 1.7);
        assert!((exp3_update_weight(1.0, 1.0, 0.1) - 1.05127).abs() < 1e-5);
        assert!((exp3_update_weight(2.0, 0.5, 0.5) - 2.26630).abs() < 1e-5);
    }

    #[test]
    fn exp3_only_updates_pulled_arm() {
        let mut p = PolicyState::new(PolicyConfig::exp3(0.1));
        p.observe(ArmChoice::Learn, &reward_from_costs(10.0, 0.0, 10));
        let (wl, we) = p.weights();
        assert!((wl - 0.05f64.exp()).abs() < 1e-12);
        assert_eq!(we, 1.0);
    }

    #[test]
    fn reward_examples() {
        assert_eq!(reward_from_costs(50.0, 50.0, 10).value, 0.0);
        assert_eq!(reward_from_costs(100.0, 80.0, 10).value, 1.0);
        assert!((reward_from_costs(100.0, 95.0, 10).value - 0.5).abs() < 1e-15);
        assert_eq!(reward_from_costs(100.0, 120.0, 10).value, 0.0);
    }

    #[test]
    fn trend_examples() {
        assert!((accuracy_trend(&[0.5, 0.6], 1) - 0.2).abs() < 1e-12);
        assert!(accuracy_trend(&[0.7, 0.7, 0.7], 3).abs() < 1e-12);
        assert_eq!(accuracy_trend(&[0.7], 3), f64::INFINITY);
    }

    #[test]
    fn trend_mapping_examples() {
        let (s, eps) = (200.0, 0.02);
        assert_eq!(trend_to_probability(eps, s, eps), 0.5);
        assert!(trend_to_probability(1.0, s, eps) > 1.0 - 1e-12);
        assert!((trend_to_probability(eps + 9f64.ln() / s, s, eps) - 0.9).abs() < 1e-12);
        assert_eq!(trend_to_probability(f64::INFINITY, s, eps), 1.0);
    }
}
