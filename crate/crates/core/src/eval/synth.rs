//! Synthetic screening pools with controllable machine difficulty.
//!
//! Each item carries, per predicate, a few tokens from that predicate's
//! positive or negative signal set. With probability `noise[p]` the tokens
//! come from the set opposite to the gold label, which caps what any text
//! classifier can reach. The rest of the text is uniform background words.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::domain::{Item, ItemId};
use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSpec {
    pub pool_size: usize,
    /// θ_p per predicate.
    pub selectivity: Vec<f64>,
    /// Label-flip rate of the signal tokens per predicate.
    pub noise: Vec<f64>,
    /// Signal tokens per item and predicate.
    pub signal_tokens: usize,
    /// Distinct tokens in each positive or negative signal set.
    pub signal_vocab: usize,
    pub background_tokens: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for SynthesisSpec {
    fn default() -> Self {
        Self {
            pool_size: 1000,
            selectivity: vec![0.5],
            noise: vec![0.0],
            signal_tokens: 3,
            signal_vocab: 8,
            background_tokens: 12,
            vocab_size: 500,
            seed: 0,
        }
    }
}

impl SynthesisSpec {
    pub fn n_predicates(&self) -> usize {
        self.selectivity.len()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.selectivity.is_empty() {
            return invalid("synthesis needs at least one predicate");
        }
        if self.noise.len() != self.selectivity.len() {
            return invalid("synthesis noise must list one rate per predicate");
        }
        if !self.selectivity.iter().all(|&t| t > 0.0 && t < 1.0) {
            return invalid("selectivity must lie in (0,1)");
        }
        if !self.noise.iter().all(|&n| (0.0..0.5).contains(&n)) {
            return invalid("noise must lie in [0, 0.5)");
        }
        if self.signal_tokens > 0 && self.signal_vocab == 0 {
            return invalid("signal_vocab must be >= 1 when signal tokens are emitted");
        }
        if self.background_tokens > 0 && self.vocab_size == 0 {
            return invalid("vocab_size must be >= 1 when background tokens are emitted");
        }
        Ok(())
    }
}

fn signal_token(p: usize, positive: bool, j: usize) -> String {
    format!("p{}{}{}", p + 1, if positive { "pos" } else { "neg" }, j)
}

/// Deterministic in `spec.seed`. Item ids run from 1.
pub fn synthesize_dataset(spec: &SynthesisSpec) -> Result<Dataset, ConfigError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_pred = spec.n_predicates();
    let mut items = Vec::with_capacity(spec.pool_size);
    let mut gold = Vec::with_capacity(spec.pool_size);
    for i in 0..spec.pool_size {
        let labels: Vec<bool> = spec.selectivity.iter().map(|&t| rng.gen_bool(t)).collect();
        let mut words = Vec::with_capacity(n_pred * spec.signal_tokens + spec.background_tokens);
        for (p, &y) in labels.iter().enumerate() {
            let shown = y ^ rng.gen_bool(spec.noise[p]);
            for _ in 0..spec.signal_tokens {
                words.push(signal_token(p, shown, rng.gen_range(0..spec.signal_vocab)));
            }
        }
        for _ in 0..spec.background_tokens {
            words.push(format!("w{}", rng.gen_range(0..spec.vocab_size)));
        }
        words.shuffle(&mut rng);
        items.push(Item::new(ItemId(i as u64 + 1), words.join(" ")));
        gold.push(labels);
    }
    Ok(Dataset::new(items, n_pred, Some(gold)).expect("synthetic ids are unique"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_pool() {
        let spec = SynthesisSpec {
            pool_size: 0,
            ..SynthesisSpec::default()
        };
        assert!(synthesize_dataset(&spec).unwrap().is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SynthesisSpec {
            pool_size: 50,
            selectivity: vec![0.3, 0.6],
            noise: vec![0.1, 0.0],
            seed: 9,
            ..SynthesisSpec::default()
        };
        let a = synthesize_dataset(&spec).unwrap();
        let b = synthesize_dataset(&spec).unwrap();
        assert_eq!(a.items(), b.items());
        assert_eq!(a.gold(), b.gold());
    }

    #[test]
    fn noiseless_tokens_match_gold() {
        let spec = SynthesisSpec {
            pool_size: 200,
            selectivity: vec![0.4],
            noise: vec![0.0],
            ..SynthesisSpec::default()
        };
        let ds = synthesize_dataset(&spec).unwrap();
        for (pos, item) in ds.items().iter().enumerate() {
            let has_pos = item.tokens().iter().any(|t| t.starts_with("p1pos"));
            let has_neg = item.tokens().iter().any(|t| t.starts_with("p1neg"));
            assert_eq!(has_pos, ds.gold().unwrap()[pos][0]);
            assert_eq!(has_neg, !has_pos);
        }
    }

    #[test]
    fn rejects_bad_rates() {
        let bad = SynthesisSpec {
            noise: vec![0.5],
            ..SynthesisSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthesisSpec {
            selectivity: vec![1.0],
            ..SynthesisSpec::default()
        };
        assert!(bad.validate().is_err());
    }
}
