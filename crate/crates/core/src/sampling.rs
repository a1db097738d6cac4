//! Item selection for the learning arm.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{PredicateId, PsiTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingStrategy {
    Random,
    #[default]
    Uncertainty,
}

impl std::str::FromStr for SamplingStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Self::Random),
            "uncertainty" => Ok(Self::Uncertainty),
            other => Err(format!("unknown al_strategy {other:?}")),
        }
    }
}

/// Round-robin cursor over predicates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredicateRotation {
    next: usize,
    n: usize,
}

impl PredicateRotation {
    pub fn new(n_predicates: usize) -> Self {
        Self {
            next: 0,
            n: n_predicates,
        }
    }

    pub fn peek(&self) -> PredicateId {
        PredicateId(self.next)
    }

    pub fn advance(&mut self) -> PredicateId {
        let p = PredicateId(self.next);
        self.next = (self.next + 1) % self.n.max(1);
        p
    }
}

/// Pick up to `n` items for one predicate.
///
/// Uncertainty sampling returns the items whose `psi_ml` is closest to 0.5,
/// ties broken by ascending position. Random sampling draws uniformly
/// without replacement.
pub fn select_items<R: Rng + ?Sized>(
    strategy: SamplingStrategy,
    psi_ml: &PsiTable,
    predicate: PredicateId,
    candidates: &[usize],
    n: usize,
    rng: &mut R,
) -> Vec<usize> {
    let n = n.min(candidates.len());
    if n == 0 {
        return Vec::new();
    }
    match strategy {
        SamplingStrategy::Random => index::sample(rng, candidates.len(), n)
            .into_iter()
            .map(|i| candidates[i])
            .collect(),
        SamplingStrategy::Uncertainty => {
            let mut scored: Vec<(f64, usize)> = candidates
                .iter()
                .map(|&i| ((psi_ml.get(i, predicate) - 0.5).abs(), i))
                .collect();
            let by_margin = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if n < scored.len() {
                scored.select_nth_unstable_by(n - 1, by_margin);
                scored.truncate(n);
            }
            scored.sort_by(by_margin);
            scored.into_iter().map(|(_, i)| i).collect()
        }
    }
}

/// Select the learning batch for the next predicate in the rotation.
///
/// `candidates_for(p)` lists the undecided items still lacking a training
/// label for `p`. A predicate with no candidates is skipped and the next one
/// in the rotation is tried; an empty result means no predicate has any.
pub fn select_learning_batch<R, F>(
    strategy: SamplingStrategy,
    psi_ml: &PsiTable,
    candidates_for: F,
    n: usize,
    rotation: &mut PredicateRotation,
    rng: &mut R,
) -> Vec<(usize, PredicateId)>
where
    R: Rng + ?Sized,
    F: Fn(PredicateId) -> Vec<usize>,
{
    for _ in 0..rotation.n {
        let p = rotation.advance();
        let candidates = candidates_for(p);
        if candidates.is_empty() {
            continue;
        }
        return select_items(strategy, psi_ml, p, &candidates, n, rng)
            .into_iter()
            .map(|i| (i, p))
            .collect();
    }
    Vec::new()
}
