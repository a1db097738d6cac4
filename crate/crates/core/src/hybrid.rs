//! Hybrid crowd-machine classification.
//!
//! Each (item, predicate) belief starts from a machine prior and is updated
//! by crowd votes under a symmetric-noise model: votes are independent given
//! the true label and each is correct with probability `a_p`. Items pass the
//! screen when the product of their predicate posteriors clears `tau_in` and
//! are excluded as soon as one predicate (or the product) falls below
//! `tau_out`.
//!
//! Crowd effort is directed shortest-run style: every open pair is scored by
//! the number of votes it would take to push its item across a threshold,
//! measured as log-odds distance over the log-likelihood ratio of one vote.

use serde::{Deserialize, Serialize};

use crate::domain::{
    clamp_accuracy, Decision, DecisionSource, ItemId, PredicateId, PsiTable, Verdict, VoteLedger,
    VoteTally,
};
use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecisionThresholds {
    pub tau_in: f64,
    /// Per-predicate (and conjunctive) exclusion threshold.
    pub tau_out: f64,
    pub max_votes_per_pair: u32,
}

impl Default for DecisionThresholds {
    fn default() -> Self {
        Self {
            tau_in: 0.99,
            tau_out: 0.01,
            max_votes_per_pair: 10,
        }
    }
}

impl DecisionThresholds {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0 < self.tau_out && self.tau_out < 0.5 && 0.5 < self.tau_in && self.tau_in < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "thresholds must satisfy 0 < tau_out < 0.5 < tau_in < 1 (got {} / {})",
                self.tau_out, self.tau_in
            )));
        }
        if self.max_votes_per_pair == 0 {
            return Err(ConfigError::Invalid("max_votes_per_pair must be >= 1".into()));
        }
        Ok(())
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Log-likelihood ratio carried by one vote at accuracy `a`.
pub fn vote_weight(accuracy: f64) -> f64 {
    let a = clamp_accuracy(accuracy);
    (a / (1.0 - a)).ln()
}

/// Posterior that the predicate holds, given the prior and the vote tally.
pub fn predicate_posterior(prior: f64, votes: VoteTally, accuracy: f64) -> f64 {
    if prior <= 0.0 {
        return 0.0;
    }
    if prior >= 1.0 {
        return 1.0;
    }
    let net = votes.yes as f64 - votes.no as f64;
    crate::ml::sigmoid(logit(prior) + net * vote_weight(accuracy))
}

/// Conjunctive inclusion probability, predicates assumed independent.
pub fn inclusion_probability(posteriors: &[f64]) -> f64 {
    posteriors.iter().product()
}

pub fn apply_decision_rule(
    posteriors: &[f64],
    inclusion: f64,
    thresholds: &DecisionThresholds,
) -> Verdict {
    if inclusion < thresholds.tau_out || posteriors.iter().any(|&p| p < thresholds.tau_out) {
        Verdict::Out
    } else if inclusion > thresholds.tau_in {
        Verdict::In
    } else {
        Verdict::Undecided
    }
}

/// Shrink an unproven classifier's output toward the selectivity estimate.
/// Raw output is used once its cross-validated accuracy reaches `gate`.
pub fn blend_prior(psi_ml: f64, selectivity: f64, cv_fbeta: Option<f64>, gate: f64) -> f64 {
    match cv_fbeta {
        Some(f) if f >= gate => psi_ml,
        _ => 0.5 * psi_ml + 0.5 * selectivity,
    }
}

/// Votes on predicate `p` needed to decide the item, holding the other
/// predicates fixed. Infinite when votes on `p` alone cannot decide it.
pub fn expected_votes_for_pair(
    posteriors: &[f64],
    p: PredicateId,
    accuracy: f64,
    thresholds: &DecisionThresholds,
) -> f64 {
    let step = vote_weight(accuracy);
    let current = logit(posteriors[p.0]);
    let rest: f64 = posteriors
        .iter()
        .enumerate()
        .filter(|&(q, _)| q != p.0)
        .map(|(_, &v)| v)
        .product();

    // Exclusion: per-predicate, or the product dropping under tau_out.
    let out_target = if rest > 0.0 {
        (thresholds.tau_out / rest).min(1.0).max(thresholds.tau_out)
    } else {
        1.0
    };
    let to_out = if out_target >= 1.0 {
        0.0
    } else {
        (current - logit(out_target)).max(0.0) / step
    };

    let to_in = if rest > thresholds.tau_in {
        ((logit(thresholds.tau_in / rest) - current).max(0.0)) / step
    } else {
        f64::INFINITY
    };
    to_out.min(to_in)
}

/// Expected votes to decide an item: its cheapest predicate.
pub fn expected_votes_for_item(
    posteriors: &[f64],
    accuracies: &[f64],
    thresholds: &DecisionThresholds,
) -> f64 {
    (0..posteriors.len())
        .map(|p| expected_votes_for_pair(posteriors, PredicateId(p), accuracies[p], thresholds))
        .fold(f64::INFINITY, f64::min)
}

/// Screening value of asking about a predicate: how often it excludes,
/// times how informative one vote is.
pub fn predicate_priority(selectivity: f64, accuracy: f64) -> f64 {
    (1.0 - selectivity) * (clamp_accuracy(accuracy) - 0.5)
}

/// An undecided item as seen by the crowd-task selector.
#[derive(Debug, Clone, Copy)]
pub struct CandidateItem<'a> {
    pub item: usize,
    pub posteriors: &'a [f64],
    pub vote_counts: &'a [u32],
}

/// Pick up to `n` (item, predicate) pairs, at most one per item, that are
/// closest to a decision. Pairs at the vote cap are skipped.
pub fn select_classification_batch(
    candidates: &[CandidateItem<'_>],
    selectivity: &[f64],
    accuracies: &[f64],
    thresholds: &DecisionThresholds,
    n: usize,
) -> Vec<(usize, PredicateId)> {
    let priority: Vec<f64> = selectivity
        .iter()
        .zip(accuracies)
        .map(|(&s, &a)| predicate_priority(s, a))
        .collect();
    let mut best: Vec<(f64, f64, usize, PredicateId)> = candidates
        .iter()
        .filter_map(|c| {
            (0..c.posteriors.len())
                .filter(|&p| c.vote_counts[p] < thresholds.max_votes_per_pair)
                .map(|p| {
                    let cost = expected_votes_for_pair(c.posteriors, PredicateId(p), accuracies[p], thresholds);
                    (cost, priority[p], c.item, PredicateId(p))
                })
                .min_by(rank)
        })
        .collect();
    if n < best.len() {
        best.select_nth_unstable_by(n.saturating_sub(1), rank);
        best.truncate(n);
    }
    best.sort_by(rank);
    best.into_iter().map(|(_, _, i, p)| (i, p)).collect()
}

fn rank(a: &(f64, f64, usize, PredicateId), b: &(f64, f64, usize, PredicateId)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0)
        .then(b.1.total_cmp(&a.1))
        .then(a.2.cmp(&b.2))
        .then(a.3.cmp(&b.3))
}

/// Machine-only verdicts for whatever is still undecided: In iff the product
/// of the machine probabilities is at least 0.5.
pub fn finalize_with_ml(ui: &[usize], psi_ml: &PsiTable, ids: &[ItemId]) -> Vec<(usize, Decision)> {
    ui.iter()
        .map(|&pos| {
            let verdict = if inclusion_probability(psi_ml.row(pos)) >= 0.5 {
                Verdict::In
            } else {
                Verdict::Out
            };
            (
                pos,
                Decision {
                    item_id: ids[pos],
                    verdict,
                    source: DecisionSource::MlFallback,
                },
            )
        })
        .collect()
}

/// Per-pair posteriors and per-item inclusion probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTable {
    pub posteriors: PsiTable,
    pub inclusion: Vec<f64>,
}

impl PosteriorTable {
    /// Recompute everything from priors, the vote ledger and accuracies.
    pub fn from_ledger(priors: &PsiTable, ledger: &VoteLedger, ids: &[ItemId], accuracies: &[f64]) -> Self {
        let n_pred = priors.n_predicates();
        let mut posteriors = priors.clone();
        let mut inclusion = Vec::with_capacity(ids.len());
        for (pos, &id) in ids.iter().enumerate() {
            for p in (0..n_pred).map(PredicateId) {
                let post = predicate_posterior(priors.get(pos, p), ledger.tally(id, p), accuracies[p.0]);
                posteriors.set(pos, p, post);
            }
            inclusion.push(inclusion_probability(posteriors.row(pos)));
        }
        Self { posteriors, inclusion }
    }
}
