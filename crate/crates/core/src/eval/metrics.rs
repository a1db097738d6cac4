//! Screening quality and cost.

use serde::{Deserialize, Serialize};

use crate::domain::{Decision, ItemId, Verdict};
use crate::error::DataError;

/// F_β from confusion counts. Zero when precision and recall are both zero
/// (including the empty cases).
pub fn f_beta(tp: usize, fp: usize, fn_: usize, beta: f64) -> f64 {
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    f_beta_from_rates(p, r, beta)
}

pub fn f_beta_from_rates(precision: f64, recall: f64, beta: f64) -> f64 {
    if precision == 0.0 && recall == 0.0 {
        return 0.0;
    }
    let b2 = beta * beta;
    (1.0 + b2) * precision * recall / (b2 * precision + recall)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaScore {
    pub beta: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub precision: f64,
    pub recall: f64,
    pub fbeta: Vec<BetaScore>,
    /// Mean crowd votes per pool item.
    pub cost_per_item: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl MetricBundle {
    pub fn f(&self, beta: f64) -> Option<f64> {
        self.fbeta.iter().find(|s| s.beta == beta).map(|s| s.value)
    }

    pub fn items(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Scores final verdicts against gold, where `gold(id)` tells whether the
/// item passes every predicate. Every decision must be In or Out.
pub fn compute_metrics<G>(
    decisions: &[Decision],
    gold: G,
    betas: &[f64],
    votes_spent: u64,
) -> Result<MetricBundle, DataError>
where
    G: Fn(ItemId) -> Option<bool>,
{
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for d in decisions {
        let truth = gold(d.item_id).ok_or(DataError::MissingGold(d.item_id))?;
        let predicted = match d.verdict {
            Verdict::In => true,
            Verdict::Out => false,
            Verdict::Undecided => return Err(DataError::NotFinal(d.item_id)),
        };
        match (predicted, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Ok(MetricBundle {
        precision,
        recall,
        fbeta: betas
            .iter()
            .map(|&beta| BetaScore {
                beta,
                value: f_beta_from_rates(precision, recall, beta),
            })
            .collect(),
        cost_per_item: if decisions.is_empty() {
            0.0
        } else {
            votes_spent as f64 / decisions.len() as f64
        },
        tp,
        fp,
        fn_,
        tn,
    })
}
