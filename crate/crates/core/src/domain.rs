//! Screening pool, predicates, votes and budget bookkeeping.
//!
//! Items are addressed two ways: by their external [`ItemId`] (what the
//! dataset file carries) and by their position in the pool (`usize`), which
//! is what the dense per-iteration tables are indexed by.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// Lowest crowd accuracy accepted by any odds computation.
pub const MIN_ACCURACY: f64 = 0.5 + 1e-6;
/// Highest crowd accuracy accepted by any odds computation.
pub const MAX_ACCURACY: f64 = 1.0 - 1e-3;

/// Clamp a crowd accuracy into `[0.5 + 1e-6, 1 - 1e-3]`.
pub fn clamp_accuracy(a: f64) -> f64 {
    if a.is_nan() {
        return MIN_ACCURACY;
    }
    a.clamp(MIN_ACCURACY, MAX_ACCURACY)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u64);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Zero-based predicate index. Files and config keys use the one-based
/// label (`gold_p1` is `PredicateId(0)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredicateId(pub usize);

impl PredicateId {
    pub fn from_label(label: usize) -> Option<Self> {
        label.checked_sub(1).map(PredicateId)
    }

    pub fn label(self) -> usize {
        self.0 + 1
    }
}

impl fmt::Display for PredicateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.label())
    }
}

/// Lowercase, replace anything that is not alphanumeric with a space, split
/// on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    id: ItemId,
    text: String,
    tokens: Vec<String>,
}

impl Item {
    pub fn new(id: ItemId, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Self { id, text, tokens }
    }

    pub fn id(&self) -> ItemId {
        self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub id: PredicateId,
    pub description: String,
    /// Online estimate of the fraction of items satisfying the predicate.
    pub selectivity_estimate: f64,
    /// Clamped crowd accuracy.
    pub crowd_accuracy: f64,
}

impl Predicate {
    pub fn new(id: PredicateId, description: impl Into<String>, crowd_accuracy: f64) -> Self {
        Self {
            id,
            description: description.into(),
            selectivity_estimate: 0.5,
            crowd_accuracy: clamp_accuracy(crowd_accuracy),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoteValue {
    Yes,
    No,
}

impl VoteValue {
    pub fn from_bool(yes: bool) -> Self {
        if yes {
            VoteValue::Yes
        } else {
            VoteValue::No
        }
    }

    pub fn is_yes(self) -> bool {
        self == VoteValue::Yes
    }
}

/// Which arm asked for a vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    Learning,
    Exploitation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub item_id: ItemId,
    pub predicate_id: PredicateId,
    pub value: VoteValue,
    pub iteration: u32,
    pub purpose: Purpose,
    /// Pass-through worker identifier for ingested votes.
    pub worker_id: Option<String>,
}

impl Vote {
    pub fn new(
        item_id: ItemId,
        predicate_id: PredicateId,
        value: VoteValue,
        iteration: u32,
        purpose: Purpose,
    ) -> Self {
        Self {
            item_id,
            predicate_id,
            value,
            iteration,
            purpose,
            worker_id: None,
        }
    }
}

/// Yes/no counts for one (item, predicate) pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub yes: u32,
    pub no: u32,
}

impl VoteTally {
    pub fn new(yes: u32, no: u32) -> Self {
        Self { yes, no }
    }

    pub fn add(&mut self, value: VoteValue) {
        match value {
            VoteValue::Yes => self.yes += 1,
            VoteValue::No => self.no += 1,
        }
    }

    pub fn total(&self) -> u32 {
        self.yes + self.no
    }

    pub fn majority(&self) -> MajorityLabel {
        match self.yes.cmp(&self.no) {
            std::cmp::Ordering::Greater => MajorityLabel::Yes,
            std::cmp::Ordering::Less => MajorityLabel::No,
            std::cmp::Ordering::Equal => MajorityLabel::Abstain,
        }
    }
}

/// Append-only record of every crowd vote, shared by both arms.
#[derive(Debug, Clone, Default)]
pub struct VoteLedger {
    votes: Vec<Vote>,
    by_pair: HashMap<(ItemId, PredicateId), Vec<usize>>,
}

impl VoteLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    pub fn votes(&self) -> &[Vote] {
        &self.votes
    }

    pub fn last_iteration(&self) -> Option<u32> {
        self.votes.last().map(|v| v.iteration)
    }

    /// Append without budget accounting. Used when loading recorded votes.
    pub fn push(&mut self, vote: Vote) -> Result<(), CoreError> {
        if let Some(last) = self.last_iteration() {
            if vote.iteration < last {
                return Err(CoreError::NonMonotoneIteration {
                    previous: last,
                    got: vote.iteration,
                });
            }
        }
        self.by_pair
            .entry((vote.item_id, vote.predicate_id))
            .or_default()
            .push(self.votes.len());
        self.votes.push(vote);
        Ok(())
    }

    pub fn votes_for(&self, item: ItemId, predicate: PredicateId) -> impl Iterator<Item = &Vote> {
        self.by_pair
            .get(&(item, predicate))
            .into_iter()
            .flatten()
            .map(move |&i| &self.votes[i])
    }

    pub fn tally(&self, item: ItemId, predicate: PredicateId) -> VoteTally {
        let mut t = VoteTally::default();
        for v in self.votes_for(item, predicate) {
            t.add(v.value);
        }
        t
    }

    /// Distinct pairs in first-seen order.
    pub fn pairs(&self) -> Vec<(ItemId, PredicateId)> {
        let mut seen = std::collections::HashSet::new();
        self.votes
            .iter()
            .filter_map(|v| {
                let key = (v.item_id, v.predicate_id);
                seen.insert(key).then_some(key)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub total: u64,
    pub spent: u64,
}

impl BudgetLedger {
    pub fn new(total: u64) -> Self {
        Self { total, spent: 0 }
    }

    pub fn remaining(&self) -> u64 {
        self.total - self.spent
    }

    pub fn is_exhausted(&self) -> bool {
        self.spent >= self.total
    }
}

/// Append `votes` to the ledger and charge them to the budget. The whole
/// batch is rejected if it does not fit.
pub fn record_votes(
    ledger: &mut VoteLedger,
    budget: &mut BudgetLedger,
    votes: Vec<Vote>,
) -> Result<(), CoreError> {
    let n = votes.len() as u64;
    if budget.spent + n > budget.total {
        return Err(CoreError::BudgetExceeded {
            requested: n,
            remaining: budget.remaining(),
        });
    }
    if let (Some(last), Some(first)) = (ledger.last_iteration(), votes.first()) {
        if first.iteration < last {
            return Err(CoreError::NonMonotoneIteration {
                previous: last,
                got: first.iteration,
            });
        }
    }
    if let Some(bad) = votes.windows(2).find(|w| w[1].iteration < w[0].iteration) {
        return Err(CoreError::NonMonotoneIteration {
            previous: bad[0].iteration,
            got: bad[1].iteration,
        });
    }
    for v in votes {
        ledger.push(v)?;
    }
    budget.spent += n;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MajorityLabel {
    Yes,
    No,
    Abstain,
}

impl MajorityLabel {
    pub fn as_bool(self) -> Option<bool> {
        match self {
            MajorityLabel::Yes => Some(true),
            MajorityLabel::No => Some(false),
            MajorityLabel::Abstain => None,
        }
    }
}

/// Strict majority of the votes on one pair; ties and empty input abstain.
pub fn majority_label<'a>(votes: impl IntoIterator<Item = &'a Vote>) -> MajorityLabel {
    let mut t = VoteTally::default();
    for v in votes {
        t.add(v.value);
    }
    t.majority()
}

/// Laplace-smoothed positive rate `(k + 1) / (n + 2)`.
pub fn estimate_selectivity(labels: &[bool]) -> f64 {
    let positives = labels.iter().filter(|&&l| l).count();
    selectivity_from_counts(positives, labels.len())
}

pub fn selectivity_from_counts(positives: usize, total: usize) -> f64 {
    (positives as f64 + 1.0) / (total as f64 + 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    In,
    Out,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSource {
    Hybrid,
    MlFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub item_id: ItemId,
    pub verdict: Verdict,
    pub source: DecisionSource,
}

/// Decided/undecided partition of the pool, by pool position.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolState {
    decisions: Vec<Option<Decision>>,
    undecided: BTreeSet<usize>,
}

impl PoolState {
    pub fn new(len: usize) -> Self {
        Self {
            decisions: vec![None; len],
            undecided: (0..len).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn undecided(&self) -> &BTreeSet<usize> {
        &self.undecided
    }

    pub fn decided_count(&self) -> usize {
        self.len() - self.undecided.len()
    }

    pub fn decision(&self, pos: usize) -> Option<&Decision> {
        self.decisions.get(pos).and_then(Option::as_ref)
    }

    pub fn decided(&self) -> impl Iterator<Item = (usize, &Decision)> {
        self.decisions
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.as_ref().map(|d| (i, d)))
    }

    /// Move an item from UI to CI. Decisions are irrevocable.
    pub fn decide(&mut self, pos: usize, decision: Decision) -> Result<(), CoreError> {
        if decision.verdict == Verdict::Undecided {
            return Err(CoreError::UndecidedVerdict(decision.item_id));
        }
        match self.decisions.get_mut(pos) {
            None => Err(CoreError::UnknownItem(decision.item_id)),
            Some(Some(prev)) => Err(CoreError::AlreadyDecided(prev.item_id)),
            Some(slot) => {
                *slot = Some(decision);
                self.undecided.remove(&pos);
                Ok(())
            }
        }
    }

    /// Disjointness and coverage of the CI/UI partition.
    pub fn check_partition(&self) -> bool {
        let decided = self.decisions.iter().filter(|d| d.is_some()).count();
        decided + self.undecided.len() == self.len()
            && self
                .undecided
                .iter()
                .all(|&i| i < self.len() && self.decisions[i].is_none())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmChoice {
    Learn,
    Exploit,
}

/// Dense `(item position, predicate) -> probability` table.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiTable {
    n_predicates: usize,
    values: Vec<f64>,
}

impl PsiTable {
    pub fn filled(n_items: usize, n_predicates: usize, value: f64) -> Self {
        Self {
            n_predicates,
            values: vec![value; n_items * n_predicates],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_predicates = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_predicates));
        Self {
            n_predicates,
            values: rows.concat(),
        }
    }

    pub fn n_predicates(&self) -> usize {
        self.n_predicates
    }

    pub fn n_items(&self) -> usize {
        if self.n_predicates == 0 {
            0
        } else {
            self.values.len() / self.n_predicates
        }
    }

    pub fn get(&self, item: usize, p: PredicateId) -> f64 {
        self.values[item * self.n_predicates + p.0]
    }

    pub fn set(&mut self, item: usize, p: PredicateId, value: f64) {
        self.values[item * self.n_predicates + p.0] = value;
    }

    pub fn row(&self, item: usize) -> &[f64] {
        &self.values[item * self.n_predicates..(item + 1) * self.n_predicates]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One point of a learning curve: labeled-set size and estimated accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub labels: usize,
    pub fbeta: f64,
}

/// Observable state at the start of an iteration.
#[derive(Debug, Clone)]
pub struct IterationContext {
    pub t: u32,
    pub psi_ml: PsiTable,
    pub psi_hc: PsiTable,
    /// Decided pool positions.
    pub ci: Vec<usize>,
    /// Undecided pool positions, ascending.
    pub ui: Vec<usize>,
    pub spent: u64,
    pub budget: u64,
    /// Training labels collected by the learning arm so far.
    pub learning_labels: usize,
    /// Aggregate cross-validated accuracy curve of the machine classifiers.
    pub accuracy: Vec<AccuracyPoint>,
}
