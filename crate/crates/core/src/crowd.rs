//! Crowd vote acquisition: seeded worker simulation, replay of recorded
//! votes, and accuracy calibration against gold items.
//!
//! Votes CSV layout: `item_id,predicate_id,value,worker_id,iteration`, with
//! one-based predicate ids and `value` in {0,1}.

use std::collections::{HashMap, VecDeque};
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    clamp_accuracy, ItemId, PredicateId, Purpose, Vote, VoteLedger, VoteValue,
};
use crate::error::CrowdError;

/// Fixed per-predicate crowd accuracy with optional per-vote jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrowdModel {
    accuracies: Vec<f64>,
    /// Half-width of the uniform per-vote accuracy jitter; 0 disables it.
    pub jitter: f64,
}

impl CrowdModel {
    pub fn new(accuracies: &[f64]) -> Self {
        Self {
            accuracies: accuracies.iter().map(|&a| clamp_accuracy(a)).collect(),
            jitter: 0.0,
        }
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter.max(0.0);
        self
    }

    pub fn accuracy(&self, p: PredicateId) -> f64 {
        self.accuracies[p.0]
    }

    pub fn accuracies(&self) -> &[f64] {
        &self.accuracies
    }

    fn draw_accuracy<R: Rng + ?Sized>(&self, p: PredicateId, rng: &mut R) -> f64 {
        let a = self.accuracies[p.0];
        if self.jitter > 0.0 {
            clamp_accuracy(rng.gen_range(a - self.jitter..=a + self.jitter))
        } else {
            a
        }
    }
}

/// `k` independent votes per pair; each matches gold with probability `a_p`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_votes<R, G>(
    pairs: &[(ItemId, PredicateId)],
    gold: G,
    model: &CrowdModel,
    votes_per_pair: u32,
    iteration: u32,
    purpose: Purpose,
    rng: &mut R,
) -> Result<Vec<Vote>, CrowdError>
where
    R: Rng + ?Sized,
    G: Fn(ItemId, PredicateId) -> Option<bool>,
{
    let mut out = Vec::with_capacity(pairs.len() * votes_per_pair as usize);
    for &(item, p) in pairs {
        let truth = gold(item, p).ok_or(CrowdError::MissingGold {
            item,
            predicate: p.label(),
        })?;
        for _ in 0..votes_per_pair {
            let a = model.draw_accuracy(p, rng);
            let correct = rng.gen::<f64>() < a;
            out.push(Vote::new(item, p, VoteValue::from_bool(truth == correct), iteration, purpose));
        }
    }
    Ok(out)
}

/// Anything that can answer vote requests for a pair.
pub trait VoteSource {
    fn request(
        &mut self,
        item: ItemId,
        predicate: PredicateId,
        count: u32,
        iteration: u32,
        purpose: Purpose,
    ) -> Result<Vec<Vote>, CrowdError>;
}

/// Simulated crowd owning its random stream.
#[derive(Debug, Clone)]
pub struct SimulatedCrowd {
    model: CrowdModel,
    gold: HashMap<ItemId, Vec<bool>>,
    rng: ChaCha8Rng,
}

impl SimulatedCrowd {
    pub fn new(model: CrowdModel, gold: HashMap<ItemId, Vec<bool>>, seed: u64) -> Self {
        Self {
            model,
            gold,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn model(&self) -> &CrowdModel {
        &self.model
    }
}

impl VoteSource for SimulatedCrowd {
    fn request(
        &mut self,
        item: ItemId,
        predicate: PredicateId,
        count: u32,
        iteration: u32,
        purpose: Purpose,
    ) -> Result<Vec<Vote>, CrowdError> {
        let gold = &self.gold;
        simulate_votes(
            &[(item, predicate)],
            |i, p| gold.get(&i).and_then(|row| row.get(p.0).copied()),
            &self.model,
            count,
            iteration,
            purpose,
            &mut self.rng,
        )
    }
}

/// Serves recorded votes in file order, per pair.
#[derive(Debug, Clone, Default)]
pub struct ReplayCrowd {
    queues: HashMap<(ItemId, PredicateId), VecDeque<Vote>>,
}

impl ReplayCrowd {
    pub fn new(ledger: &VoteLedger) -> Self {
        let mut queues: HashMap<_, VecDeque<Vote>> = HashMap::new();
        for v in ledger.votes() {
            queues
                .entry((v.item_id, v.predicate_id))
                .or_default()
                .push_back(v.clone());
        }
        Self { queues }
    }

    pub fn remaining(&self, item: ItemId, predicate: PredicateId) -> usize {
        self.queues.get(&(item, predicate)).map_or(0, VecDeque::len)
    }
}

impl VoteSource for ReplayCrowd {
    /// Up to `count` recorded votes; fails only when none are left.
    fn request(
        &mut self,
        item: ItemId,
        predicate: PredicateId,
        count: u32,
        iteration: u32,
        purpose: Purpose,
    ) -> Result<Vec<Vote>, CrowdError> {
        let queue = self.queues.get_mut(&(item, predicate));
        match queue {
            Some(q) if !q.is_empty() => {
                let take = (count as usize).min(q.len());
                Ok(q.drain(..take)
                    .map(|mut v| {
                        v.iteration = iteration;
                        v.purpose = purpose;
                        v
                    })
                    .collect())
            }
            _ => Err(CrowdError::ExhaustedVotes {
                item,
                predicate: predicate.label(),
            }),
        }
    }
}

const VOTES_HEADER: [&str; 5] = ["item_id", "predicate_id", "value", "worker_id", "iteration"];

pub fn read_votes_csv<R: Read>(reader: R, origin: &Path) -> Result<VoteLedger, CrowdError> {
    let err = |line: u64, message: String| CrowdError::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != VOTES_HEADER {
        return Err(err(1, format!("header must be {}", VOTES_HEADER.join(","))));
    }
    let mut ledger = VoteLedger::new();
    for (row, record) in rdr.records().enumerate() {
        let line = row as u64 + 2;
        let record = record.map_err(|e| err(line, e.to_string()))?;
        let field = |k: usize| record.get(k).unwrap_or("").trim();
        let item: u64 = field(0)
            .parse()
            .map_err(|_| err(line, format!("bad item_id {:?}", field(0))))?;
        let predicate = field(1)
            .parse::<usize>()
            .ok()
            .and_then(PredicateId::from_label)
            .ok_or_else(|| err(line, format!("bad predicate_id {:?}", field(1))))?;
        let value = match field(2) {
            "1" => VoteValue::Yes,
            "0" => VoteValue::No,
            other => return Err(err(line, format!("value must be 0 or 1, got {other:?}"))),
        };
        let worker = Some(field(3).to_owned()).filter(|w| !w.is_empty());
        let iteration: u32 = field(4)
            .parse()
            .map_err(|_| err(line, format!("bad iteration {:?}", field(4))))?;
        let mut vote = Vote::new(ItemId(item), predicate, value, iteration, Purpose::Exploitation);
        vote.worker_id = worker;
        ledger.push(vote).map_err(|e| err(line, e.to_string()))?;
    }
    Ok(ledger)
}

pub fn load_votes_csv(path: &Path) -> Result<VoteLedger, CrowdError> {
    let file = std::fs::File::open(path).map_err(|source| CrowdError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_votes_csv(file, path)
}

pub fn write_votes_csv<W: Write>(ledger: &VoteLedger, writer: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(VOTES_HEADER)?;
    for v in ledger.votes() {
        wtr.write_record([
            v.item_id.to_string(),
            v.predicate_id.label().to_string(),
            if v.value.is_yes() { "1" } else { "0" }.to_string(),
            v.worker_id.clone().unwrap_or_default(),
            v.iteration.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Laplace-smoothed agreement with gold per predicate, clamped. Predicates
/// without any gold-matched vote get `default`.
pub fn calibrate_accuracy<G>(votes: &[Vote], gold: G, n_predicates: usize, default: f64) -> Vec<f64>
where
    G: Fn(ItemId, PredicateId) -> Option<bool>,
{
    let mut correct = vec![0u64; n_predicates];
    let mut total = vec![0u64; n_predicates];
    for v in votes {
        let p = v.predicate_id.0;
        if p >= n_predicates {
            continue;
        }
        if let Some(truth) = gold(v.item_id, v.predicate_id) {
            total[p] += 1;
            if v.value.is_yes() == truth {
                correct[p] += 1;
            }
        }
    }
    (0..n_predicates)
        .map(|p| {
            if total[p] == 0 {
                clamp_accuracy(default)
            } else {
                clamp_accuracy((correct[p] as f64 + 1.0) / (total[p] as f64 + 2.0))
            }
        })
        .collect()
}
