//! The active hybrid classification loop.
//!
//! Every iteration picks an arm, buys crowd votes for the batch that arm
//! selects, then retrains the machine classifiers (when due) and re-runs the
//! hybrid decision rule over the undecided items. The loop stops when the
//! pool is decided, the budget is spent, or no affordable batch remains;
//! whatever is still undecided is then classified by the machine alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::crowd::{CrowdModel, SimulatedCrowd, VoteSource};
use crate::dataset::Dataset;
use crate::domain::{
    clamp_accuracy, record_votes, selectivity_from_counts, AccuracyPoint, ArmChoice, BudgetLedger,
    Decision, DecisionSource, IterationContext, ItemId, PoolState, PredicateId, PsiTable, Purpose,
    Verdict, Vote, VoteLedger, VoteTally,
};
use crate::error::{CrowdError, DataError, EngineError};
use crate::eval::metrics::{compute_metrics, MetricBundle};
use crate::hybrid::{
    apply_decision_rule, blend_prior, finalize_with_ml, inclusion_probability, predicate_posterior,
    select_classification_batch, CandidateItem,
};
use crate::ml::{
    build_vocabulary, cross_validated_fbeta, train_or_prior, vectorize, AccuracyHistory,
    FeatureVector, ModelDump, PredicateClassifier, ProbabilisticClassifier, Vocabulary,
};
use crate::policy::{estimate_reward, PolicyState};
use crate::sampling::{select_learning_batch, PredicateRotation};

/// Independent seed for a named sub-stream of a run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_POLICY: u64 = 1;
const STREAM_CROWD: u64 = 2;
const STREAM_CV: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Continue,
    Terminated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub t: u32,
    pub arm: ArmChoice,
    pub votes: u64,
    pub spent: u64,
    pub decided: usize,
    /// Mean cross-validated F_β of the classifiers, when available.
    pub fbeta_estimate: Option<f64>,
    pub reward: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    /// Final decisions in pool order.
    pub decisions: Vec<Decision>,
    pub votes_spent: u64,
    pub cost_per_item: f64,
    pub trace: Vec<IterationTrace>,
    pub metrics: Option<MetricBundle>,
    pub hybrid_decisions: usize,
    pub ml_fallback_decisions: usize,
}

pub struct Engine<'d, S> {
    config: RunConfig,
    dataset: &'d Dataset,
    ids: Vec<ItemId>,
    n_pred: usize,
    accuracies: Vec<f64>,
    source: S,
    rng: ChaCha8Rng,

    ledger: VoteLedger,
    budget: BudgetLedger,
    pool: PoolState,
    learn_tally: Vec<VoteTally>,
    exploit_tally: Vec<VoteTally>,
    /// Votes per pair; pairs a replay source cannot serve are pinned at the cap.
    vote_counts: Vec<u32>,

    vocab: Option<Vocabulary>,
    features: Vec<FeatureVector>,
    classifiers: Vec<PredicateClassifier>,
    dirty: Vec<bool>,
    histories: Vec<AccuracyHistory>,
    aggregate: Vec<AccuracyPoint>,
    latest_cv: Vec<Option<f64>>,
    cv_at: Vec<usize>,

    selectivity: Vec<f64>,
    psi_ml: PsiTable,
    posteriors: PsiTable,

    policy: PolicyState,
    rotation: PredicateRotation,
    t: u32,
    exploit_iterations: usize,
    learning_labels: usize,
    trace: Vec<IterationTrace>,
    stopped: bool,
}

impl<'d, S: VoteSource> Engine<'d, S> {
    pub fn new(config: RunConfig, dataset: &'d Dataset, source: S) -> Result<Self, EngineError> {
        config.validate()?;
        let n_pred = dataset.n_predicates();
        let n_items = dataset.len();
        let accuracies: Vec<f64> = config
            .crowd
            .accuracies(n_pred)
            .into_iter()
            .map(clamp_accuracy)
            .collect();

        let (vocab, features) = if config.engine.ml_enabled && n_items > 0 {
            let docs: Vec<&[String]> = dataset.items().iter().map(|i| i.tokens()).collect();
            let vocab = build_vocabulary(&docs, config.ml.min_df)?;
            let features = docs.iter().map(|d| vectorize(d, &vocab)).collect();
            (Some(vocab), features)
        } else {
            (None, Vec::new())
        };

        let classifiers = (0..n_pred)
            .map(|p| PredicateClassifier::untrained(PredicateId(p), &[]))
            .collect();
        let rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_POLICY));
        let policy = PolicyState::new(config.policy);
        let pairs = n_items * n_pred;
        Ok(Self {
            ids: dataset.items().iter().map(|i| i.id()).collect(),
            n_pred,
            accuracies,
            source,
            rng,
            ledger: VoteLedger::new(),
            budget: BudgetLedger::new(config.budget),
            pool: PoolState::new(n_items),
            learn_tally: vec![VoteTally::default(); pairs],
            exploit_tally: vec![VoteTally::default(); pairs],
            vote_counts: vec![0; pairs],
            vocab,
            features,
            classifiers,
            dirty: vec![false; n_pred],
            histories: vec![AccuracyHistory::new(); n_pred],
            aggregate: Vec::new(),
            latest_cv: vec![None; n_pred],
            cv_at: vec![0; n_pred],
            selectivity: vec![0.5; n_pred],
            psi_ml: PsiTable::filled(n_items, n_pred, 0.5),
            posteriors: PsiTable::filled(n_items, n_pred, 0.5),
            policy,
            rotation: PredicateRotation::new(n_pred),
            t: 0,
            exploit_iterations: 0,
            learning_labels: 0,
            trace: Vec::new(),
            stopped: false,
            config,
            dataset,
        })
        .map(|mut e| {
            e.refresh_psi_ml();
            e.refresh_posteriors();
            e
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn ledger(&self) -> &VoteLedger {
        &self.ledger
    }

    pub fn budget(&self) -> &BudgetLedger {
        &self.budget
    }

    pub fn pool(&self) -> &PoolState {
        &self.pool
    }

    pub fn psi_ml(&self) -> &PsiTable {
        &self.psi_ml
    }

    pub fn posteriors(&self) -> &PsiTable {
        &self.posteriors
    }

    pub fn accuracies(&self) -> &[f64] {
        &self.accuracies
    }

    pub fn selectivity(&self) -> &[f64] {
        &self.selectivity
    }

    pub fn trace(&self) -> &[IterationTrace] {
        &self.trace
    }

    pub fn policy(&self) -> &PolicyState {
        &self.policy
    }

    pub fn histories(&self) -> &[AccuracyHistory] {
        &self.histories
    }

    pub fn classifiers(&self) -> &[PredicateClassifier] {
        &self.classifiers
    }

    pub fn item_ids(&self) -> &[ItemId] {
        &self.ids
    }

    /// The machine prior fed to the posterior of a pair.
    pub fn prior(&self, item: usize, p: PredicateId) -> f64 {
        blend_prior(
            self.psi_ml.get(item, p),
            self.selectivity[p.0],
            self.latest_cv[p.0],
            self.config.ml.prior_gate,
        )
    }

    pub fn model_dump(&self) -> Option<ModelDump> {
        self.vocab.as_ref().map(|v| ModelDump::new(v, &self.classifiers))
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped || self.pool.undecided().is_empty() || self.budget.is_exhausted()
    }

    pub fn context(&self) -> IterationContext {
        IterationContext {
            t: self.t,
            psi_ml: self.psi_ml.clone(),
            psi_hc: self.posteriors.clone(),
            ci: self.pool.decided().map(|(i, _)| i).collect(),
            ui: self.pool.undecided().iter().copied().collect(),
            spent: self.budget.spent,
            budget: self.budget.total,
            learning_labels: self.learning_labels,
            accuracy: self.aggregate.clone(),
        }
    }

    fn pair(&self, item: usize, p: PredicateId) -> usize {
        item * self.n_pred + p.0
    }

    fn combined_tally(&self, idx: usize) -> VoteTally {
        let (l, e) = (self.learn_tally[idx], self.exploit_tally[idx]);
        VoteTally::new(l.yes + e.yes, l.no + e.no)
    }

    fn training_tally(&self, idx: usize) -> VoteTally {
        if self.config.engine.exploit_votes_train {
            self.combined_tally(idx)
        } else {
            self.learn_tally[idx]
        }
    }

    /// One iteration of the loop. Returns `Terminated` without side effects
    /// when the pool is decided, the budget is gone, or the chosen arm has
    /// nothing affordable to ask.
    pub fn run_iteration(&mut self) -> Result<StepOutcome, EngineError> {
        if self.is_stopped() {
            return Ok(StepOutcome::Terminated);
        }
        let before = self.context();
        let t = self.t + 1;
        let arm = self.policy.choose_arm(&before, &mut self.rng);
        let votes = match arm {
            ArmChoice::Learn => self.learning_batch(t)?,
            ArmChoice::Exploit => self.exploitation_batch(t)?,
        };
        if votes.is_empty() {
            self.stopped = true;
            return Ok(StepOutcome::Terminated);
        }
        self.t = t;
        let n_votes = votes.len() as u64;
        self.absorb(votes)?;
        match arm {
            ArmChoice::Learn => self.retrain_dirty(),
            ArmChoice::Exploit => {
                self.exploit_iterations += 1;
                if self.exploit_iterations % self.config.engine.retrain_every == 0 {
                    self.retrain_dirty();
                }
            }
        }
        self.refresh_selectivity();
        self.refresh_posteriors();
        self.decide_undecided()?;

        let after = self.context();
        let reward = estimate_reward(&before, &after, &self.accuracies, &self.config.hc);
        self.policy.observe(arm, &reward);
        self.trace.push(IterationTrace {
            t,
            arm,
            votes: n_votes,
            spent: self.budget.spent,
            decided: self.pool.decided_count(),
            fbeta_estimate: self.aggregate.last().map(|p| p.fbeta),
            reward: reward.value,
        });
        Ok(StepOutcome::Continue)
    }

    fn learning_batch(&mut self, t: u32) -> Result<Vec<Vote>, EngineError> {
        let k = self.config.engine.votes_per_learning_label;
        let remaining = self.budget.remaining();
        let max_pairs = (self.config.batch_size as u64).min(remaining.div_ceil(k as u64)) as usize;
        if max_pairs == 0 {
            return Ok(Vec::new());
        }
        let cap = self.config.hc.max_votes_per_pair;
        let candidates: Vec<Vec<usize>> = (0..self.n_pred)
            .map(|p| {
                self.pool
                    .undecided()
                    .iter()
                    .copied()
                    .filter(|&i| {
                        let idx = i * self.n_pred + p;
                        self.training_tally(idx).majority().as_bool().is_none() && self.vote_counts[idx] < cap
                    })
                    .collect()
            })
            .collect();
        let candidates_for = |p: PredicateId| candidates[p.0].clone();
        let batch = select_learning_batch(
            self.config.al_strategy,
            &self.psi_ml,
            candidates_for,
            max_pairs,
            &mut self.rotation,
            &mut self.rng,
        );
        let mut left = remaining;
        let mut votes = Vec::new();
        for (item, p) in batch {
            if left == 0 {
                break;
            }
            let want = (k as u64).min(left) as u32;
            let got = self.request(item, p, want, t, Purpose::Learning)?;
            left -= got.len() as u64;
            votes.extend(got);
        }
        Ok(votes)
    }

    fn exploitation_batch(&mut self, t: u32) -> Result<Vec<Vote>, EngineError> {
        let n = (self.config.batch_size as u64).min(self.budget.remaining()) as usize;
        if n == 0 {
            return Ok(Vec::new());
        }
        let candidates: Vec<CandidateItem<'_>> = self
            .pool
            .undecided()
            .iter()
            .map(|&i| CandidateItem {
                item: i,
                posteriors: self.posteriors.row(i),
                vote_counts: &self.vote_counts[i * self.n_pred..(i + 1) * self.n_pred],
            })
            .collect();
        let batch = select_classification_batch(
            &candidates,
            &self.selectivity,
            &self.accuracies,
            &self.config.hc,
            n,
        );
        let mut votes = Vec::new();
        for (item, p) in batch {
            votes.extend(self.request(item, p, 1, t, Purpose::Exploitation)?);
        }
        Ok(votes)
    }

    /// Ask the source; a pair it cannot serve is pinned at the vote cap.
    fn request(
        &mut self,
        item: usize,
        p: PredicateId,
        count: u32,
        t: u32,
        purpose: Purpose,
    ) -> Result<Vec<Vote>, EngineError> {
        match self.source.request(self.ids[item], p, count, t, purpose) {
            Ok(v) => Ok(v),
            Err(CrowdError::ExhaustedVotes { .. }) => {
                let idx = self.pair(item, p);
                self.vote_counts[idx] = self.vote_counts[idx].max(self.config.hc.max_votes_per_pair);
                Ok(Vec::new())
            }
            Err(e) => Err(e.into()),
        }
    }

    fn absorb(&mut self, votes: Vec<Vote>) -> Result<(), EngineError> {
        let mut touched = Vec::new();
        for v in &votes {
            let pos = self
                .dataset
                .position(v.item_id)
                .ok_or(DataError::UnknownItem(v.item_id))?;
            touched.push((pos, v.predicate_id, v.purpose, v.value));
        }
        record_votes(&mut self.ledger, &mut self.budget, votes)?;
        let mut learned = Vec::new();
        for (pos, p, purpose, value) in touched {
            let idx = self.pair(pos, p);
            match purpose {
                Purpose::Learning => {
                    self.learn_tally[idx].add(value);
                    learned.push(idx);
                }
                Purpose::Exploitation => self.exploit_tally[idx].add(value),
            }
            self.vote_counts[idx] += 1;
            if purpose == Purpose::Learning || self.config.engine.exploit_votes_train {
                self.dirty[p.0] = true;
            }
        }
        learned.sort_unstable();
        learned.dedup();
        self.learning_labels += learned
            .iter()
            .filter(|&&idx| self.learn_tally[idx].majority().as_bool().is_some())
            .count();
        Ok(())
    }

    fn training_set(&self, p: PredicateId) -> Vec<(&FeatureVector, bool)> {
        (0..self.ids.len())
            .filter_map(|i| {
                self.training_tally(self.pair(i, p))
                    .majority()
                    .as_bool()
                    .map(|y| (&self.features[i], y))
            })
            .collect()
    }

    fn retrain_dirty(&mut self) {
        if !self.config.engine.ml_enabled || self.vocab.is_none() {
            self.dirty.iter_mut().for_each(|d| *d = false);
            return;
        }
        let dim = self.vocab.as_ref().map_or(0, Vocabulary::len);
        let train_cfg = self.config.ml.train_config();
        let mut cv_updated = false;
        for p in (0..self.n_pred).map(PredicateId) {
            if !std::mem::take(&mut self.dirty[p.0]) {
                continue;
            }
            let examples = self.training_set(p);
            let n = examples.len();
            let clf = train_or_prior(p, &examples, dim, &train_cfg);

            let ml = &self.config.ml;
            let last = self.cv_at[p.0];
            let due = n >= ml.cv_folds
                && (last == 0 || n >= (last + ml.cv_min_step).max((last as f64 * ml.cv_growth).ceil() as usize));
            if due {
                let seed = derive_seed(derive_seed(self.config.seed, STREAM_CV), (p.0 as u64) << 32 | n as u64);
                let est = cross_validated_fbeta(&examples, dim, ml.cv_beta, ml.cv_folds, seed, &train_cfg);
                if !est.insufficient {
                    self.cv_at[p.0] = n;
                    self.latest_cv[p.0] = Some(est.value);
                    self.histories[p.0].push(n, est.value);
                    cv_updated = true;
                }
            }
            self.classifiers[p.0] = clf;
        }
        if cv_updated {
            let labels: usize = self.cv_at.iter().sum();
            let mean = self.latest_cv.iter().map(|v| v.unwrap_or(0.0)).sum::<f64>() / self.n_pred as f64;
            if self.aggregate.last().map_or(true, |a| labels > a.labels) {
                self.aggregate.push(AccuracyPoint { labels, fbeta: mean });
            }
        }
        self.refresh_psi_ml();
    }

    fn refresh_selectivity(&mut self) {
        for p in 0..self.n_pred {
            let (mut pos, mut total) = (0, 0);
            for i in 0..self.ids.len() {
                if let Some(y) = self.combined_tally(i * self.n_pred + p).majority().as_bool() {
                    total += 1;
                    pos += y as usize;
                }
            }
            self.selectivity[p] = selectivity_from_counts(pos, total);
        }
        if !self.config.engine.ml_enabled {
            self.refresh_psi_ml();
        }
    }

    fn refresh_psi_ml(&mut self) {
        for i in 0..self.ids.len() {
            for p in (0..self.n_pred).map(PredicateId) {
                let psi = if self.config.engine.ml_enabled {
                    self.classifiers[p.0].predict_proba(&self.features[i])
                } else {
                    self.selectivity[p.0]
                };
                self.psi_ml.set(i, p, psi);
            }
        }
    }

    fn refresh_posteriors(&mut self) {
        let undecided: Vec<usize> = self.pool.undecided().iter().copied().collect();
        for i in undecided {
            for p in (0..self.n_pred).map(PredicateId) {
                let idx = self.pair(i, p);
                let post = predicate_posterior(self.prior(i, p), self.combined_tally(idx), self.accuracies[p.0]);
                self.posteriors.set(i, p, post);
            }
        }
    }

    fn decide_undecided(&mut self) -> Result<(), EngineError> {
        let undecided: Vec<usize> = self.pool.undecided().iter().copied().collect();
        for i in undecided {
            let row = self.posteriors.row(i);
            let verdict = apply_decision_rule(row, inclusion_probability(row), &self.config.hc);
            if verdict != Verdict::Undecided {
                self.pool.decide(
                    i,
                    Decision {
                        item_id: self.ids[i],
                        verdict,
                        source: DecisionSource::Hybrid,
                    },
                )?;
            }
        }
        Ok(())
    }

    /// Iterate until termination.
    pub fn run_to_end(&mut self) -> Result<(), EngineError> {
        while self.run_iteration()? == StepOutcome::Continue {}
        Ok(())
    }

    /// Machine-only verdicts for the remaining items, then scoring.
    pub fn finish(mut self) -> Result<RunResult, EngineError> {
        let undecided: Vec<usize> = self.pool.undecided().iter().copied().collect();
        for (pos, d) in finalize_with_ml(&undecided, &self.psi_ml, &self.ids) {
            self.pool.decide(pos, d)?;
        }
        let decisions: Vec<Decision> = (0..self.ids.len())
            .map(|i| *self.pool.decision(i).expect("every item decided after finalization"))
            .collect();
        let hybrid = decisions.iter().filter(|d| d.source == DecisionSource::Hybrid).count();
        let votes_spent = self.budget.spent;
        let cost_per_item = if decisions.is_empty() {
            0.0
        } else {
            votes_spent as f64 / decisions.len() as f64
        };
        let metrics = match self.dataset.gold() {
            Some(_) => {
                let ds = self.dataset;
                let gold = |id| ds.position(id).and_then(|p| ds.gold_passes(p));
                Some(compute_metrics(&decisions, gold, &self.config.betas, votes_spent)?)
            }
            None => None,
        };
        Ok(RunResult {
            ml_fallback_decisions: decisions.len() - hybrid,
            hybrid_decisions: hybrid,
            decisions,
            votes_spent,
            cost_per_item,
            trace: self.trace,
            metrics,
        })
    }
}

/// Simulated crowd for a dataset with gold labels, seeded from the run seed.
pub fn simulated_crowd(config: &RunConfig, dataset: &Dataset) -> Result<SimulatedCrowd, EngineError> {
    let gold = dataset.gold_by_id().ok_or_else(|| {
        DataError::MissingGold(dataset.items().first().map_or(ItemId(0), |i| i.id()))
    })?;
    let model = CrowdModel::new(&config.crowd.accuracies(dataset.n_predicates()))
        .with_jitter(config.crowd.jitter);
    Ok(SimulatedCrowd::new(model, gold, derive_seed(config.seed, STREAM_CROWD)))
}

/// Full run against a simulated crowd.
pub fn run(config: &RunConfig, dataset: &Dataset) -> Result<RunResult, EngineError> {
    let crowd = simulated_crowd(config, dataset)?;
    run_with_source(config, dataset, crowd)
}

pub fn run_with_source<S: VoteSource>(
    config: &RunConfig,
    dataset: &Dataset,
    source: S,
) -> Result<RunResult, EngineError> {
    let mut engine = Engine::new(config.clone(), dataset, source)?;
    engine.run_to_end()?;
    engine.finish()
}
