//! Per-predicate text classifiers: tf-idf bag-of-words features and
//! L2-regularized logistic regression trained by full-batch gradient descent.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{estimate_selectivity, tokenize, AccuracyPoint, PredicateId};
use crate::error::MlError;
use crate::eval::metrics::f_beta;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
    doc_freq: Vec<u32>,
    n_docs: usize,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).map(|&i| i as usize)
    }

    pub fn doc_freq(&self, index: usize) -> u32 {
        self.doc_freq[index]
    }

    /// Smoothed inverse document frequency `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, index: usize) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.doc_freq[index] as f64)).ln() + 1.0
    }
}

/// Build a vocabulary from tokenized documents, dropping tokens that occur
/// in fewer than `min_df` documents. Column order is lexicographic.
pub fn build_vocabulary<D: AsRef<[String]>>(
    corpus: &[D],
    min_df: usize,
) -> Result<Vocabulary, MlError> {
    if corpus.is_empty() {
        return Err(MlError::EmptyCorpus);
    }
    let mut df: BTreeMap<&str, u32> = BTreeMap::new();
    for doc in corpus {
        let mut distinct: Vec<&str> = doc.as_ref().iter().map(String::as_str).collect();
        distinct.sort_unstable();
        distinct.dedup();
        for tok in distinct {
            *df.entry(tok).or_default() += 1;
        }
    }
    let (tokens, doc_freq): (Vec<String>, Vec<u32>) = df
        .into_iter()
        .filter(|&(_, n)| n as usize >= min_df)
        .map(|(t, n)| (t.to_owned(), n))
        .unzip();
    let index = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();
    Ok(Vocabulary {
        tokens,
        index,
        doc_freq,
        n_docs: corpus.len(),
    })
}

/// Tokenize raw texts and build a vocabulary from them.
pub fn build_vocabulary_from_texts(texts: &[&str], min_df: usize) -> Result<Vocabulary, MlError> {
    let docs: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
    build_vocabulary(&docs, min_df)
}

/// Sparse L2-normalized tf-idf vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        pairs.dedup_by_key(|&mut (i, _)| i);
        let (indices, values) = pairs.into_iter().unzip();
        Self { indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| dense[i] * v).sum()
    }
}

pub fn vectorize(tokens: &[String], vocab: &Vocabulary) -> FeatureVector {
    let mut tf: BTreeMap<u32, u32> = BTreeMap::new();
    for tok in tokens {
        if let Some(&i) = vocab.index.get(tok.as_str()) {
            *tf.entry(i).or_default() += 1;
        }
    }
    let mut pairs: Vec<(u32, f64)> = tf
        .into_iter()
        .map(|(i, n)| (i, n as f64 * vocab.idf(i as usize)))
        .collect();
    let norm = pairs.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, w) in &mut pairs {
            *w /= norm;
        }
    }
    let (indices, values) = pairs.into_iter().unzip();
    FeatureVector { indices, values }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub trait ProbabilisticClassifier {
    /// Probability that the item satisfies the classifier's predicate.
    fn predict_proba(&self, x: &FeatureVector) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateClassifier {
    pub predicate_id: PredicateId,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2_penalty: f64,
    pub trained_on: usize,
    /// Set when the classifier could not be trained; predictions return it.
    pub prior: Option<f64>,
}

impl PredicateClassifier {
    /// A classifier that ignores features and predicts the smoothed class
    /// prior of `labels` (0.5 with no labels).
    pub fn untrained(predicate_id: PredicateId, labels: &[bool]) -> Self {
        Self {
            predicate_id,
            weights: Vec::new(),
            bias: 0.0,
            l2_penalty: 0.0,
            trained_on: labels.len(),
            prior: Some(estimate_selectivity(labels)),
        }
    }

    pub fn is_trained(&self) -> bool {
        self.prior.is_none()
    }

    pub fn decision_value(&self, x: &FeatureVector) -> f64 {
        x.iter()
            .filter_map(|(i, v)| self.weights.get(i).map(|w| w * v))
            .sum::<f64>()
            + self.bias
    }
}

impl ProbabilisticClassifier for PredicateClassifier {
    fn predict_proba(&self, x: &FeatureVector) -> f64 {
        match self.prior {
            Some(p) => p,
            None => sigmoid(self.decision_value(x)),
        }
    }
}

pub fn predict_proba(clf: &PredicateClassifier, x: &FeatureVector) -> f64 {
    clf.predict_proba(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub l2_penalty: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight each class inversely to its frequency.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2_penalty: 1e-4,
            epochs: 300,
            learning_rate: 0.5,
            class_weighting: true,
        }
    }
}

/// Mean (optionally class-weighted) logistic loss plus `λ‖w‖²/2`.
pub struct LogisticObjective<'a> {
    xs: Vec<&'a FeatureVector>,
    ys: Vec<f64>,
    cs: Vec<f64>,
    dim: usize,
    l2: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(examples: &[(&'a FeatureVector, bool)], dim: usize, l2: f64, class_weighting: bool) -> Self {
        let n = examples.len();
        let pos = examples.iter().filter(|(_, y)| *y).count();
        let (c_pos, c_neg) = if class_weighting && pos > 0 && pos < n {
            (n as f64 / (2.0 * pos as f64), n as f64 / (2.0 * (n - pos) as f64))
        } else {
            (1.0, 1.0)
        };
        Self {
            xs: examples.iter().map(|(x, _)| *x).collect(),
            ys: examples.iter().map(|&(_, y)| if y { 1.0 } else { 0.0 }).collect(),
            cs: examples
                .iter()
                .map(|&(_, y)| if y { c_pos } else { c_neg })
                .collect(),
            dim,
            l2,
        }
    }

    pub fn loss(&self, w: &[f64], b: f64) -> f64 {
        let n = self.xs.len().max(1) as f64;
        let data: f64 = self
            .xs
            .iter()
            .zip(&self.ys)
            .zip(&self.cs)
            .map(|((x, &y), &c)| {
                let z = x.dot(w) + b;
                c * (softplus(z) - y * z)
            })
            .sum();
        data / n + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>()
    }

    /// Write the weight gradient into `grad_w` and return the bias gradient.
    pub fn gradient_into(&self, w: &[f64], b: f64, grad_w: &mut [f64]) -> f64 {
        let n = self.xs.len().max(1) as f64;
        for (g, &wi) in grad_w.iter_mut().zip(w) {
            *g = self.l2 * wi;
        }
        let mut grad_b = 0.0;
        for ((x, &y), &c) in self.xs.iter().zip(&self.ys).zip(&self.cs) {
            let r = c * (sigmoid(x.dot(w) + b) - y) / n;
            grad_b += r;
            for (i, v) in x.iter() {
                grad_w[i] += r * v;
            }
        }
        grad_b
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Train from zero initialization. Single-class training sets are rejected;
/// callers fall back to [`PredicateClassifier::untrained`].
pub fn train_classifier(
    predicate_id: PredicateId,
    examples: &[(&FeatureVector, bool)],
    dim: usize,
    cfg: &TrainConfig,
) -> Result<PredicateClassifier, MlError> {
    let positives = examples.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == examples.len() {
        return Err(MlError::DegenerateTrainingSet {
            positives,
            total: examples.len(),
        });
    }
    let objective = LogisticObjective::new(examples, dim, cfg.l2_penalty, cfg.class_weighting);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut grad = vec![0.0; dim];
    for _ in 0..cfg.epochs {
        let gb = objective.gradient_into(&w, b, &mut grad);
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= cfg.learning_rate * gi;
        }
        b -= cfg.learning_rate * gb;
    }
    Ok(PredicateClassifier {
        predicate_id,
        weights: w,
        bias: b,
        l2_penalty: cfg.l2_penalty,
        trained_on: examples.len(),
        prior: None,
    })
}

/// Train, or fall back to the class prior when the set is single-class.
pub fn train_or_prior(
    predicate_id: PredicateId,
    examples: &[(&FeatureVector, bool)],
    dim: usize,
    cfg: &TrainConfig,
) -> PredicateClassifier {
    train_classifier(predicate_id, examples, dim, cfg).unwrap_or_else(|_| {
        let labels: Vec<bool> = examples.iter().map(|&(_, y)| y).collect();
        PredicateClassifier::untrained(predicate_id, &labels)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvEstimate {
    pub value: f64,
    /// Too few examples, or a single class. `value` is 0.
    pub insufficient: bool,
}

/// Stratified k-fold estimate of F_β at decision threshold 0.5.
pub fn cross_validated_fbeta(
    examples: &[(&FeatureVector, bool)],
    dim: usize,
    beta: f64,
    folds: usize,
    seed: u64,
    cfg: &TrainConfig,
) -> CvEstimate {
    let positives = examples.iter().filter(|(_, y)| *y).count();
    if folds < 2 || examples.len() < folds || positives == 0 || positives == examples.len() {
        return CvEstimate {
            value: 0.0,
            insufficient: true,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..examples.len()).filter(|&i| examples[i].1).collect();
    let mut neg: Vec<usize> = (0..examples.len()).filter(|&i| !examples[i].1).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut fold_of = vec![0usize; examples.len()];
    for (k, &i) in pos.iter().chain(&neg).enumerate() {
        fold_of[i] = k % folds;
    }

    let mut total = 0.0;
    for fold in 0..folds {
        let train: Vec<(&FeatureVector, bool)> = examples
            .iter()
            .zip(&fold_of)
            .filter(|(_, &f)| f != fold)
            .map(|(&e, _)| e)
            .collect();
        let clf = train_or_prior(PredicateId(0), &train, dim, cfg);
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for ((x, y), _) in examples.iter().zip(&fold_of).filter(|(_, &f)| f == fold) {
            let predicted = clf.predict_proba(x) >= 0.5;
            match (predicted, *y) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        total += f_beta(tp, fp, fn_, beta);
    }
    CvEstimate {
        value: total / folds as f64,
        insufficient: false,
    }
}

/// Learning curve of one classifier.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyHistory {
    points: Vec<AccuracyPoint>,
}

impl AccuracyHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a point; returns false (and drops it) unless `labels` exceeds
    /// the previous point's.
    pub fn push(&mut self, labels: usize, fbeta: f64) -> bool {
        if self.points.last().is_some_and(|p| p.labels >= labels) {
            return false;
        }
        self.points.push(AccuracyPoint { labels, fbeta });
        true
    }

    pub fn points(&self) -> &[AccuracyPoint] {
        &self.points
    }

    pub fn last(&self) -> Option<&AccuracyPoint> {
        self.points.last()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.fbeta).collect()
    }
}

/// Serializable model snapshot for `--dump-model`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDump {
    pub vocabulary: Vec<String>,
    pub idf: Vec<f64>,
    pub classifiers: Vec<PredicateClassifier>,
}

impl ModelDump {
    pub fn new(vocab: &Vocabulary, classifiers: &[PredicateClassifier]) -> Self {
        Self {
            vocabulary: vocab.tokens.clone(),
            idf: (0..vocab.len()).map(|i| vocab.idf(i)).collect(),
            classifiers: classifiers.to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<Vec<String>> {
        texts.iter().map(|t| tokenize(t)).collect()
    }

    #[test]
    fn vocabulary_min_df() {
        let corpus = docs(&["a b", "b c"]);
        let v1 = build_vocabulary(&corpus, 1).unwrap();
        assert_eq!(v1.tokens(), ["a", "b", "c"]);
        let v2 = build_vocabulary(&corpus, 2).unwrap();
        assert_eq!(v2.tokens(), ["b"]);
        let same = docs(&["x y x", "x y x", "x y x"]);
        assert_eq!(build_vocabulary(&same, 2).unwrap().tokens(), ["x", "y"]);
        let empty: Vec<Vec<String>> = vec![];
        assert!(matches!(build_vocabulary(&empty, 1), Err(MlError::EmptyCorpus)));
    }

    #[test]
    fn vectorize_cases() {
        let corpus = docs(&["a b", "b c", "a c"]);
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        assert!(vectorize(&tokenize("zzz qqq"), &vocab).is_zero());

        let one = vectorize(&tokenize("a"), &vocab);
        assert_eq!(one.nnz(), 1);
        assert!((one.iter().next().unwrap().1 - 1.0).abs() < 1e-15);

        // a and c have equal df, so equal tf-idf.
        let two = vectorize(&tokenize("a c"), &vocab);
        let vals: Vec<f64> = two.iter().map(|(_, v)| v).collect();
        assert_eq!(vals.len(), 2);
        for v in vals {
            assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        }
        assert!((two.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn predict_sigmoid_cases() {
        let zero = PredicateClassifier {
            predicate_id: PredicateId(0),
            weights: vec![0.0; 3],
            bias: 0.0,
            l2_penalty: 0.0,
            trained_on: 2,
            prior: None,
        };
        assert_eq!(zero.predict_proba(&FeatureVector::default()), 0.5);
        let x = FeatureVector::from_pairs(vec![(1, 1.0)]);
        let clf = PredicateClassifier {
            weights: vec![0.0, 9f64.ln(), 0.0],
            ..zero.clone()
        };
        assert!((clf.predict_proba(&x) - 0.9).abs() < 1e-12);
        let untrained = PredicateClassifier::untrained(PredicateId(0), &[]);
        assert_eq!(untrained.predict_proba(&x), 0.5);
    }

    #[test]
    fn separable_pair_trains_past_point_nine() {
        let corpus = docs(&["good", "bad"]);
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        let good = vectorize(&corpus[0], &vocab);
        let bad = vectorize(&corpus[1], &vocab);
        let examples = [(&good, true), (&bad, false)];
        let cfg = TrainConfig {
            l2_penalty: 1e-4,
            epochs: 2000,
            learning_rate: 0.5,
            class_weighting: true,
        };
        // Loss is monotone along the trajectory.
        let obj = LogisticObjective::new(&examples, vocab.len(), cfg.l2_penalty, true);
        let mut w = vec![0.0; vocab.len()];
        let mut b = 0.0;
        let mut g = vec![0.0; vocab.len()];
        let mut prev = obj.loss(&w, b);
        for _ in 0..cfg.epochs {
            let gb = obj.gradient_into(&w, b, &mut g);
            w.iter_mut().zip(&g).for_each(|(wi, gi)| *wi -= cfg.learning_rate * gi);
            b -= cfg.learning_rate * gb;
            let l = obj.loss(&w, b);
            assert!(l <= prev + 1e-15);
            prev = l;
        }
        let clf = train_classifier(PredicateId(0), &examples, vocab.len(), &cfg).unwrap();
        assert_eq!(clf.weights, w);
        assert!(clf.predict_proba(&good) > 0.9);
        assert!(clf.predict_proba(&bad) < 0.1);
    }

    #[test]
    fn empty_features_fit_class_prior() {
        let empty = FeatureVector::default();
        let examples = [(&empty, true), (&empty, false), (&empty, false), (&empty, false)];
        let cfg = TrainConfig {
            class_weighting: false,
            epochs: 3000,
            ..TrainConfig::default()
        };
        let clf = train_classifier(PredicateId(0), &examples, 4, &cfg).unwrap();
        assert!(clf.weights.iter().all(|&w| w == 0.0));
        assert!((clf.predict_proba(&empty) - 0.25).abs() < 1e-6);
        // With class weighting the weighted prior is balanced.
        let weighted = train_classifier(PredicateId(0), &examples, 4, &TrainConfig::default()).unwrap();
        assert!((weighted.predict_proba(&empty) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = FeatureVector::from_pairs(vec![(0, 1.0)]);
        let examples = [(&x, true), (&x, true)];
        let err = train_classifier(PredicateId(0), &examples, 1, &TrainConfig::default());
        assert!(matches!(err, Err(MlError::DegenerateTrainingSet { positives: 2, total: 2 })));
        let fallback = train_or_prior(PredicateId(0), &examples, 1, &TrainConfig::default());
        assert!(!fallback.is_trained());
        assert_eq!(fallback.predict_proba(&x), 0.75);
    }

    #[test]
    fn cv_needs_enough_examples() {
        let x = FeatureVector::from_pairs(vec![(0, 1.0)]);
        let examples = [(&x, true), (&x, false), (&x, true)];
        let est = cross_validated_fbeta(&examples, 1, 1.0, 5, 0, &TrainConfig::default());
        assert!(est.insufficient);
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn history_sizes_strictly_increase() {
        let mut h = AccuracyHistory::new();
        assert!(h.push(10, 0.5));
        assert!(!h.push(10, 0.6));
        assert!(h.push(11, 0.6));
        assert_eq!(h.values(), vec![0.5, 0.6]);
    }
}
