use ahc::eval::synth::{synthesize_dataset, SynthesisSpec};
use ahc::ml::{
    build_vocabulary, build_vocabulary_from_texts, cross_validated_fbeta, predict_proba, train_classifier,
    train_or_prior, vectorize, FeatureVector, LogisticObjective, TrainConfig,
};
use ahc::PredicateId;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> (Vec<FeatureVector>, Vec<bool>) {
    let xs = (0..n)
        .map(|_| {
            let mut pairs = Vec::new();
            for i in 0..dim as u32 {
                if rng.gen_bool(0.5) {
                    pairs.push((i, rng.gen_range(-1.0..1.0)));
                }
            }
            FeatureVector::from_pairs(pairs)
        })
        .collect();
    let ys = (0..n).map(|_| rng.gen_bool(0.4)).collect();
    (xs, ys)
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (dim, h) = (10, 1e-5);
    for case in 0..50 {
        let (xs, ys) = random_instance(&mut rng, dim, 20);
        let examples: Vec<(&FeatureVector, bool)> = xs.iter().zip(ys.iter().copied()).collect();
        let l2 = rng.gen_range(0.0..0.1);
        let obj = LogisticObjective::new(&examples, dim, l2, case % 2 == 0);
        let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b = rng.gen_range(-1.0..1.0);

        let mut analytic = vec![0.0; dim];
        let gb = obj.gradient_into(&w, b, &mut analytic);
        analytic.push(gb);

        let mut numeric = Vec::with_capacity(dim + 1);
        for i in 0..dim {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[i] += h;
            down[i] -= h;
            numeric.push((obj.loss(&up, b) - obj.loss(&down, b)) / (2.0 * h));
        }
        numeric.push((obj.loss(&w, b + h) - obj.loss(&w, b - h)) / (2.0 * h));

        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
            + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        assert!(diff / scale.max(1e-12) < 1e-4, "case {case}: relative error {}", diff / scale);
    }
}

#[test]
fn loss_does_not_increase_at_a_small_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (xs, ys) = random_instance(&mut rng, 10, 40);
    let xs: Vec<FeatureVector> = xs
        .into_iter()
        .map(|x| {
            let n = x.norm().max(1e-12);
            FeatureVector::from_pairs(x.iter().map(|(i, v)| (i as u32, v / n)).collect())
        })
        .collect();
    let examples: Vec<(&FeatureVector, bool)> = xs.iter().zip(ys.iter().copied()).collect();
    let obj = LogisticObjective::new(&examples, 10, 1e-3, true);
    let (mut w, mut b) = (vec![0.0; 10], 0.0);
    let mut grad = vec![0.0; 10];
    let mut last = obj.loss(&w, b);
    for _ in 0..200 {
        let gb = obj.gradient_into(&w, b, &mut grad);
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= 0.1 * gi;
        }
        b -= 0.1 * gb;
        let now = obj.loss(&w, b);
        assert!(now <= last + 1e-15);
        last = now;
    }
}

#[test]
fn separable_pair_is_learned() {
    let vocab = build_vocabulary_from_texts(&["good", "bad"], 1).unwrap();
    let good = vectorize(&["good".to_string()], &vocab);
    let bad = vectorize(&["bad".to_string()], &vocab);
    let cfg = TrainConfig {
        l2_penalty: 1e-4,
        epochs: 5000,
        learning_rate: 0.5,
        class_weighting: true,
    };
    let clf = train_classifier(PredicateId(0), &[(&good, true), (&bad, false)], vocab.len(), &cfg).unwrap();
    assert!(predict_proba(&clf, &good) > 0.9);
    assert!(predict_proba(&clf, &bad) < 0.1);
}

#[test]
fn featureless_examples_fit_the_class_prior() {
    let empty = FeatureVector::default();
    let examples = [(&empty, true), (&empty, true), (&empty, true), (&empty, false)];
    let cfg = TrainConfig {
        l2_penalty: 0.0,
        epochs: 5000,
        learning_rate: 1.0,
        class_weighting: false,
    };
    let clf = train_classifier(PredicateId(0), &examples, 4, &cfg).unwrap();
    assert!(clf.weights.iter().all(|&w| w == 0.0));
    assert!((predict_proba(&clf, &empty) - 0.75).abs() < 1e-3);
}

#[test]
fn single_class_sets_fall_back_to_the_prior() {
    let x = FeatureVector::from_pairs(vec![(0, 1.0)]);
    assert!(train_classifier(PredicateId(0), &[(&x, true), (&x, true)], 1, &TrainConfig::default()).is_err());
    let clf = train_or_prior(PredicateId(0), &[(&x, true), (&x, true)], 1, &TrainConfig::default());
    assert!(!clf.is_trained());
    let none = train_or_prior(PredicateId(0), &[], 1, &TrainConfig::default());
    assert_eq!(predict_proba(&none, &x), 0.5);
}

#[test]
fn too_few_examples_are_flagged() {
    let x = FeatureVector::from_pairs(vec![(0, 1.0)]);
    let est = cross_validated_fbeta(&[(&x, true), (&x, false), (&x, true)], 1, 3.0, 5, 0, &TrainConfig::default());
    assert!(est.insufficient);
    assert_eq!(est.value, 0.0);
}

fn synthetic_features(noise: f64, seed: u64) -> (Vec<FeatureVector>, Vec<bool>, usize) {
    let data = synthesize_dataset(&SynthesisSpec {
        pool_size: 500,
        selectivity: vec![0.3],
        noise: vec![noise],
        seed,
        ..SynthesisSpec::default()
    })
    .unwrap();
    let docs: Vec<&[String]> = data.items().iter().map(|i| i.tokens()).collect();
    let vocab = build_vocabulary(&docs, 2).unwrap();
    let xs = docs.iter().map(|d| vectorize(d, &vocab)).collect();
    let ys = (0..data.len()).map(|i| data.gold_label(i, PredicateId(0)).unwrap()).collect();
    (xs, ys, vocab.len())
}

fn fast_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 5.0,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_synthetic_data_scores_high() {
    let (xs, ys, dim) = synthetic_features(0.0, 5);
    let examples: Vec<(&FeatureVector, bool)> = xs.iter().zip(ys.iter().copied()).collect();
    let est = cross_validated_fbeta(&examples, dim, 3.0, 5, 1, &fast_config());
    assert!(!est.insufficient);
    assert!(est.value >= 0.95, "cv F3 {}", est.value);
}

#[test]
fn random_labels_score_like_their_permutations() {
    let (xs, _, dim) = synthetic_features(0.0, 9);
    let cfg = fast_config();
    let mut diffs = Vec::new();
    let mut observed = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let labels: Vec<bool> = (0..xs.len()).map(|_| rng.gen_bool(0.3)).collect();
        let mut permuted = labels.clone();
        permuted.shuffle(&mut rng);
        let score = |ys: &[bool]| {
            let ex: Vec<(&FeatureVector, bool)> = xs.iter().zip(ys.iter().copied()).collect();
            cross_validated_fbeta(&ex, dim, 3.0, 5, seed, &cfg).value
        };
        let a = score(&labels);
        diffs.push(a - score(&permuted));
        observed.push(a);
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() <= 3.0 * sd / n.sqrt() + 1e-9, "mean diff {mean}, sd {sd}");
    let avg = observed.iter().sum::<f64>() / n;
    // Signal-free labels cannot approach the separable score.
    assert!(avg < 0.8, "random-label cv F3 {avg}");
}
