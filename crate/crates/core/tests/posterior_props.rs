use ahc::domain::{clamp_accuracy, VoteTally};
use ahc::hybrid::{apply_decision_rule, inclusion_probability, predicate_posterior, DecisionThresholds};
use ahc::Verdict;
use proptest::prelude::*;

/// Bayes by direct enumeration of the two worlds over a vote sequence.
fn brute_force(prior: f64, votes: &[bool], accuracy: f64) -> f64 {
    let a = clamp_accuracy(accuracy);
    let likelihood = |truth: bool| {
        votes
            .iter()
            .map(|&v| if v == truth { a } else { 1.0 - a })
            .product::<f64>()
    };
    let holds = prior * likelihood(true);
    let fails = (1.0 - prior) * likelihood(false);
    holds / (holds + fails)
}

fn tally(votes: &[bool]) -> VoteTally {
    let yes = votes.iter().filter(|&&v| v).count() as u32;
    VoteTally::new(yes, votes.len() as u32 - yes)
}

#[test]
fn hand_computed_examples() {
    assert!((predicate_posterior(0.5, VoteTally::new(1, 0), 0.9) - 0.9).abs() < 1e-12);
    assert_eq!(predicate_posterior(0.61, VoteTally::new(0, 0), 0.94), 0.61);
    for a in [0.55, 0.75, 0.94] {
        assert!((predicate_posterior(0.5, VoteTally::new(1, 1), a) - 0.5).abs() < 1e-12);
    }
}

#[test]
fn certain_priors_ignore_votes() {
    for t in [VoteTally::new(0, 0), VoteTally::new(5, 0), VoteTally::new(0, 9)] {
        assert_eq!(predicate_posterior(0.0, t, 0.9), 0.0);
        assert_eq!(predicate_posterior(1.0, t, 0.9), 1.0);
    }
}

#[test]
fn enumeration_matches_on_the_full_small_grid() {
    for n in 0..=6u32 {
        for mask in 0..(1u32 << n) {
            let votes: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            for prior in [0.1, 0.5, 0.61, 0.9] {
                for a in [0.55, 0.75, 0.94] {
                    let got = predicate_posterior(prior, tally(&votes), a);
                    assert!((got - brute_force(prior, &votes, a)).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn exclusion_on_any_predicate_wins() {
    let th = DecisionThresholds::default();
    let post = [0.999, 0.005];
    assert_eq!(apply_decision_rule(&post, inclusion_probability(&post), &th), Verdict::Out);
    let post = [0.999, 0.998];
    assert_eq!(apply_decision_rule(&post, inclusion_probability(&post), &th), Verdict::In);
    let post = [0.995, 0.99];
    assert_eq!(apply_decision_rule(&post, inclusion_probability(&post), &th), Verdict::Undecided);
}

proptest! {
    #[test]
    fn matches_enumeration(
        prior in 0.001f64..0.999,
        votes in prop::collection::vec(any::<bool>(), 0..12),
        a in 0.5f64..1.0,
    ) {
        let got = predicate_posterior(prior, tally(&votes), a);
        prop_assert!((got - brute_force(prior, &votes, a)).abs() < 1e-9);
    }

    #[test]
    fn order_of_votes_is_irrelevant(
        prior in 0.01f64..0.99,
        mut votes in prop::collection::vec(any::<bool>(), 0..10),
        a in 0.55f64..0.99,
    ) {
        let forward = brute_force(prior, &votes, a);
        votes.reverse();
        prop_assert!((forward - brute_force(prior, &votes, a)).abs() < 1e-12);
        prop_assert!((forward - predicate_posterior(prior, tally(&votes), a)).abs() < 1e-12);
    }

    #[test]
    fn yes_votes_raise_and_no_votes_lower(
        prior in 0.01f64..0.99,
        yes in 0u32..8,
        no in 0u32..8,
        a in 0.55f64..0.99,
    ) {
        let base = predicate_posterior(prior, VoteTally::new(yes, no), a);
        prop_assert!(predicate_posterior(prior, VoteTally::new(yes + 1, no), a) > base);
        prop_assert!(predicate_posterior(prior, VoteTally::new(yes, no + 1), a) < base);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn accuracy_below_the_clamp_preserves_the_prior(
        prior in 0.01f64..0.99,
        yes in 0u32..6,
        no in 0u32..6,
        a in 0.0f64..0.5,
    ) {
        let got = predicate_posterior(prior, VoteTally::new(yes, no), a);
        prop_assert!((got - prior).abs() < 1e-4);
    }

    #[test]
    fn inclusion_never_exceeds_any_posterior(post in prop::collection::vec(0.0f64..=1.0, 1..5)) {
        let inc = inclusion_probability(&post);
        prop_assert!(post.iter().all(|&p| inc <= p + 1e-15));
    }
}
