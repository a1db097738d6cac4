use std::path::Path;

use ahc::domain::DecisionSource;
use ahc::eval::emit::{read_results_csv, result_rows, write_results_csv, RESULTS_HEADER};
use ahc::eval::experiment::{run_experiment, ExperimentGrid, PolicyVariant, Stat};
use ahc::eval::metrics::{compute_metrics, f_beta, f_beta_from_rates};
use ahc::eval::scenario::Scenario;
use ahc::eval::synth::{synthesize_dataset, SynthesisSpec};
use ahc::{Decision, ItemId, Verdict};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn textbook_fbeta(tp: usize, fp: usize, fn_: usize, beta: f64) -> f64 {
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if p == 0.0 && r == 0.0 {
        0.0
    } else {
        (1.0 + beta * beta) * p * r / (beta * beta * p + r)
    }
}

#[test]
fn f3_of_the_worked_example() {
    assert!((f_beta(3, 1, 2, 3.0) - 0.612245).abs() < 1e-6);
    assert!((f_beta(3, 1, 2, 3.0) - 10.0 * 0.45 / 7.35).abs() < 1e-12);
    assert_eq!(f_beta(0, 4, 3, 3.0), 0.0);
    assert_eq!(f_beta(5, 0, 0, 1.0), 1.0);
}

#[test]
fn random_confusion_counts_satisfy_the_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let (tp, fp, fn_) = (rng.gen_range(1..200), rng.gen_range(0..200), rng.gen_range(0..200));
        let p = tp as f64 / (tp + fp) as f64;
        let r = tp as f64 / (tp + fn_) as f64;
        assert!((f_beta(tp, fp, fn_, 1.0) - 2.0 * p * r / (p + r)).abs() < 1e-12);
        assert!((f_beta(tp, fp, fn_, 100.0) - r).abs() < 1e-2);
        assert!((f_beta(tp, fp, fn_, 3.0) - textbook_fbeta(tp, fp, fn_, 3.0)).abs() < 1e-12);
    }
}

fn decision(id: u64, verdict: Verdict) -> Decision {
    Decision {
        item_id: ItemId(id),
        verdict,
        source: DecisionSource::Hybrid,
    }
}

#[test]
fn metrics_errors() {
    let ds = [decision(1, Verdict::In)];
    assert!(compute_metrics(&ds, |_| None, &[3.0], 0).is_err());
    let ds = [decision(1, Verdict::Undecided)];
    assert!(compute_metrics(&ds, |_| Some(true), &[3.0], 0).is_err());
}

proptest! {
    #[test]
    fn fbeta_is_monotone_in_recall(p in 0.01f64..=1.0, r in 0.0f64..0.99, dr in 0.001f64..0.01, beta in 0.1f64..10.0) {
        prop_assert!(f_beta_from_rates(p, r + dr, beta) >= f_beta_from_rates(p, r, beta));
    }

    #[test]
    fn metrics_ignore_item_order(
        rows in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200),
        seed in any::<u64>(),
    ) {
        let mut ds: Vec<Decision> = rows
            .iter()
            .enumerate()
            .map(|(i, &(v, _))| decision(i as u64, if v { Verdict::In } else { Verdict::Out }))
            .collect();
        let gold = |id: ItemId| Some(rows[id.0 as usize].1);
        let a = compute_metrics(&ds, gold, &[1.0, 3.0], 77).unwrap();
        ds.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = compute_metrics(&ds, gold, &[1.0, 3.0], 77).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.items(), rows.len());
        prop_assert!((0.0..=1.0).contains(&a.precision) && (0.0..=1.0).contains(&a.recall));
    }
}

#[test]
fn synthetic_positive_rate_is_within_three_sigma() {
    let data = synthesize_dataset(&SynthesisSpec {
        pool_size: 5000,
        selectivity: vec![0.10],
        noise: vec![0.05],
        seed: 21,
        ..SynthesisSpec::default()
    })
    .unwrap();
    let gold = data.gold().unwrap();
    let rate = gold.iter().filter(|g| g[0]).count() as f64 / 5000.0;
    assert!((rate - 0.10).abs() <= 0.02, "rate {rate}");
}

#[test]
fn synthesis_is_deterministic_and_handles_empty_pools() {
    let spec = SynthesisSpec {
        pool_size: 50,
        ..SynthesisSpec::default()
    };
    let a = synthesize_dataset(&spec).unwrap();
    let b = synthesize_dataset(&spec).unwrap();
    assert_eq!(a.gold(), b.gold());
    assert!(a.items().iter().zip(b.items()).all(|(x, y)| x.text() == y.text()));
    let empty = synthesize_dataset(&SynthesisSpec {
        pool_size: 0,
        ..SynthesisSpec::default()
    })
    .unwrap();
    assert!(empty.is_empty());
    assert!(synthesize_dataset(&SynthesisSpec {
        noise: vec![0.5],
        ..SynthesisSpec::default()
    })
    .is_err());
}

fn small_grid(policies: Vec<PolicyVariant>, seeds: usize) -> ExperimentGrid {
    let mut grid = ExperimentGrid::new(Scenario::named("amazon-like").unwrap().with_pool_size(150));
    grid.policies = policies;
    grid.seeds = seeds;
    grid.budgets_per_item = vec![3.0];
    grid
}

#[test]
fn one_cell_one_seed_matches_a_direct_run() {
    let grid = small_grid(vec![PolicyVariant::fixed_switch(0.3)], 1);
    let table = run_experiment(&grid).unwrap();
    assert_eq!(table.cells.len(), 1);
    let cell = &table.cells[0];
    let key = grid.cells()[0];
    let data = grid.scenario.dataset(0).unwrap();
    let direct = ahc::run(&grid.run_config(&key, 0, data.len()), &data).unwrap();
    assert_eq!(cell.outcomes[0].metrics, direct.metrics.unwrap());
    assert_eq!(cell.summary.cost.std, 0.0);
}

#[test]
fn aggregation_matches_brute_force() {
    let grid = small_grid(vec![PolicyVariant::crowd_only(), PolicyVariant::fixed_switch(0.2)], 4);
    let table = run_experiment(&grid).unwrap();
    for cell in &table.cells {
        assert!(cell.failed.is_none());
        let f3: Vec<f64> = cell.outcomes.iter().map(|o| o.metrics.f(3.0).unwrap()).collect();
        let n = f3.len() as f64;
        let mean = f3.iter().sum::<f64>() / n;
        let var = f3.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let s = cell.summary.f(3.0).unwrap();
        assert!((s.mean - mean).abs() < 1e-12);
        assert!((s.std - var.sqrt()).abs() < 1e-12);
        let costs: Vec<f64> = cell.outcomes.iter().map(|o| o.metrics.cost_per_item).collect();
        assert_eq!(cell.summary.cost, Stat::of(&costs));
    }
}

#[test]
fn failing_cells_are_marked_and_the_grid_continues() {
    let mut grid = small_grid(vec![PolicyVariant::crowd_only()], 1);
    grid.base.batch_size = 0;
    let table = run_experiment(&grid).unwrap();
    assert!(table.cells[0].failed.is_some());
}

#[test]
fn results_csv_round_trips() {
    let grid = small_grid(vec![PolicyVariant::crowd_only()], 2);
    let rows = result_rows(&run_experiment(&grid).unwrap());
    let mut buf = Vec::new();
    write_results_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), RESULTS_HEADER.join(","));
    assert_eq!(text.lines().count(), 2);
    assert_eq!(read_results_csv(buf.as_slice(), Path::new("mem")).unwrap(), rows);
}
