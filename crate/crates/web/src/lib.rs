//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three interactive operations: the vote-by-vote posterior of one
//! predicate, the Exp3 learning probability under a stream of rewards, and
//! a small cost-vs-F₃ sweep over the learning share of the budget. Results
//! cross the boundary as JSON strings.

use ahc::domain::{clamp_accuracy, VoteTally};
use ahc::eval::experiment::{run_experiment, ExperimentGrid, PolicyVariant};
use ahc::eval::scenario::Scenario;
use ahc::hybrid::{predicate_posterior, DecisionThresholds};
use ahc::policy::{exp3_probability, exp3_update_weight};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct PosteriorPoint {
    votes: u32,
    after_yes: f64,
    after_no: f64,
}

#[derive(Serialize)]
struct PosteriorCurve {
    tau_in: f64,
    tau_out: f64,
    points: Vec<PosteriorPoint>,
}

/// Posterior after 0..=max_votes unanimous yes (or no) votes.
#[wasm_bindgen]
pub fn posterior_curve(prior: f64, accuracy: f64, max_votes: u32) -> String {
    let a = clamp_accuracy(accuracy);
    let prior = prior.clamp(0.0, 1.0);
    let th = DecisionThresholds::default();
    let points = (0..=max_votes)
        .map(|k| PosteriorPoint {
            votes: k,
            after_yes: predicate_posterior(prior, VoteTally::new(k, 0), a),
            after_no: predicate_posterior(prior, VoteTally::new(0, k), a),
        })
        .collect();
    serde_json::to_string(&PosteriorCurve {
        tau_in: th.tau_in,
        tau_out: th.tau_out,
        points,
    })
    .expect("curve serializes")
}

#[wasm_bindgen]
pub fn posterior(prior: f64, yes: u32, no: u32, accuracy: f64) -> f64 {
    predicate_posterior(prior.clamp(0.0, 1.0), VoteTally::new(yes, no), clamp_accuracy(accuracy))
}

#[derive(Serialize)]
struct Exp3Step {
    step: usize,
    p_learn: f64,
    w_learn: f64,
    w_exploit: f64,
}

/// Exp3 learning probability when each arm always earns a fixed reward and
/// the arm pulled is the more likely one.
#[wasm_bindgen]
pub fn exp3_trajectory(gamma_x: f64, learn_reward: f64, exploit_reward: f64, steps: usize) -> String {
    let gamma = gamma_x.clamp(1e-6, 1.0);
    let (mut wl, mut we) = (1.0f64, 1.0f64);
    let mut out = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let p = exp3_probability(wl, we, gamma);
        out.push(Exp3Step {
            step,
            p_learn: p,
            w_learn: wl,
            w_exploit: we,
        });
        if p >= 0.5 {
            wl = exp3_update_weight(wl, learn_reward.clamp(0.0, 1.0), gamma);
        } else {
            we = exp3_update_weight(we, exploit_reward.clamp(0.0, 1.0), gamma);
        }
        let m = wl.max(we);
        if m > 1e200 {
            wl /= m;
            we /= m;
        }
    }
    serde_json::to_string(&out).expect("trajectory serializes")
}

#[derive(Serialize)]
struct SweepPoint {
    policy: String,
    learn_fraction: Option<f64>,
    cost: f64,
    f3: f64,
}

/// Cost per item and F₃ for crowd-only screening and for learning shares
/// 0.1..=1.0 on a small amazon-like pool, one seed per setting.
#[wasm_bindgen]
pub fn budget_split_sweep(pool_size: usize, budget_per_item: f64, accuracy: f64, seed: u64) -> String {
    let scenario = match Scenario::named("amazon-like") {
        Ok(s) => s.with_pool_size(pool_size.clamp(50, 2000)),
        Err(e) => return format!("{{\"error\":\"{e}\"}}"),
    };
    let mut grid = ExperimentGrid::new(scenario);
    grid.seeds = 1;
    grid.base.seed = seed;
    grid.budgets_per_item = vec![budget_per_item.max(0.0)];
    grid.crowd_accuracies = vec![Some(accuracy.clamp(0.5, 1.0))];
    grid.policies = std::iter::once(PolicyVariant::crowd_only())
        .chain((1..=10).map(|k| PolicyVariant::fixed_switch(k as f64 / 10.0)))
        .collect();
    let table = match run_experiment(&grid) {
        Ok(t) => t,
        Err(e) => return format!("{{\"error\":\"{e}\"}}"),
    };
    let points: Vec<SweepPoint> = table
        .cells
        .iter()
        .filter(|c| c.failed.is_none())
        .map(|c| SweepPoint {
            policy: c.policy.clone(),
            learn_fraction: c.param,
            cost: c.summary.cost.mean,
            f3: c.summary.f(3.0).map_or(f64::NAN, |s| s.mean),
        })
        .collect();
    serde_json::to_string(&points).expect("sweep serializes")
}
