//! Active hybrid crowd-machine classification for finite-pool screening.
//!
//! Items are screened against a conjunction of binary predicates. Crowd
//! votes are combined with per-predicate text classifiers acting as Bayesian
//! priors, and a policy splits the vote budget between buying training labels
//! (the learning arm) and buying votes that settle items (the exploitation
//! arm).

pub mod config;
pub mod crowd;
pub mod dataset;
pub mod domain;
pub mod engine;
pub mod error;
pub mod eval;
pub mod hybrid;
pub mod ml;
pub mod policy;
pub mod sampling;

pub use config::RunConfig;
pub use dataset::Dataset;
pub use domain::{ArmChoice, Decision, ItemId, PredicateId, Verdict};
pub use engine::{run, run_with_source, Engine, RunResult};
pub use error::EngineError;
