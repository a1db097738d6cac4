use std::path::PathBuf;

use thiserror::Error;

use crate::domain::ItemId;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("budget exceeded: batch of {requested} votes, {remaining} remaining")]
    BudgetExceeded { requested: u64, remaining: u64 },
    #[error("vote iteration went backwards ({got} after {previous})")]
    NonMonotoneIteration { previous: u32, got: u32 },
    #[error("item {0} is already decided")]
    AlreadyDecided(ItemId),
    #[error("item {0} is not in the pool")]
    UnknownItem(ItemId),
    #[error("cannot record an undecided verdict for item {0}")]
    UndecidedVerdict(ItemId),
}

#[derive(Debug, Error)]
pub enum MlError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("training set has a single class ({positives} positive of {total})")]
    DegenerateTrainingSet { positives: usize, total: usize },
}

#[derive(Debug, Error)]
pub enum CrowdError {
    #[error("no gold label for item {item} predicate {predicate}")]
    MissingGold { item: ItemId, predicate: usize },
    #[error("no recorded votes left for item {item} predicate {predicate}")]
    ExhaustedVotes { item: ItemId, predicate: usize },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing gold label for item {0}")]
    MissingGold(ItemId),
    #[error("duplicate item id {0}")]
    DuplicateItem(ItemId),
    #[error("decision for unknown item {0}")]
    UnknownItem(ItemId),
    #[error("item {0} has no final In/Out verdict")]
    NotFinal(ItemId),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Crowd(#[from] CrowdError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ml(#[from] MlError),
}
