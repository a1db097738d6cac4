use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ahc::crowd::{calibrate_accuracy, load_votes_csv, write_votes_csv, ReplayCrowd, VoteSource};
use ahc::engine::{simulated_crowd, Engine};
use ahc::error::{ConfigError, CrowdError, DataError, EngineError};
use ahc::eval::emit::{read_decisions_csv, result_rows, write_decisions_csv, write_plot_json, write_results_csv};
use ahc::eval::experiment::{run_experiment, ExperimentGrid, PolicyVariant};
use ahc::eval::metrics::compute_metrics;
use ahc::eval::scenario::Scenario;
use ahc::{Dataset, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ahc", version, about = "Hybrid crowd-machine screening simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one screening campaign.
    Run(RunArgs),
    /// Run a multi-seed experiment grid.
    Experiment(ExperimentArgs),
    /// Write a synthetic scenario dataset as CSV.
    Synth(SynthArgs),
    /// Score a decisions CSV against a gold dataset.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV (`item_id,text,gold_p1,...`).
    #[arg(long, conflicts_with = "scenario")]
    dataset: Option<PathBuf>,
    /// Synthesize the pool from a named scenario instead.
    #[arg(long)]
    scenario: Option<String>,
    /// Replay recorded votes instead of simulating a crowd.
    #[arg(long)]
    votes: Option<PathBuf>,
    /// Estimate crowd accuracies from the replayed votes and gold labels.
    #[arg(long, requires = "votes")]
    calibrate: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Total vote budget.
    #[arg(long)]
    budget: Option<u64>,
    /// Policy variant, e.g. `crowd_only`, `fixed_switch:0.2`, `exp3:0.1`.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the trained classifiers as JSON.
    #[arg(long)]
    dump_model: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML base run configuration shared by every cell.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "amazon-like")]
    scenario: String,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    /// Comma-separated policy variants.
    #[arg(long, value_delimiter = ',', default_value = "crowd_only,fixed_switch:0.1,fixed_switch:0.2,fixed_switch:0.3,fixed_switch:0.4,fixed_switch:0.5,fixed_switch:0.6,fixed_switch:0.7,fixed_switch:0.8,fixed_switch:0.9,fixed_switch:1.0,adaptive")]
    policies: Vec<String>,
    /// Comma-separated budgets in votes per item.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
    budgets: Vec<f64>,
    /// Comma-separated crowd accuracies; omit to keep the scenario's own.
    #[arg(long, value_delimiter = ',')]
    accuracies: Vec<f64>,
    /// Override the scenario pool size.
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    pool_size: Option<usize>,
    /// Output directory; the dataset is written to `dataset.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Decisions CSV (`item_id,verdict,source`).
    #[arg(long)]
    decisions: PathBuf,
    /// Dataset CSV holding gold labels.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,3")]
    betas: Vec<f64>,
    /// Votes spent, for the cost column.
    #[arg(long, default_value_t = 0)]
    votes_spent: u64,
    /// Write `metrics.json` here instead of printing.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Io(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<CrowdError> for Failure {
    fn from(e: CrowdError) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(c) => c.into(),
            other => Failure::Io(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    serde_json::to_writer_pretty(create(path)?, value).map_err(|e| io_failure(path, e))
}

fn scenario(name: &str, pool_size: Option<usize>) -> Result<Scenario, Failure> {
    let s = Scenario::named(name)?;
    Ok(match pool_size {
        Some(n) => s.with_pool_size(n),
        None => s,
    })
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(b) = args.budget {
        cfg.budget = b;
    }
    let dataset = match (&args.dataset, &args.scenario) {
        (Some(p), _) => Dataset::load_csv(p)?,
        (None, Some(name)) => {
            let s = scenario(name, None)?;
            if args.config.is_none() {
                cfg.crowd.set_accuracies(&s.accuracies(cfg.seed));
                cfg.engine = s.engine.clone();
                cfg.ml = s.ml.clone();
            }
            s.dataset(cfg.seed)?
        }
        (None, None) => return Err(Failure::Config("run needs --dataset or --scenario".into())),
    };
    if let Some(spec) = &args.policy {
        let v = PolicyVariant::parse(spec)?;
        cfg.policy = v.policy;
        cfg.engine.ml_enabled = v.ml_enabled;
    }
    cfg.validate()?;
    ensure_dir(&args.out)?;

    match &args.votes {
        Some(path) => {
            let ledger = load_votes_csv(path)?;
            if args.calibrate {
                let gold = |id, p: ahc::PredicateId| {
                    dataset.position(id).and_then(|pos| dataset.gold_label(pos, p))
                };
                let acc = calibrate_accuracy(ledger.votes(), gold, dataset.n_predicates(), cfg.crowd.default_accuracy);
                cfg.crowd.set_accuracies(&acc);
            }
            execute(cfg, &dataset, ReplayCrowd::new(&ledger), &args)
        }
        None => {
            let crowd = simulated_crowd(&cfg, &dataset)?;
            execute(cfg, &dataset, crowd, &args)
        }
    }
}

fn execute<S: VoteSource>(cfg: RunConfig, dataset: &Dataset, source: S, args: &RunArgs) -> Result<(), Failure> {
    std::fs::write(args.out.join("config.toml"), cfg.to_toml_string())
        .map_err(|e| io_failure(&args.out, e))?;
    let mut engine = Engine::new(cfg, dataset, source)?;
    engine.run_to_end()?;
    if args.dump_model {
        match engine.model_dump() {
            Some(dump) => write_json(&args.out.join("model.json"), &dump)?,
            None => eprintln!("no model to dump: machine classifiers are disabled"),
        }
    }
    let votes_path = args.out.join("votes.csv");
    write_votes_csv(engine.ledger(), create(&votes_path)?).map_err(|e| io_failure(&votes_path, e))?;
    let result = engine.finish()?;
    let decisions_path = args.out.join("decisions.csv");
    write_decisions_csv(&result.decisions, create(&decisions_path)?)
        .map_err(|e| io_failure(&decisions_path, e))?;
    write_json(&args.out.join("result.json"), &result)?;
    match &result.metrics {
        Some(m) => println!(
            "votes {} ({:.3}/item), precision {:.4}, recall {:.4}, {}",
            result.votes_spent,
            result.cost_per_item,
            m.precision,
            m.recall,
            m.fbeta
                .iter()
                .map(|s| format!("F{} {:.4}", s.beta, s.value))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        None => println!("votes {} ({:.3}/item)", result.votes_spent, result.cost_per_item),
    }
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), Failure> {
    let base = args.config.as_deref().map(RunConfig::load).transpose()?;
    let mut grid = ExperimentGrid::new(scenario(&args.scenario, args.pool_size)?);
    if let Some(base) = base {
        grid.base = base;
    }
    grid.seeds = args.seeds;
    grid.policies = args
        .policies
        .iter()
        .map(|p| PolicyVariant::parse(p))
        .collect::<Result<_, _>>()?;
    grid.budgets_per_item = args.budgets.clone();
    grid.crowd_accuracies = if args.accuracies.is_empty() {
        vec![None]
    } else {
        args.accuracies.iter().map(|&a| Some(a)).collect()
    };
    let table = run_experiment(&grid)?;
    ensure_dir(&args.out)?;
    let rows = result_rows(&table);
    let csv_path = args.out.join("results.csv");
    write_results_csv(&rows, create(&csv_path)?).map_err(|e| io_failure(&csv_path, e))?;
    let plot_path = args.out.join("plot.json");
    write_plot_json(&rows, create(&plot_path)?).map_err(|e| io_failure(&plot_path, e))?;
    write_json(&args.out.join("cells.json"), &table)?;
    for c in table.cells.iter().filter(|c| c.failed.is_some()) {
        eprintln!("cell {} {:?} failed: {}", c.policy, c.param, c.failed.as_deref().unwrap_or(""));
    }
    println!("{} cells written to {}", rows.len(), csv_path.display());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    let s = scenario(&args.scenario, args.pool_size)?;
    let ds = s.dataset(args.seed)?;
    ensure_dir(&args.out)?;
    let path = args.out.join("dataset.csv");
    ds.save_csv(&path)?;
    println!("{} items written to {}", ds.len(), path.display());
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<(), Failure> {
    let ds = Dataset::load_csv(&args.gold)?;
    let file = File::open(&args.decisions).map_err(|e| io_failure(&args.decisions, e))?;
    let decisions = read_decisions_csv(file, &args.decisions)?;
    if args.betas.iter().any(|b| !(*b > 0.0)) {
        return Err(Failure::Config("betas must be positive".into()));
    }
    let gold = |id| ds.position(id).and_then(|p| ds.gold_passes(p));
    let m = compute_metrics(&decisions, gold, &args.betas, args.votes_spent)?;
    match &args.out {
        Some(dir) => {
            ensure_dir(dir)?;
            write_json(&dir.join("metrics.json"), &m)?;
        }
        None => println!("{}", serde_json::to_string_pretty(&m).expect("metrics serialize")),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Metrics(a) => cmd_metrics(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
