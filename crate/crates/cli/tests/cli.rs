use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ahc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ahc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, pool: usize) -> std::path::PathBuf {
    let out = ahc(&["synth", "--scenario", "amazon-like", "--pool-size", &pool.to_string(), "--seed", "3", "--out", path(dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("dataset.csv")
}

#[test]
fn synth_writes_a_gold_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth(dir.path(), 120);
    let text = fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "item_id,text,gold_p1,gold_p2");
    assert_eq!(lines.count(), 120);
}

#[test]
fn run_replay_and_metrics_agree() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 200);
    let first = dir.path().join("first");
    let out = ahc(&[
        "run", "--dataset", path(&data), "--budget", "600", "--policy", "fixed_switch:0.2",
        "--seed", "5", "--dump-model", "--out", path(&first),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.toml", "votes.csv", "decisions.csv", "result.json", "model.json"] {
        assert!(first.join(f).exists(), "missing {f}");
    }
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(first.join("result.json")).unwrap()).unwrap();
    let spent = result["votes_spent"].as_u64().unwrap();
    assert!(spent <= 600);
    let votes = fs::read_to_string(first.join("votes.csv")).unwrap();
    assert_eq!(votes.lines().count() as u64, spent + 1);

    let second = dir.path().join("second");
    let out = ahc(&[
        "run", "--config", path(&first.join("config.toml")), "--dataset", path(&data),
        "--votes", path(&first.join("votes.csv")), "--out", path(&second),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read_to_string(first.join("decisions.csv")).unwrap(),
        fs::read_to_string(second.join("decisions.csv")).unwrap()
    );

    let scored = dir.path().join("scored");
    let out = ahc(&[
        "metrics", "--decisions", path(&first.join("decisions.csv")), "--gold", path(&data),
        "--votes-spent", &spent.to_string(), "--out", path(&scored),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(scored.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics, result["metrics"]);
}

#[test]
fn experiment_writes_results_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = ahc(&[
        "experiment", "--scenario", "amazon-like", "--pool-size", "120", "--seeds", "2",
        "--policies", "crowd_only,fixed_switch:0.2,fixed_switch:0.5", "--budgets", "2,4", "--out", path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scenario,policy,param,budget_per_item,crowd_acc,seed_count,cost_mean,cost_std,f1_mean,f1_std,f3_mean,f3_std,precision_mean,recall_mean"
    );
    assert_eq!(lines.count(), 6);
    let plot: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("plot.json")).unwrap()).unwrap();
    assert!(plot.as_array().is_some_and(|a| !a.is_empty()));
    assert!(dir.path().join("cells.json").exists());
}

#[test]
fn exit_codes_separate_config_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");

    assert_eq!(code(&ahc(&[])), 1);
    assert_eq!(code(&ahc(&["--help"])), 0);
    assert_eq!(code(&ahc(&["synth", "--scenario", "imdb", "--out", path(&out_dir)])), 1);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "batch_size = \"many\"\n").unwrap();
    assert_eq!(code(&ahc(&["run", "--config", path(&bad), "--scenario", "slr-like", "--out", path(&out_dir)])), 1);
    let invalid = dir.path().join("invalid.toml");
    fs::write(&invalid, "[engine]\nvotes_per_learning_label = 2\n").unwrap();
    assert_eq!(code(&ahc(&["run", "--config", path(&invalid), "--scenario", "slr-like", "--out", path(&out_dir)])), 1);
    assert_eq!(code(&ahc(&["run", "--scenario", "slr-like", "--policy", "greedy", "--out", path(&out_dir)])), 1);

    let missing = dir.path().join("nope.csv");
    assert_eq!(code(&ahc(&["run", "--dataset", path(&missing), "--out", path(&out_dir)])), 2);
    assert_eq!(code(&ahc(&["run", "--config", path(&missing), "--scenario", "slr-like", "--out", path(&out_dir)])), 2);
    assert_eq!(code(&ahc(&["metrics", "--decisions", path(&missing), "--gold", path(&missing)])), 2);
}
