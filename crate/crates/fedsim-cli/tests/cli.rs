//! End-to-end tests of the `fedsim` binary: artifacts, determinism, exit
//! codes, and the comparison table.

use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn fedsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fedsim"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = fedsim().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn minimal_args(dir: &Path) -> Vec<String> {
    [
        "run",
        "--strategy", "fedec",
        "--alpha", "1",
        "--clients", "5",
        "--classes", "3",
        "--classes-per-client", "3",
        "--dim", "4",
        "--per-class", "30",
        "--rounds", "2",
        "--seed", "9",
    ]
    .into_iter()
    .map(String::from)
    .chain(["--output-dir".to_string(), dir.display().to_string()])
    .collect()
}

#[test]
fn minimal_run_writes_artifacts_quickly() {
    let tmp = tempfile::tempdir().unwrap();
    // A directory that does not exist yet is created.
    let dir = tmp.path().join("nested").join("out");
    let args = minimal_args(&dir);
    let start = Instant::now();
    run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");

    for artifact in ["metrics.csv", "summary.json", "params.txt"] {
        assert!(dir.join(artifact).exists(), "{artifact} missing");
    }
    assert!(dir.join("config.ini").exists());
    assert!(dir.join("partition_summary.json").exists());

    // Metrics CSV: header + 2 round rows + final evaluation row.
    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "round,mean_acc,mean_loss,n_evaluated,seconds");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("3,"));

    // The summary carries the echoed config and per-client accuracies.
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["round"]["strategy"], "fedec");
    assert_eq!(
        summary["final_per_client_accuracy"].as_array().unwrap().len(),
        5
    );

    // The final checkpoint parses back.
    let phi = fedsim::nncore::ParamVector::load(&dir.join("params.txt")).unwrap();
    assert!(!phi.is_empty());
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    for dir in [&dir_a, &dir_b] {
        let args = minimal_args(dir);
        run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let metrics_a = std::fs::read(dir_a.join("metrics.csv")).unwrap();
    let metrics_b = std::fs::read(dir_b.join("metrics.csv")).unwrap();
    assert_eq!(metrics_a, metrics_b, "metrics.csv differs between reruns");

    let params_a = std::fs::read(dir_a.join("params.txt")).unwrap();
    let params_b = std::fs::read(dir_b.join("params.txt")).unwrap();
    assert_eq!(params_a, params_b, "params.txt differs between reruns");
}

#[test]
fn config_file_with_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let config_path = tmp.path().join("exp.ini");
    std::fs::write(
        &config_path,
        "[dataset]\nclasses = 3\ndim = 4\nper_class = 30\n\
         [partition]\nclasses_per_client = 3\n\
         [round]\nclients = 5\nrounds = 100\nstrategy = fedec_wo\nseed = 3\n",
    )
    .unwrap();
    let dir = tmp.path().join("out");
    run_ok(&[
        "run",
        "--config",
        config_path.to_str().unwrap(),
        "--rounds",
        "1",
        "--output-dir",
        dir.to_str().unwrap(),
    ]);
    // Flag wins over the file: 1 round + final evaluation.
    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    // The echoed config re-parses and reflects the override.
    let echoed = std::fs::read_to_string(dir.join("config.ini")).unwrap();
    assert!(echoed.contains("rounds = 1"), "{echoed}");
    assert!(echoed.contains("strategy = fedec_wo"), "{echoed}");
}

#[test]
fn config_errors_exit_one_and_name_the_key() {
    let out = fedsim()
        .args(["run", "--strategy", "fedavg", "--alpha", "1.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("round.alpha"), "stderr: {stderr}");

    let tmp = tempfile::tempdir().unwrap();
    let config_path = tmp.path().join("bad.ini");
    std::fs::write(&config_path, "[round]\nrouds = 5\n").unwrap();
    let out = fedsim()
        .args(["run", "--config", config_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("round.rouds"), "stderr: {stderr}");
}

#[test]
fn runtime_errors_exit_two() {
    let out = fedsim()
        .args([
            "run",
            "--dataset", "csv",
            "--csv", "/nonexistent/data.csv",
            "--classes", "3",
            "--clients", "3",
            "--classes-per-client", "3",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("runtime"));
}

#[test]
fn csv_dataset_round_trips_through_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data.csv");
    let dataset = fedsim::datagen::synth_mixture(3, 4, 30, 3.0, 8).unwrap();
    fedsim::datagen::save_csv(&dataset, &data).unwrap();
    let dir = tmp.path().join("out");
    run_ok(&[
        "run",
        "--dataset", "csv",
        "--csv", data.to_str().unwrap(),
        "--classes", "3",
        "--clients", "3",
        "--classes-per-client", "3",
        "--rounds", "1",
        "--output-dir", dir.to_str().unwrap(),
    ]);
    assert!(dir.join("metrics.csv").exists());
}

#[test]
fn compare_emits_table_and_shares_partitions_across_strategies() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("cmp");
    run_ok(&[
        "compare",
        "--strategies", "fedec,fedec_wo",
        "--seeds", "3,4",
        "--clients", "5",
        "--classes", "3",
        "--classes-per-client", "3",
        "--dim", "4",
        "--per-class", "30",
        "--rounds", "2",
        "--alpha", "1",
        "--output-dir", dir.to_str().unwrap(),
    ]);

    let csv = std::fs::read_to_string(dir.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "strategy,mean_final10_acc,std_final10_acc,mean_final_personalized_acc,std_final_personalized_acc,seeds"
    );
    assert_eq!(lines.len(), 3);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("comparison.json")).unwrap())
            .unwrap();
    for strategy in ["fedec", "fedec_wo"] {
        for key in ["mean_final10_acc", "std", "final_personalized_acc"] {
            assert!(
                summary["per_strategy"][strategy][key].is_number(),
                "missing per_strategy.{strategy}.{key}"
            );
        }
    }

    // Identical seeds share identical partitions across strategies.
    let runs = summary["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 4);
    for seed in [3, 4] {
        let hashes: Vec<&str> = runs
            .iter()
            .filter(|r| r["seed"] == seed)
            .map(|r| r["partition_hash"].as_str().unwrap())
            .collect();
        assert_eq!(hashes.len(), 2);
        assert_eq!(hashes[0], hashes[1], "seed {seed} partitions differ");
    }
    // Different seeds get different partitions.
    assert_ne!(
        runs[0]["partition_hash"].as_str().unwrap(),
        runs[2]["partition_hash"].as_str().unwrap()
    );

    // Per-run metrics land under the output directory.
    assert!(dir.join("runs/fedec-s3/metrics.csv").exists());
    assert!(dir.join("runs/fedec_wo-s4/metrics.csv").exists());
}

#[test]
fn compare_with_one_strategy_and_seed_has_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("cmp1");
    run_ok(&[
        "compare",
        "--strategies", "fedavg",
        "--seeds", "5",
        "--clients", "5",
        "--classes", "3",
        "--classes-per-client", "3",
        "--dim", "4",
        "--per-class", "30",
        "--rounds", "2",
        "--output-dir", dir.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(dir.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("fedavg,"));
}

#[test]
fn embeddings_and_checkpoints_are_written_when_requested() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("emb");
    let mut args = minimal_args(&dir);
    args.extend([
        "--dump-embeddings".to_string(),
        "--embedding-layer".to_string(), "0".to_string(),
        "--checkpoint-interval".to_string(), "1".to_string(),
        "--hidden".to_string(), "16".to_string(),
    ]);
    run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());

    let embeddings = std::fs::read_to_string(dir.join("embeddings.csv")).unwrap();
    // 2 rounds x ceil(0.25 * 5) = 2 sampled clients per round.
    assert_eq!(embeddings.lines().count(), 4);
    for line in embeddings.lines() {
        // round, client, 16 activation means.
        assert_eq!(line.split(',').count(), 18);
    }
    assert!(dir.join("checkpoint_round_1.txt").exists());
    // The final round's parameters are params.txt, not a duplicate checkpoint.
    assert!(!dir.join("checkpoint_round_2.txt").exists());
    assert!(dir.join("params.txt").exists());
}
