use std::path::Path;
use std::process::{Command, Output};

use tsf_mia::data::io::{read_metrics, METRICS_HEADER, ROC_HEADER, TRADEOFF_HEADER};
use tsf_mia::experiment::{read_gate_log, replay_gate_log, GateConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tsf-mia"))
}

fn run(cfg: &Path, args: &[&str]) -> Output {
    let out = bin().arg("--config").arg(cfg).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

#[test]
fn full_cli_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            r#"
data = "{data}"
out_dir = "{out}"
split = [0.5, 0.25, 0.25]
rounds = 2
dp_epochs = 2
[generator]
n_episodes = 40
[train]
max_epochs = 3
hidden_dim = 8
embed_dim = 8
[zoo]
lambda = 30.0
mu = 3.0
steps = 2
"#,
            data = dir.path().join("trip.csv").display(),
            out = out.display()
        ),
    )
    .unwrap();

    run(&cfg, &["gen-data"]);
    assert_eq!(first_line(&dir.path().join("trip.csv")), "episode_id,t_hours,var_id,value");
    run(&cfg, &["pretrain"]);
    assert!(out.join("checkpoint_baseline").exists());
    run(&cfg, &["attack"]);
    run(&cfg, &["augment", "--method", "zoo-pca", "--alpha", "0.75", "--pca-ratio", "0.7"]);
    run(&cfg, &["augment", "--method", "mixup", "--beta", "1"]);
    run(&cfg, &["dp-train", "--sigma", "1.1,2"]);
    for alpha in ["0", "0.25", "0.5", "1"] {
        run(&cfg, &["augment", "--method", "zoo-pca", "--alpha", alpha, "--pca-ratio", "0.7"]);
    }
    run(&cfg, &["report"]);

    assert_eq!(first_line(&out.join("metrics.csv")), METRICS_HEADER);
    assert_eq!(first_line(&out.join("roc_baseline.csv")), ROC_HEADER);
    assert_eq!(first_line(&out.join("tradeoff.csv")), TRADEOFF_HEADER);
    assert!(out.join("checkpoint_zoo_pca_a0.75_r0.7").exists());
    assert!(out.join("roc_mixup_b1.csv").exists());

    let rows = read_metrics(&out.join("metrics.csv")).unwrap();
    // baseline attack, 6 augmentation runs x (start + 2 rounds + final), 2 dp rows
    assert_eq!(rows.len(), 1 + 6 * 4 + 2);
    let tradeoff = std::fs::read_to_string(out.join("tradeoff.csv")).unwrap();
    assert_eq!(tradeoff.lines().count(), 1 + 1 + 6 + 2);
    assert_eq!(tradeoff.lines().filter(|l| l.starts_with("zoo_pca,")).count(), 5);
    assert!(tradeoff.lines().any(|l| l.starts_with("zoo_pca,0.25,")));

    for id in ["zoo_pca_a0.75_r0.7", "mixup_b1"] {
        let log = read_gate_log(&out.join(format!("gate_{id}.csv"))).unwrap();
        assert_eq!(log.len(), 3);
        replay_gate_log(&log, &GateConfig::default()).unwrap();
    }
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let st = bin().args(["gen-data", "--episodes", "20", "--seed", "9", "--data"]).arg(p).status().unwrap();
        assert!(st.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn missing_config_exits_2_and_names_it() {
    let out = bin().args(["--config", "/nonexistent/run.toml", "pretrain"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/run.toml"));
}

#[test]
fn unknown_flag_prints_usage() {
    let out = bin().args(["pretrain", "--no-such-flag"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).to_lowercase().contains("usage"));
}

#[test]
fn bad_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_key = 3\n").unwrap();
    let out = bin().arg("--config").arg(&cfg).arg("report").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["pretrain", "--data", "/nonexistent/trip.csv", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/trip.csv"));
}
