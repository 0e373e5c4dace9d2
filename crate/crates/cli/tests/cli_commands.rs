//! End-to-end command tests against the shipped sample data.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(file)
}

fn pmuspill(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmuspill"))
        .args(args)
        .env_remove("PMUSPILL_SEED")
        .output()
        .expect("binary runs")
}

fn with_data(extra: &[&str]) -> Vec<String> {
    let mut args: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
    args.extend([
        "--catalog".into(),
        data("skylake_sample.json").display().to_string(),
        "--augment".into(),
        data("skylake_augment.json").display().to_string(),
        "--instructions".into(),
        data("instructions_sample.xml").display().to_string(),
        "--filter".into(),
        data("instruction_filter.json").display().to_string(),
    ]);
    args
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("pmuspill-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(format!("{}-{name}", std::process::id()))
}

#[test]
fn demo_leak_recovers_hex_secret() {
    let args = with_data(&["demo-leak", "--secret", "c0ffee", "--rounds", "2", "--seed", "1"]);
    let out = pmuspill(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("recovered: c0ffee"), "{stdout}");
    assert!(stdout.contains("error_rate: 0.0000%"), "{stdout}");
}

#[test]
fn demo_leak_exit_zero_even_when_recovery_fails() {
    let args = with_data(&[
        "demo-leak",
        "--secret",
        "aa",
        "--rounds",
        "1",
        "--seed",
        "1",
        "--policy",
        "retire_only",
    ]);
    let out = pmuspill(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("recovered: ??"), "{stdout}");
}

#[test]
fn missing_input_file_is_config_error_exit_1() {
    let out = pmuspill(&["sweep", "--catalog", "/nonexistent/catalog.json"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("configuration error"), "{stderr}");
}

#[test]
fn bad_flag_value_is_config_error() {
    let args = with_data(&["demo-leak", "--secret", "aa", "--policy", "bogus"]);
    let out = pmuspill(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn noisy_run_without_seed_is_rejected() {
    let args = with_data(&["demo-leak", "--secret", "aa", "--noise", "0.1"]);
    let out = pmuspill(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("seed"), "{stderr}");
}

#[test]
fn sweep_outputs_are_deterministic_and_report_reads_them() {
    let csv_a = tmp("sweep-a.csv");
    let csv_b = tmp("sweep-b.csv");
    let json_a = tmp("sweep-a.json");
    for (csv, json) in [(&csv_a, &json_a), (&csv_b, &json_a)] {
        let args = with_data(&[
            "sweep",
            "--max-events",
            "4",
            "--max-instructions",
            "6",
            "--reps",
            "2",
            "--seed",
            "9",
            "--out-csv",
            csv.to_str().unwrap(),
            "--out-json",
            json.to_str().unwrap(),
        ]);
        let out = pmuspill(&args.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(&csv_a).unwrap();
    let b = std::fs::read(&csv_b).unwrap();
    assert_eq!(a, b, "identical config+seed must produce byte-identical files");

    let out = pmuspill(&["report", csv_a.to_str().unwrap()]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("trigger_count"), "{stdout}");
    assert!(stdout.contains("rows: 8"), "{stdout}");
}

#[test]
fn report_on_malformed_file_is_config_error() {
    let path = tmp("bad.csv");
    std::fs::write(&path, "not,a,sweep\n").unwrap();
    let out = pmuspill(&["report", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mitigation_eval_table_shape() {
    let args = with_data(&["mitigation-eval", "--bytes", "8", "--rounds", "1", "--seed", "5"]);
    let out = pmuspill(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("vulnerable"), "{stdout}");
    assert!(stdout.contains("full recovery"), "{stdout}");
    assert!(stdout.contains("refused"), "{stdout}");
    assert!(stdout.contains("bit-identical"), "{stdout}");
}

#[test]
fn config_file_drives_demo_leak() {
    // A config file pointing at the sample data with a tiny workload.
    let cfg_path = tmp("config.json");
    let cfg = serde_json::json!({
        "catalog": data("skylake_sample.json"),
        "augment": data("skylake_augment.json"),
        "instructions": data("instructions_sample.xml"),
        "filter": data("instruction_filter.json"),
        "rounds": 1,
        "seed": 3,
    });
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let out = pmuspill(&[
        "demo-leak",
        "--config",
        cfg_path.to_str().unwrap(),
        "--secret",
        "0f",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("recovered: 0f"));
}
