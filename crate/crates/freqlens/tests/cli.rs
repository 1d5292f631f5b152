//! End-to-end tests for the `freqlens` binary: exit codes, artifact
//! layout, and the behavior of the documented edge cases (zero-epoch
//! training, zero-budget attacks, identical RCT pairs).

use std::path::Path;
use std::process::{Command, Output};

use freqlens::datasets::load_batch;
use freqlens::model::Network;

fn freqlens(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freqlens"))
        .arg("--out")
        .arg(out_dir)
        .args(args)
        .output()
        .expect("failed to launch freqlens binary")
}

fn read_json(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parsing {}: {e}", path.display()))
}

fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
}

/// Tiny synthetic-data flags shared by the fast tests.
const TINY: &[&str] = &["--data", "synthetic", "--samples", "6", "--size", "8"];

fn train_tiny_model(out_dir: &Path, epochs: &str) -> std::path::PathBuf {
    let mut args = vec!["train", "--epochs", epochs];
    args.extend_from_slice(TINY);
    let output = freqlens(out_dir, &args);
    assert_success(&output);
    out_dir.join("model.fqnm")
}

#[test]
fn train_with_zero_epochs_writes_untrained_model_at_chance() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = train_tiny_model(dir.path(), "0");

    // The model file must exist and load even though no step ran.
    assert!(model_path.is_file(), "model.fqnm missing");
    Network::load(&model_path).expect("zero-epoch model should load");

    // Freshly initialized weights should sit near chance on 4 classes.
    let summary = read_json(&dir.path().join("train_summary.json"));
    let accuracy = summary["train_accuracy"].as_f64().unwrap();
    assert!(
        (0.0..=0.6).contains(&accuracy),
        "untrained accuracy {accuracy} should be near chance (0.25)"
    );
    assert_eq!(summary["epochs_run"].as_u64(), Some(0));
}

#[test]
fn every_run_writes_a_manifest_with_seed_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--seed",
        "9",
        "train",
        "--epochs",
        "0",
        "--data",
        "synthetic",
        "--samples",
        "6",
        "--size",
        "8",
    ];
    let output = Command::new(env!("CARGO_BIN_EXE_freqlens"))
        .arg("--out")
        .arg(dir.path())
        .args(args)
        .output()
        .unwrap();
    assert_success(&output);

    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["seed"].as_u64(), Some(9));
    assert_eq!(manifest["tool"].as_str(), Some("freqlens"));
    assert!(manifest["version"].as_str().is_some_and(|v| !v.is_empty()));
    assert!(
        manifest["command"]
            .as_str()
            .is_some_and(|c| c.contains("train")),
        "manifest should record the invocation"
    );
    assert!(manifest["threads"].as_u64().is_some_and(|t| t >= 1));
    assert!(manifest["config"].is_object(), "manifest lacks config");
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(
        outputs
            .iter()
            .any(|o| o.as_str().unwrap().ends_with("model.fqnm")),
        "manifest outputs should list the model file: {outputs:?}"
    );
}

#[test]
fn attack_with_zero_budget_returns_the_original_batch() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = train_tiny_model(dir.path(), "1");

    let mut args = vec![
        "attack",
        "--kind",
        "pgd",
        "--eps",
        "0",
        "--steps",
        "3",
        "--model",
        model_path.to_str().unwrap(),
    ];
    args.extend_from_slice(TINY);
    let output = freqlens(dir.path(), &args);
    assert_success(&output);

    // A zero budget means the projection pins every iterate to x.
    let report = read_json(&dir.path().join("attack_report.json"));
    assert_eq!(report["mean_l2"].as_f64(), Some(0.0));
    assert_eq!(
        report["accuracy_before"].as_f64(),
        report["accuracy_after"].as_f64(),
        "zero-budget attack must not change accuracy"
    );
    for outcome in report["outcomes"].as_array().unwrap() {
        assert_eq!(outcome["linf"].as_f64(), Some(0.0));
    }

    // The exported batch must load and keep the source batch size.
    let batch = load_batch(&dir.path().join("adversarial.fql1")).unwrap();
    assert_eq!(batch.len(), 24); // 4 classes x 6 samples
}

#[test]
fn missing_data_path_fails_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let output = freqlens(
        dir.path(),
        &["train", "--data", "/no/such/batch.fql1", "--epochs", "1"],
    );
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("data source not found") && stderr.contains("/no/such/batch.fql1"),
        "stderr should name the missing source, got: {stderr}"
    );
}

#[test]
fn unknown_attack_kind_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["attack", "--kind", "warp", "--model", "m.fqnm"];
    args.extend_from_slice(TINY);
    let output = freqlens(dir.path(), &args);
    // clap reports bad flag values as usage errors, not runtime failures.
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("possible values"),
        "usage error should list valid kinds, got: {stderr}"
    );
}

#[test]
fn rct_of_identical_pairs_renders_a_flat_map() {
    let dir = tempfile::tempdir().unwrap();
    // Both sources are synthetic with the same generator settings and
    // the same seed substream, so the pairs are bitwise identical.
    let output = freqlens(
        dir.path(),
        &[
            "rct",
            "--originals",
            "synthetic",
            "--perturbed",
            "synthetic",
            "--samples",
            "4",
            "--size",
            "8",
        ],
    );
    assert_success(&output);

    let summary = read_json(&dir.path().join("rct_summary.json"));
    assert_eq!(summary["high_band_mean"].as_f64(), Some(0.0));
    assert_eq!(summary["low_band_mean"].as_f64(), Some(0.0));

    // Zero change everywhere must render as a single flat gray level.
    let pgm = std::fs::read(dir.path().join("rct.pgm")).unwrap();
    let header_end = pgm
        .windows(4)
        .position(|w| w == b"255\n")
        .expect("pgm maxval header")
        + 4;
    let pixels = &pgm[header_end..];
    assert!(!pixels.is_empty());
    assert!(
        pixels.iter().all(|&b| b == pixels[0]),
        "flat RCT map should use one gray level"
    );
}

#[test]
fn attribute_per_class_writes_one_profile_per_class() {
    let dir = tempfile::tempdir().unwrap();
    let mut train_args = vec!["train", "--epochs", "1", "--shapes", "disk,square"];
    train_args.extend_from_slice(TINY);
    assert_success(&freqlens(dir.path(), &train_args));
    let model_path = dir.path().join("model.fqnm");

    let output = freqlens(
        dir.path(),
        &[
            "attribute",
            "--per-class",
            "--model",
            model_path.to_str().unwrap(),
            "--data",
            "synthetic",
            "--samples",
            "4",
            "--size",
            "8",
            "--shapes",
            "disk,square",
        ],
    );
    assert_success(&output);

    let csv = std::fs::read_to_string(dir.path().join("attribution.csv")).unwrap();
    assert!(csv.starts_with("class,class_name,level,score\n"));
    let disk_rows = csv.lines().filter(|l| l.contains(",disk,")).count();
    let square_rows = csv.lines().filter(|l| l.contains(",square,")).count();
    // An 8x8 image has 2*8-1 = 15 frequency levels.
    assert_eq!(disk_rows, 15, "one row per level for the disk class");
    assert_eq!(square_rows, 15, "one row per level for the square class");

    let summary = read_json(&dir.path().join("attribution_summary.json"));
    let shares = summary["per_class_low_band_share"].as_array().unwrap();
    assert_eq!(shares.len(), 2);
    for share in shares {
        let share = share.as_f64().unwrap();
        assert!(
            (0.0..=1.0).contains(&share),
            "per-class low-band share out of range: {share}"
        );
    }
}

#[test]
fn verify_passes_and_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let output = freqlens(
        dir.path(),
        &[
            "verify",
            "--round-trips",
            "3",
            "--max-basis-len",
            "16",
            "--pairs",
            "50",
            "--tight-pairs",
            "10",
        ],
    );
    assert_success(&output);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("pass"), "verify should print check results");

    let report = read_json(&dir.path().join("verify.json"));
    assert_eq!(report["all_pass"].as_bool(), Some(true));
    let checks: Vec<&String> = report
        .as_object()
        .unwrap()
        .iter()
        .filter(|(_, v)| v.is_object())
        .map(|(k, _)| k)
        .collect();
    assert!(checks.len() >= 6, "expected six analytic checks: {checks:?}");
    for name in checks {
        assert_eq!(
            report[name]["pass"].as_bool(),
            Some(true),
            "check {name} failed: {}",
            report[name]
        );
    }
}
