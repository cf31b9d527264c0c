//! End-to-end checks of the command-line driver: artifact layout, config
//! precedence, determinism, and the exit-code contract.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bct-lab"))
}

/// `--set` overrides that shrink the default configuration to sub-second
/// training while keeping every pipeline stage exercised.
fn tiny_sets(out: &Path) -> Vec<String> {
    let mut args = Vec::new();
    for kv in [
        "dataset.classes=8",
        "dataset.per_class=14",
        "dataset.dim=6",
        "dataset.eval_per_class=6",
        "old.widths=6,8,4",
        "old.epochs=3",
        "old.batch=16",
        "new.widths=6,16,4",
        "new.epochs=6",
        "new.batch=8",
        "eval.pairs_per_class=8",
        "eval.distractors=0.25",
        "eval.audit_trials=200",
        "eval.chance_permutations=10",
        "fraction=0.4",
    ] {
        args.push("--set".to_string());
        args.push(kv.to_string());
    }
    args.push("--out".to_string());
    args.push(out.display().to_string());
    args
}

fn run_ok(mut cmd: Command) -> Output {
    let out = cmd.output().expect("binary should launch");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn run_verb_produces_the_documented_artifact_layout() {
    let dir = tempfile::tempdir().unwrap();
    let mut cmd = bin();
    cmd.arg("run").args(tiny_sets(dir.path()));
    let out = run_ok(cmd);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("cross ="), "summary line missing: {stdout}");

    let run_dir = dir.path().join("open_class-mixbct-s42");
    for name in
        ["config.resolved", "old.model", "cache.bctf", "new.model", "train.csv", "report.csv", "report.md"]
    {
        assert!(run_dir.join(name).exists(), "missing {name}");
    }
    let resolved = std::fs::read_to_string(run_dir.join("config.resolved")).unwrap();
    assert!(resolved.contains("dataset.classes = 8"), "overrides land in config.resolved");
}

#[test]
fn gen_data_run_round_trip_through_a_dataset_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut cmd = bin();
    cmd.arg("gen-data").args(tiny_sets(dir.path()));
    run_ok(cmd);
    let data = dir.path().join("dataset.bctd");
    assert!(data.exists());

    // Re-run the scenario against the stored file instead of the generator.
    let mut cmd = bin();
    cmd.arg("run")
        .args(tiny_sets(dir.path()))
        .arg("--set")
        .arg(format!("dataset.file={}", data.display()));
    run_ok(cmd);
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [dir_a.path(), dir_b.path()] {
        let mut cmd = bin();
        cmd.arg("run").args(tiny_sets(dir));
        run_ok(cmd);
    }
    for name in ["report.csv", "report.md", "train.csv", "new.model"] {
        let a = std::fs::read(dir_a.path().join("open_class-mixbct-s42").join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join("open_class-mixbct-s42").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn config_file_is_read_and_flags_win_over_it() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("lab.conf");
    std::fs::write(&conf, "seed = 7\ndataset.classes = 9\n").unwrap();
    let mut cmd = bin();
    cmd.arg("run")
        .args(tiny_sets(dir.path()))
        .arg("--config")
        .arg(&conf)
        .arg("--seed")
        .arg("5");
    run_ok(cmd);
    // --set dataset.classes=8 (from tiny_sets) wins over the file's 9, and
    // --seed 5 wins over the file's 7.
    assert!(dir.path().join("open_class-mixbct-s5").exists());
    let resolved =
        std::fs::read_to_string(dir.path().join("open_class-mixbct-s5/config.resolved")).unwrap();
    assert!(resolved.contains("dataset.classes = 8"));
    assert!(resolved.contains("seed = 5"));
}

#[test]
fn ablate_alpha_emits_the_grid_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut cmd = bin();
    cmd.arg("ablate-alpha")
        .args(tiny_sets(dir.path()))
        .arg("--set")
        .arg("ablation.alphas=0,0.3")
        .arg("--set")
        .arg("eval.audit_trials=0")
        .arg("--set")
        .arg("eval.chance_permutations=0");
    run_ok(cmd);
    let csv = std::fs::read_to_string(dir.path().join("ablate-alpha-s42/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "header + nocompat + two alphas: {csv}");
    assert!(csv.contains("alpha-0.3,ok,"));
}

#[test]
fn eval_only_and_scatter_consume_stored_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cmd = bin();
    cmd.arg("run").args(tiny_sets(dir.path()));
    run_ok(cmd);
    let run_dir = dir.path().join("open_class-mixbct-s42");

    let mut cmd = bin();
    cmd.arg("gen-data").args(tiny_sets(dir.path()));
    run_ok(cmd);
    let data = dir.path().join("dataset.bctd");

    let eval_out = dir.path().join("eval");
    let mut cmd = bin();
    cmd.arg("eval-only")
        .args(tiny_sets(&eval_out))
        .arg("--old")
        .arg(run_dir.join("old.model"))
        .arg("--new")
        .arg(run_dir.join("new.model"))
        .arg("--data")
        .arg(&data);
    run_ok(cmd);
    assert!(eval_out.join("report.csv").exists());
    assert!(eval_out.join("report.md").exists());

    let scatter_out = dir.path().join("plot");
    let mut cmd = bin();
    cmd.arg("scatter")
        .args(tiny_sets(&scatter_out))
        .arg("--model")
        .arg(run_dir.join("new.model"))
        .arg("--data")
        .arg(&data);
    run_ok(cmd);
    let svg = std::fs::read_to_string(scatter_out.join("scatter.svg")).unwrap();
    assert!(svg.starts_with("<svg"), "scatter writes a standalone svg");
    assert_eq!(svg.matches("<circle").count(), 8 * 14, "one point per sample");
}

#[test]
fn exit_codes_follow_the_error_taxonomy() {
    // Unknown config key → 2.
    let dir = tempfile::tempdir().unwrap();
    let mut cmd = bin();
    cmd.arg("run").arg("--set").arg("no.such.key=1").arg("--out").arg(dir.path());
    let out = cmd.output().unwrap();
    assert_eq!(out.status.code(), Some(2), "config errors exit 2");

    // Unknown flag → clap's usage error, also 2.
    let mut cmd = bin();
    cmd.arg("run").arg("--bogus");
    let out = cmd.output().unwrap();
    assert_eq!(out.status.code(), Some(2), "usage errors exit 2");

    // Corrupt dataset file → 4.
    let bad = dir.path().join("bad.bctd");
    std::fs::write(&bad, b"not a dataset").unwrap();
    let mut cmd = bin();
    cmd.arg("scatter").args(tiny_sets(dir.path())).arg("--data").arg(&bad);
    let out = cmd.output().unwrap();
    assert_eq!(out.status.code(), Some(4), "corrupt files exit 4");

    // Missing model file → 4.
    let mut cmd = bin();
    cmd.arg("eval-only")
        .args(tiny_sets(dir.path()))
        .arg("--old")
        .arg(dir.path().join("absent.model"))
        .arg("--new")
        .arg(dir.path().join("absent.model"))
        .arg("--data")
        .arg(&bad);
    let out = cmd.output().unwrap();
    assert_eq!(out.status.code(), Some(4), "missing files exit 4");
}
