mod support;

use support::{ok, pgfn, run_pipeline, write_config, MICRO};

fn error_record(out: &std::process::Output) -> serde_json::Value {
    let line = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(line.lines().last().unwrap()).unwrap()
}

#[test]
fn pipeline_reports_every_target_and_method() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(dir.path());
    let out = pgfn(dir.path(), &["report", "out"]);
    assert!(out.status.success());
    let table = std::fs::read_to_string(dir.path().join("out/summary.tsv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 4, "{table}");
    for method in ["gflownet", "random"] {
        assert_eq!(rows.iter().filter(|r| r.split('\t').nth(2) == Some(method)).count(), 2);
    }
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("±"));

    let eval = dir.path().join("out/eval");
    let report = walk_json(&eval).into_iter().find(|p| p.ends_with("gflownet.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(m["mode"], "morph");
    assert_eq!(m["method"], "gflownet");
}

fn walk_json(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    support::snapshot(dir).into_keys().filter(|p| p.extension().is_some_and(|e| e == "json")).map(|p| dir.join(p)).collect()
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &format!("{MICRO}\n[sampler]\nwarmup = 3\n"));
    let out = pgfn(dir.path(), &["gen-synth", "run.conf"]);
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "config");
    assert!(rec["message"].as_str().unwrap().contains("warmup"));

    let out = pgfn(dir.path(), &["gen-synth", "absent.conf"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_and_mismatched_artifacts_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), MICRO);
    let out = pgfn(dir.path(), &["train-embedder", "run.conf"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["error"], "missing_artifact");

    ok(dir.path(), &["gen-synth", "run.conf"]);
    let ckpt = dir.path().join("out/embedder/gmc.ckpt");
    std::fs::create_dir_all(ckpt.parent().unwrap()).unwrap();
    std::fs::write(&ckpt, b"not a checkpoint").unwrap();
    let out = pgfn(dir.path(), &["train-sampler", "run.conf"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["error"], "version_mismatch");
}

#[test]
fn seed_env_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), MICRO);
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_pgfn"))
        .args(["gen-synth", "run.conf"])
        .current_dir(dir.path())
        .env("PGFN_SEED", "11")
        .output()
        .unwrap();
    assert!(out.status.success());
    let resolved = std::fs::read_to_string(dir.path().join("out/data/config.resolved")).unwrap();
    assert!(resolved.lines().any(|l| l == "seed = 11"), "{resolved}");
}

#[test]
fn unknown_method_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), MICRO);
    let out = pgfn(dir.path(), &["train-sampler", "run.conf", "--method", "ppo"]);
    assert_eq!(out.status.code(), Some(2));
}
