#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Seconds-scale pipeline: every stage runs, none of it learns much.
pub const MICRO: &str = "\
seed = 3
out_dir = out

[synth]
n = 240
targets = 2

[embedder]
hidden = 32
latent_dim = 16
epochs = 3
pair_budget = 2000

[sampler]
steps = 30
batch = 4
hidden = 16

[oracle]
epochs = 3

[eval]
methods = gflownet,random
calibration_samples = 500
";

pub fn pgfn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgfn"))
        .args(args)
        .current_dir(dir)
        .env_remove("PGFN_SEED")
        .output()
        .expect("spawn pgfn")
}

pub fn ok(dir: &Path, args: &[&str]) {
    let out = pgfn(dir, args);
    assert!(out.status.success(), "pgfn {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.conf");
    std::fs::write(&path, text).unwrap();
    path
}

/// Target ids in the order the targets file lists them.
pub fn target_ids(dir: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(dir.join("out/data/targets.tsv")).unwrap();
    text.lines().filter(|l| !l.starts_with('#')).map(|l| l.split('\t').next().unwrap().to_string()).collect()
}

/// Every stage, both methods, every target, MorphOnly conditioning.
pub fn run_pipeline(dir: &Path) {
    write_config(dir, MICRO);
    for stage in ["gen-synth", "train-embedder", "train-oracle"] {
        ok(dir, &[stage, "run.conf"]);
    }
    for t in target_ids(dir) {
        ok(dir, &["train-sampler", "run.conf", "--target", &t]);
        ok(dir, &["train-sampler", "run.conf", "--method", "random", "--target", &t]);
        ok(dir, &["evaluate", "run.conf", "--target", &t]);
    }
}

/// Relative path to contents for every file under `root`.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
