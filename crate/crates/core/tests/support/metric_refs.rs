//! Quadratic and brute-force references for the evaluation metrics.

use std::sync::Arc;

use pgfn_core::baselines::random_trajectory;
use pgfn_core::chemgraph::{fingerprint, Fingerprint, FingerprintSpec, FragmentVocab, PartialMol};
use pgfn_core::env::{Env, EnvConfig};
use pgfn_core::evalsuite::{average_precision, count_modes, max_sim_to_target, topk_diversity, RunMetrics};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const N: usize = 1000;

fn ref_tanimoto(a: &Fingerprint, b: &Fingerprint) -> f64 {
    let (a, b) = (a.to_dense(), b.to_dense());
    let inter = a.iter().zip(&b).filter(|(x, y)| **x > 0.5 && **y > 0.5).count();
    let union = a.iter().zip(&b).filter(|(x, y)| **x > 0.5 || **y > 0.5).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn env() -> Env {
    let vocab = FragmentVocab::generated("m", 5, &[1, 2, 3]).unwrap();
    Env::new(Arc::new(vocab), EnvConfig { max_nodes: 5, min_nodes: 1 }).unwrap()
}

fn random_mol(env: &Env, rng: &mut ChaCha8Rng) -> PartialMol {
    random_trajectory(env, rng).unwrap().terminal_mol().clone()
}

/// Small molecules over a small vocabulary so the log has plenty of repeats,
/// rewards on a coarse grid so it has plenty of ties.
fn random_log(seed: u64) -> RunMetrics {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let env = env();
    let spec = FingerprintSpec { bits: 64, radius: 1 };
    let mut log = RunMetrics::new("t", "random", seed, spec);
    for i in 0..N {
        let mol = random_mol(&env, &mut rng);
        let r = rng.random_range(0..40) as f64 / 40.0 + 0.5;
        log.push(i / 8, mol, r, r.ln());
    }
    log
}

fn ref_modes(log: &RunMetrics, threshold: f64, cutoff: f64) -> Vec<usize> {
    let recs = log.records();
    let mut modes: Vec<usize> = Vec::new();
    for i in 0..recs.len() {
        if recs[i].raw_reward < threshold {
            continue;
        }
        let fi = log.fingerprint(&recs[i]);
        if modes.iter().all(|&m| ref_tanimoto(fi, log.fingerprint(&recs[m])) <= cutoff) {
            modes.push(i);
        }
    }
    modes
}

fn ref_top_k(log: &RunMetrics, k: usize) -> Vec<usize> {
    let recs = log.records();
    let mut taken = vec![false; recs.len()];
    let mut out = Vec::new();
    for _ in 0..k.min(recs.len()) {
        let mut best: Option<usize> = None;
        for i in 0..recs.len() {
            if !taken[i] && best.is_none_or(|b| recs[i].raw_reward > recs[b].raw_reward) {
                best = Some(i);
            }
        }
        taken[best.unwrap()] = true;
        out.push(best.unwrap());
    }
    out
}

fn ref_average_precision(scores: &[f64], labels: &[bool]) -> f64 {
    let n = scores.len();
    let rank = |i: usize| 1 + (0..n).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i)).count();
    let ranks: Vec<usize> = (0..n).map(rank).collect();
    let positives = labels.iter().filter(|&&y| y).count();
    let mut total = 0.0;
    for r in 1..=n {
        let i = (0..n).find(|&i| ranks[i] == r).unwrap();
        if labels[i] {
            let hits = (0..n).filter(|&j| labels[j] && ranks[j] <= r).count();
            total += hits as f64 / r as f64;
        }
    }
    total / positives as f64
}

pub fn count_modes_matches_quadratic_scan() {
    for seed in 0..5 {
        let log = random_log(seed);
        for &(threshold, cutoff) in &[(1.2, 0.3), (0.9, 0.5), (1.4, 0.0), (0.5, 0.8)] {
            let fast = count_modes(&log, threshold, cutoff);
            let slow = ref_modes(&log, threshold, cutoff);
            let got: Vec<usize> = fast.modes.iter().map(|m| m.index).collect();
            assert_eq!(got, slow, "seed {seed} threshold {threshold} cutoff {cutoff}");
            let last_step = log.records().last().unwrap().step;
            assert_eq!(fast.curve.last().unwrap(), &(last_step, slow.len()));
            for &(step, c) in &fast.curve {
                let expect = slow.iter().filter(|&&i| log.records()[i].step <= step).count();
                assert_eq!(c, expect);
            }
        }
    }
}

pub fn topk_diversity_matches_brute_force() {
    for seed in 0..5 {
        let log = random_log(100 + seed);
        for k in [2, 10, 100] {
            let d = topk_diversity(&log, k).unwrap();
            let top = ref_top_k(&log, k);
            let mut want = Vec::new();
            for i in 0..k {
                for j in i + 1..k {
                    let a = log.fingerprint(&log.records()[top[i]]);
                    let b = log.fingerprint(&log.records()[top[j]]);
                    want.push(ref_tanimoto(a, b));
                }
            }
            assert_eq!(d.similarities, want, "seed {seed} k {k}");
            let mean = want.iter().sum::<f64>() / want.len() as f64;
            assert_eq!(d.summary.mean, mean);
            assert_eq!(d.summary.max, want.iter().cloned().fold(f64::MIN, f64::max));
        }
    }
}

pub fn max_sim_to_target_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..5 {
        let log = random_log(200 + seed);
        let target_mol = random_mol(&env(), &mut rng);
        let target = fingerprint(&target_mol, log.fp_spec).unwrap();
        for window in [1, 37, 500, N, 5 * N] {
            let start = N.saturating_sub(window);
            let want = log.records()[start..]
                .iter()
                .map(|r| ref_tanimoto(log.fingerprint(r), &target))
                .fold(0.0, f64::max);
            assert_eq!(max_sim_to_target(&log, &target, window).unwrap(), want, "seed {seed} window {window}");
        }
    }
}

pub fn average_precision_matches_brute_force() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        // Coarse scores force ties.
        let scores: Vec<f64> = (0..N).map(|_| rng.random_range(0..50) as f64 / 50.0).collect();
        let labels: Vec<bool> = (0..N).map(|_| rng.random_bool(0.2)).collect();
        assert_eq!(average_precision(&scores, &labels).unwrap(), ref_average_precision(&scores, &labels));
    }
}

pub fn perfect_ranking_has_unit_precision() {
    let scores = [0.9, 0.8, 0.1, 0.0];
    let labels = [true, true, false, false];
    assert_eq!(average_precision(&scores, &labels).unwrap(), 1.0);
    assert!((average_precision(&scores, &[false, false, true, true]).unwrap() - (1.0 / 3.0 + 2.0 / 4.0) / 2.0).abs() < 1e-15);
}
