//! Sample-log metrics: threshold calibration, modes, diversity, target
//! recovery, oracle hit counts and the JSON summary.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{EvalError, RunMetrics, SampleRecord};
use crate::chemgraph::{tanimoto, Fingerprint};
use crate::oracle::OracleModel;
use crate::reward::ConditioningMode;

pub const DEFAULT_CUTOFF: f64 = 0.3;
pub const DEFAULT_PERCENTILE: f64 = 0.9;

/// Tanimoto within one log, where every fingerprint shares the log's spec.
fn sim(a: &Fingerprint, b: &Fingerprint) -> f64 {
    tanimoto(a, b).expect("fingerprints of one log share a length")
}

/// The ⌈p·n⌉-th smallest value (1-based, clamped to [1, n]).
pub fn nearest_rank_percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[rank - 1])
}

/// 90th-percentile raw reward of a random-policy log.
pub fn calibrate_threshold(random: &RunMetrics) -> Result<f64, EvalError> {
    const NEED: usize = 100;
    if random.len() < NEED {
        return Err(EvalError::TooFewSamples { need: NEED, have: random.len() });
    }
    let r: Vec<f64> = random.records().iter().map(|r| r.raw_reward).collect();
    Ok(nearest_rank_percentile(&r, DEFAULT_PERCENTILE).expect("non-empty"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    /// Index into the sample log.
    pub index: usize,
    pub step: usize,
    pub raw_reward: f64,
    pub fingerprint: Fingerprint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub threshold: f64,
    pub cutoff: f64,
    pub modes: Vec<Mode>,
    /// `(step, modes found up to and including step)` for every step in the log.
    pub curve: Vec<(usize, usize)>,
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Modes found with `step < until`.
    pub fn count_before(&self, until: usize) -> usize {
        self.modes.iter().filter(|m| m.step < until).count()
    }
}

/// Greedy scan in log order: a sample becomes a mode when its reward reaches
/// `threshold` and its Tanimoto similarity to every accepted mode is at most
/// `cutoff`.
pub fn count_modes(samples: &RunMetrics, threshold: f64, cutoff: f64) -> ModeSet {
    let mut modes: Vec<Mode> = Vec::new();
    let mut curve: Vec<(usize, usize)> = Vec::new();
    // Repeats of an already judged molecule can never be accepted: either it
    // is itself a mode (similarity 1) or it was already too close to one.
    let mut judged: HashSet<u64> = HashSet::new();
    for (i, r) in samples.records().iter().enumerate() {
        if r.raw_reward >= threshold && judged.insert(r.hash) {
            let fp = samples.fingerprint(r);
            if modes.iter().all(|m| sim(fp, &m.fingerprint) <= cutoff) {
                modes.push(Mode { index: i, step: r.step, raw_reward: r.raw_reward, fingerprint: fp.clone() });
            }
        }
        match curve.last_mut() {
            Some((s, c)) if *s == r.step => *c = modes.len(),
            _ => curve.push((r.step, modes.len())),
        }
    }
    ModeSet { threshold, cutoff, modes, curve }
}

/// Indices of the `k` highest raw rewards; ties keep log order.
pub fn top_k_indices(samples: &RunMetrics, k: usize) -> Vec<usize> {
    let recs = samples.records();
    let mut idx: Vec<usize> = (0..recs.len()).collect();
    idx.sort_by(|&a, &b| recs[b].raw_reward.total_cmp(&recs[a].raw_reward));
    idx.truncate(k);
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        Some(Summary { count: n, mean, median, min: v[0], max: v[n - 1] })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diversity {
    /// Pairwise similarities in `(i, j)`, `i < j` order over the top-k list.
    pub similarities: Vec<f64>,
    pub summary: Summary,
}

/// Pairwise Tanimoto similarities among the top-`k` samples by reward.
pub fn topk_diversity(samples: &RunMetrics, k: usize) -> Result<Diversity, EvalError> {
    if k < 2 || samples.len() < k {
        return Err(EvalError::TooFewSamples { need: k.max(2), have: samples.len() });
    }
    let fps: Vec<&Fingerprint> =
        top_k_indices(samples, k).into_iter().map(|i| samples.fingerprint(&samples.records()[i])).collect();
    let mut sims = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            sims.push(sim(fps[i], fps[j]));
        }
    }
    let summary = Summary::of(&sims).expect("k ≥ 2");
    Ok(Diversity { similarities: sims, summary })
}

/// Max Tanimoto between `target` and the last `window` samples (0 for an
/// empty log).
pub fn max_sim_to_target(samples: &RunMetrics, target: &Fingerprint, window: usize) -> Result<f64, EvalError> {
    let recs = samples.records();
    let start = recs.len().saturating_sub(window);
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut best = 0.0f64;
    for r in &recs[start..] {
        let s = match cache.get(&r.hash) {
            Some(&s) => s,
            None => {
                let s = tanimoto(samples.fingerprint(r), target)?;
                cache.insert(r.hash, s);
                s
            }
        };
        best = best.max(s);
    }
    Ok(best)
}

/// `(hits among the top-k by reward, hits among the first k modes)` where a
/// hit has predicted probability ≥ `threshold` for `assay`.
pub fn assay_hit_counts(
    samples: &RunMetrics,
    modes: &ModeSet,
    oracle: &OracleModel,
    assay: &str,
    threshold: f64,
    k: usize,
) -> Result<(usize, usize), EvalError> {
    if samples.len() < k {
        return Err(EvalError::TooFewSamples { need: k, have: samples.len() });
    }
    let a = oracle.assay_index(assay).ok_or_else(|| EvalError::Other(format!("oracle has no assay `{assay}`")))?;
    let hit = |fp: &Fingerprint| -> Result<bool, EvalError> {
        let p = oracle.predict(fp).map_err(|e| EvalError::Other(e.to_string()))?;
        Ok(p[a] >= threshold)
    };
    let mut top = 0;
    for i in top_k_indices(samples, k) {
        top += hit(samples.fingerprint(&samples.records()[i]))? as usize;
    }
    let mut by_mode = 0;
    for m in modes.modes.iter().take(k) {
        by_mode += hit(&m.fingerprint)? as usize;
    }
    Ok((top, by_mode))
}

/// Top-`k` samples by reward as `id, reward, tanimoto_to_target, fp_hex`
/// rows (tab-separated, with a header).
pub fn export_projection(samples: &RunMetrics, target: Option<&Fingerprint>, k: usize) -> Result<String, EvalError> {
    let mut out = String::from("id\traw_reward\ttanimoto_to_target\tfingerprint\n");
    for i in top_k_indices(samples, k) {
        let r = &samples.records()[i];
        let fp = samples.fingerprint(r);
        let sim = match target {
            Some(t) => tanimoto(fp, t)?,
            None => f64::NAN,
        };
        let _ = writeln!(out, "s{i}\t{}\t{sim}\t{}", r.raw_reward, fp.to_hex());
    }
    Ok(out)
}

/// One parsed row of [`export_projection`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRow {
    pub id: String,
    pub raw_reward: f64,
    pub tanimoto_to_target: f64,
    pub fingerprint: Fingerprint,
}

pub fn parse_projection(text: &str, bits: usize) -> Result<Vec<ProjectionRow>, EvalError> {
    let bad = |l: &str| EvalError::Other(format!("bad projection row `{l}`"));
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            if c.len() != 4 {
                return Err(bad(l));
            }
            Ok(ProjectionRow {
                id: c[0].to_string(),
                raw_reward: c[1].parse().map_err(|_| bad(l))?,
                tanimoto_to_target: c[2].parse().map_err(|_| bad(l))?,
                fingerprint: Fingerprint::from_hex(c[3], bits)?,
            })
        })
        .collect()
}

/// Counts of raw rewards in `bins` equal-width bins over `[lo, hi]`; values
/// outside the range land in the end bins.
pub fn reward_histogram(samples: &RunMetrics, lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    if bins == 0 || !(hi > lo) {
        return counts;
    }
    let width = (hi - lo) / bins as f64;
    for r in samples.records() {
        let b = ((r.raw_reward - lo) / width).floor();
        counts[(b.max(0.0) as usize).min(bins - 1)] += 1;
    }
    counts
}

pub fn histogram_tsv(counts: &[usize], lo: f64, hi: f64) -> String {
    let width = (hi - lo) / counts.len().max(1) as f64;
    let mut out = String::from("bin_lo\tbin_hi\tcount\n");
    for (i, c) in counts.iter().enumerate() {
        let a = lo + i as f64 * width;
        let _ = writeln!(out, "{a}\t{}\t{c}", a + width);
    }
    out
}

pub fn curve_tsv(curve: &[(usize, usize)]) -> String {
    let mut out = String::from("step\tmodes\n");
    for (s, c) in curve {
        let _ = writeln!(out, "{s}\t{c}");
    }
    out
}

pub fn similarities_tsv(d: &Diversity) -> String {
    let mut out = String::from("tanimoto\n");
    for s in &d.similarities {
        let _ = writeln!(out, "{s}");
    }
    out
}

/// Machine-readable evaluation of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub target_id: String,
    pub mode: String,
    pub method: String,
    pub seed: u64,
    pub num_samples: usize,
    pub distinct_molecules: usize,
    pub threshold: f64,
    pub cutoff: f64,
    pub num_modes: usize,
    /// `(step, cumulative modes)`, thinned to at most 200 points.
    pub mode_curve: Vec<(usize, usize)>,
    pub mean_raw_reward: f64,
    pub max_raw_reward: f64,
    pub topk: usize,
    pub topk_similarity: Option<Summary>,
    pub max_sim_to_target: Option<f64>,
    pub window: usize,
    pub assay_hits: Vec<AssayHits>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssayHits {
    pub assay: String,
    pub top_k: usize,
    pub modes: usize,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub struct ReportOptions<'a> {
    pub mode: ConditioningMode,
    pub threshold: f64,
    pub cutoff: f64,
    pub topk: usize,
    pub window: usize,
    pub target: Option<&'a Fingerprint>,
    pub oracle: Option<&'a OracleModel>,
    pub hit_threshold: f64,
    pub hit_k: usize,
}

pub fn build_report(samples: &RunMetrics, opts: &ReportOptions<'_>) -> Result<MetricsReport, EvalError> {
    let modes = count_modes(samples, opts.threshold, opts.cutoff);
    let recs: &[SampleRecord] = samples.records();
    let n = recs.len();
    let stride = modes.curve.len().div_ceil(200).max(1);
    let mut curve: Vec<(usize, usize)> = modes.curve.iter().copied().step_by(stride).collect();
    if let Some(&last) = modes.curve.last() {
        if curve.last() != Some(&last) {
            curve.push(last);
        }
    }
    let topk_similarity = match topk_diversity(samples, opts.topk) {
        Ok(d) => Some(d.summary),
        Err(EvalError::TooFewSamples { .. }) => None,
        Err(e) => return Err(e),
    };
    let mut assay_hits = Vec::new();
    if let Some(o) = opts.oracle {
        let k = opts.hit_k.min(n);
        for a in &o.assays {
            let (top_k, by_mode) = assay_hit_counts(samples, &modes, o, a, opts.hit_threshold, k)?;
            assay_hits.push(AssayHits { assay: a.clone(), top_k, modes: by_mode });
        }
    }
    let mut distinct: Vec<u64> = recs.iter().map(|r| r.hash).collect();
    distinct.sort_unstable();
    distinct.dedup();
    Ok(MetricsReport {
        target_id: samples.target_id.clone(),
        mode: opts.mode.as_str().to_string(),
        method: samples.method.clone(),
        seed: samples.seed,
        num_samples: n,
        distinct_molecules: distinct.len(),
        threshold: opts.threshold,
        cutoff: opts.cutoff,
        num_modes: modes.len(),
        mode_curve: curve,
        mean_raw_reward: if n == 0 { 0.0 } else { recs.iter().map(|r| r.raw_reward).sum::<f64>() / n as f64 },
        max_raw_reward: recs.iter().map(|r| r.raw_reward).fold(0.0, f64::max),
        topk: opts.topk,
        topk_similarity,
        max_sim_to_target: opts.target.map(|t| max_sim_to_target(samples, t, opts.window)).transpose()?,
        window: opts.window,
        assay_hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemgraph::{FingerprintSpec, FragmentVocab, PartialMol};
    use crate::env::{Action, Env, EnvConfig, State};
    use std::sync::Arc;

    #[test]
    fn nearest_rank_examples() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank_percentile(&v, 0.9), Some(9.0));
        assert_eq!(nearest_rank_percentile(&[2.5; 7], 0.9), Some(2.5));
        let v99: Vec<f64> = (1..=99).map(f64::from).collect();
        let v100: Vec<f64> = (1..=100).map(f64::from).collect();
        // ⌈89.1⌉ = 90 and ⌈90⌉ = 90.
        assert_eq!(nearest_rank_percentile(&v99, 0.9), Some(90.0));
        assert_eq!(nearest_rank_percentile(&v100, 0.9), Some(90.0));
    }

    fn chain(env: &Env, frags: &[usize]) -> PartialMol {
        let mut s = env.step(&State::initial(), Action::AddRoot(frags[0])).unwrap();
        for &f in &frags[1..] {
            let stem = s.mol.open_stems(env.vocab()).len() - 1;
            s = env.step(&s, Action::Attach { stem, frag: f }).unwrap();
        }
        s.mol
    }

    #[test]
    fn threshold_needs_a_hundred_samples() {
        let vocab = FragmentVocab::generated("m", 4, &[2]).unwrap();
        let env = Env::new(Arc::new(vocab), EnvConfig::default()).unwrap();
        let mut log = RunMetrics::new("t", "random", 0, FingerprintSpec::default());
        for i in 0..99 {
            log.push(i, chain(&env, &[0]), 1.0, 0.0);
        }
        assert!(matches!(calibrate_threshold(&log), Err(EvalError::TooFewSamples { need: 100, have: 99 })));
        log.push(99, chain(&env, &[1]), 1.0, 0.0);
        assert_eq!(calibrate_threshold(&log).unwrap(), 1.0);
    }

    #[test]
    fn histogram_clamps_to_end_bins() {
        let vocab = FragmentVocab::generated("m", 4, &[2]).unwrap();
        let env = Env::new(Arc::new(vocab), EnvConfig::default()).unwrap();
        let mut log = RunMetrics::new("t", "random", 0, FingerprintSpec::default());
        for (i, r) in [0.1, 0.5, 0.74, 0.75, 1.49, 1.5, 9.0].into_iter().enumerate() {
            log.push(i, chain(&env, &[0]), r, 0.0);
        }
        assert_eq!(reward_histogram(&log, 0.5, 1.5, 4), vec![3, 1, 0, 3]);
        let tsv = histogram_tsv(&[3, 1], 0.0, 1.0);
        assert_eq!(tsv, "bin_lo\tbin_hi\tcount\n0\t0.5\t3\n0.5\t1\t1\n");
    }

    #[test]
    fn identical_samples_give_one_mode() {
        let vocab = FragmentVocab::generated("m", 4, &[2]).unwrap();
        let env = Env::new(Arc::new(vocab), EnvConfig::default()).unwrap();
        let mut log = RunMetrics::new("t", "gfn", 0, FingerprintSpec::default());
        for i in 0..20 {
            log.push(i / 4, chain(&env, &[0, 1, 2]), 1.2, 0.0);
        }
        let m = count_modes(&log, 1.0, 0.3);
        assert_eq!(m.len(), 1);
        assert_eq!(m.curve, vec![(0, 1), (1, 1), (2, 1), (3, 1), (4, 1)]);
        let d = topk_diversity(&log, 5).unwrap();
        assert!(d.similarities.iter().all(|&s| s == 1.0));
        assert_eq!(topk_diversity(&log, 2).unwrap().similarities.len(), 1);
    }

    #[test]
    fn window_excludes_early_match() {
        let vocab = FragmentVocab::generated("m", 4, &[2]).unwrap();
        let env = Env::new(Arc::new(vocab), EnvConfig::default()).unwrap();
        let target = chain(&env, &[0, 1, 2]);
        let tfp = crate::chemgraph::fingerprint(&target, FingerprintSpec::default()).unwrap();
        let mut log = RunMetrics::new("t", "gfn", 0, FingerprintSpec::default());
        log.push(0, target.clone(), 1.0, 0.0);
        for i in 1..5 {
            log.push(i, chain(&env, &[3, 3]), 1.0, 0.0);
        }
        assert_eq!(max_sim_to_target(&log, &tfp, 10).unwrap(), 1.0);
        assert!(max_sim_to_target(&log, &tfp, 4).unwrap() < 1.0);
    }

    #[test]
    fn projection_round_trips() {
        let vocab = FragmentVocab::generated("m", 4, &[2]).unwrap();
        let env = Env::new(Arc::new(vocab), EnvConfig::default()).unwrap();
        let mut log = RunMetrics::new("t", "gfn", 0, FingerprintSpec::default());
        for (i, f) in [[0, 1], [2, 3], [1, 1]].iter().enumerate() {
            log.push(i, chain(&env, f), 1.0 + i as f64 / 10.0, 0.0);
        }
        let tfp = log.fingerprint(&log.records()[0]).clone();
        let text = export_projection(&log, Some(&tfp), 10).unwrap();
        let rows = parse_projection(&text, 2048).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].id, "s2");
        assert_eq!(rows[2].tanimoto_to_target, 1.0);
        assert_eq!(&rows[2].fingerprint, log.fingerprint(&log.records()[0]));
        assert_eq!(parse_projection(&export_projection(&log, None, 2).unwrap(), 2048).unwrap().len(), 2);
    }
}
