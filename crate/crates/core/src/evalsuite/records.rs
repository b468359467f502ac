//! Per-run sample logs.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::chemgraph::{canonical_hash, fingerprint, parse, serialize, ChemError, Fingerprint, FingerprintSpec, FragmentVocab, PartialMol};

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub step: usize,
    pub mol: PartialMol,
    pub hash: u64,
    pub raw_reward: f64,
    pub log_reward: f64,
}

/// Append-only log of terminal samples with a fingerprint per distinct molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub target_id: String,
    pub method: String,
    pub seed: u64,
    pub fp_spec: FingerprintSpec,
    records: Vec<SampleRecord>,
    fingerprints: HashMap<u64, Fingerprint>,
}

const LOG_HEADER: &str = "#pgfn-trajlog v1";

impl RunMetrics {
    pub fn new(target_id: impl Into<String>, method: impl Into<String>, seed: u64, fp_spec: FingerprintSpec) -> Self {
        RunMetrics {
            target_id: target_id.into(),
            method: method.into(),
            seed,
            fp_spec,
            records: Vec::new(),
            fingerprints: HashMap::new(),
        }
    }

    /// Appends a sample.
    ///
    /// # Panics
    /// If `step` is smaller than the previous record's step, or `mol` is empty.
    pub fn push(&mut self, step: usize, mol: PartialMol, raw_reward: f64, log_reward: f64) {
        if let Some(last) = self.records.last() {
            assert!(step >= last.step, "sample steps must be non-decreasing");
        }
        let hash = canonical_hash(&mol);
        if !self.fingerprints.contains_key(&hash) {
            let fp = fingerprint(&mol, self.fp_spec).expect("terminal molecules are non-empty");
            self.fingerprints.insert(hash, fp);
        }
        self.records.push(SampleRecord { step, mol, hash, raw_reward, log_reward });
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn fingerprint(&self, rec: &SampleRecord) -> &Fingerprint {
        &self.fingerprints[&rec.hash]
    }

    pub fn fingerprint_of(&self, hash: u64) -> Option<&Fingerprint> {
        self.fingerprints.get(&hash)
    }

    /// Records with `step >= from`.
    pub fn since_step(&self, from: usize) -> &[SampleRecord] {
        let i = self.records.partition_point(|r| r.step < from);
        &self.records[i..]
    }

    /// Copy restricted to records with `step < until`.
    pub fn truncated(&self, until: usize) -> RunMetrics {
        let mut out = RunMetrics::new(&self.target_id, &self.method, self.seed, self.fp_spec);
        let end = self.records.partition_point(|r| r.step < until);
        for r in &self.records[..end] {
            out.push(r.step, r.mol.clone(), r.raw_reward, r.log_reward);
        }
        out
    }

    /// Trajectory log: one tab-separated line per sample,
    /// `targetId method step molecule raw log`.
    pub fn to_log(&self) -> String {
        let mut out = format!("{LOG_HEADER} seed={}\n", self.seed);
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                self.target_id,
                self.method,
                r.step,
                serialize(&r.mol),
                r.raw_reward,
                r.log_reward
            );
        }
        out
    }

    pub fn from_log(text: &str, vocab: &FragmentVocab, fp_spec: FingerprintSpec) -> Result<Self, ChemError> {
        let bad = |m: String| ChemError::SyntaxError(m);
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let seed = header
            .strip_prefix(LOG_HEADER)
            .and_then(|r| r.trim().strip_prefix("seed="))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("bad trajectory log header `{header}`")))?;
        let mut out: Option<RunMetrics> = None;
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(bad(format!("log line {}: expected 6 fields", i + 2)));
            }
            let m = out.get_or_insert_with(|| RunMetrics::new(f[0], f[1], seed, fp_spec));
            if m.target_id != f[0] || m.method != f[1] {
                return Err(bad(format!("log line {}: mixed runs", i + 2)));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number `{s}`")));
            let step = f[2].parse().map_err(|_| bad(format!("bad step `{}`", f[2])))?;
            if m.records.last().is_some_and(|r| r.step > step) {
                return Err(bad(format!("log line {}: step goes backwards", i + 2)));
            }
            let mol = parse(f[3], vocab)?;
            if mol.is_empty() {
                return Err(ChemError::EmptyMolecule);
            }
            m.push(step, mol, num(f[4])?, num(f[5])?);
        }
        out.ok_or_else(|| bad("empty trajectory log".into()))
    }
}
