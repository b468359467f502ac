//! Datasets of (structure, morphology, assay labels) records, splits, target
//! selection and the synthetic benchmark generator.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use pgfn_tensor::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::chemgraph::{
    canonical_hash, fingerprint, parse, serialize, ChemError, Fingerprint, FingerprintSpec, FragmentVocab, PartialMol,
};
use crate::env::{Env, State};
use crate::reward::ConditioningMode;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("syntax error: {0}")]
    SyntaxError(String),
    #[error("record `{id}` has {got} features, expected {want}")]
    InconsistentFeatureLength { id: String, got: usize, want: usize },
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("split fractions must be non-negative and sum to 1")]
    BadFractions,
    #[error("only {found} distinct molecules after {attempts} rollouts (wanted {wanted})")]
    VocabTooSmall { found: usize, wanted: usize, attempts: usize },
    #[error("not decomposable: {0}")]
    NotDecomposable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

impl From<ChemError> for DataError {
    fn from(e: ChemError) -> Self {
        match e {
            ChemError::VocabMismatch(m) => DataError::VocabMismatch(m),
            other => DataError::SyntaxError(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Structure {
    Assembly(PartialMol),
    /// Precomputed fingerprint for externally supplied structures.
    Fingerprint(Fingerprint),
}

impl Structure {
    pub fn fingerprint(&self, spec: FingerprintSpec) -> Result<Fingerprint> {
        match self {
            Structure::Assembly(m) => Ok(fingerprint(m, spec)?),
            Structure::Fingerprint(fp) if fp.len() == spec.bits => Ok(fp.clone()),
            Structure::Fingerprint(fp) => Err(DataError::SyntaxError(format!(
                "fingerprint has {} bits, expected {}",
                fp.len(),
                spec.bits
            ))),
        }
    }

    pub fn molecule(&self) -> Option<&PartialMol> {
        match self {
            Structure::Assembly(m) => Some(m),
            Structure::Fingerprint(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataRecord {
    pub id: String,
    pub structure: Structure,
    pub morph: Vec<f64>,
    pub assays: Vec<(String, bool)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feat_dim: usize,
    pub records: Vec<DataRecord>,
}

const DATA_HEADER: &str = "#pgfn-data v1";

fn syntax(m: impl Into<String>) -> DataError {
    DataError::SyntaxError(m.into())
}

impl Dataset {
    pub fn new(feat_dim: usize) -> Self {
        Dataset { feat_dim, records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, r: DataRecord) -> Result<()> {
        if r.morph.len() != self.feat_dim {
            return Err(DataError::InconsistentFeatureLength { id: r.id, got: r.morph.len(), want: self.feat_dim });
        }
        self.records.push(r);
        Ok(())
    }

    pub fn fingerprints(&self, spec: FingerprintSpec) -> Result<Vec<Fingerprint>> {
        self.records.iter().map(|r| r.structure.fingerprint(spec)).collect()
    }

    pub fn morphology(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.morph.clone()).collect()
    }

    /// Assay ids in first-seen order.
    pub fn assay_ids(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        for r in &self.records {
            for (a, _) in &r.assays {
                if !seen.contains(a) {
                    seen.push(a.clone());
                }
            }
        }
        seen
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{DATA_HEADER} F={}\n", self.feat_dim);
        for r in &self.records {
            out.push_str(&r.id);
            match &r.structure {
                Structure::Assembly(m) => {
                    let _ = write!(out, "\tmol={}", serialize(m));
                }
                Structure::Fingerprint(fp) => {
                    let _ = write!(out, "\tfp={}", fp.to_hex());
                }
            }
            for x in &r.morph {
                let _ = write!(out, "\t{x}");
            }
            for (a, y) in &r.assays {
                let _ = write!(out, "\tassay:{a}={}", *y as u8);
            }
            out.push('\n');
        }
        out
    }

    /// Parses the dataset format. Assembly structures need `vocab`.
    pub fn parse(text: &str, vocab: Option<&FragmentVocab>) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| syntax("empty dataset file"))?;
        let feat_dim: usize = header
            .strip_prefix(DATA_HEADER)
            .and_then(|r| r.trim().strip_prefix("F="))
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| syntax(format!("bad dataset header `{header}`")))?;
        let mut ds = Dataset::new(feat_dim);
        let mut ids = HashSet::new();
        for (lineno, line) in lines.enumerate().map(|(i, l)| (i + 2, l)) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let id = cols[0].to_string();
            if id.is_empty() || !ids.insert(id.clone()) {
                return Err(syntax(format!("line {lineno}: missing or duplicate id")));
            }
            let structural = cols[1..].iter().take_while(|c| c.starts_with("mol=") || c.starts_with("fp=")).count();
            if structural != 1 {
                return Err(syntax(format!("line {lineno}: need exactly one of mol= / fp=, found {structural}")));
            }
            let structure = if let Some(s) = cols[1].strip_prefix("mol=") {
                let vocab = vocab.ok_or_else(|| DataError::VocabMismatch("assembly records need a vocabulary".into()))?;
                Structure::Assembly(parse(s, vocab)?)
            } else {
                let hex = &cols[1]["fp=".len()..];
                Structure::Fingerprint(Fingerprint::from_hex(hex, hex.len() * 4)?)
            };
            let mut morph = Vec::new();
            let mut assays = Vec::new();
            for c in &cols[2..] {
                if let Some(rest) = c.strip_prefix("assay:") {
                    let (a, y) = rest.split_once('=').ok_or_else(|| syntax(format!("line {lineno}: bad `{c}`")))?;
                    let y = match y {
                        "0" => false,
                        "1" => true,
                        _ => return Err(syntax(format!("line {lineno}: assay label must be 0 or 1"))),
                    };
                    assays.push((a.to_string(), y));
                } else if !assays.is_empty() {
                    return Err(syntax(format!("line {lineno}: feature after assay columns")));
                } else if c.starts_with("mol=") || c.starts_with("fp=") {
                    return Err(syntax(format!("line {lineno}: more than one structure column")));
                } else {
                    morph.push(c.parse::<f64>().map_err(|_| syntax(format!("line {lineno}: bad feature `{c}`")))?);
                }
            }
            ds.push(DataRecord { id, structure, morph, assays })?;
        }
        Ok(ds)
    }

    pub fn load(path: &Path, vocab: Option<&FragmentVocab>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset { feat_dim: self.feat_dim, records: idx.iter().map(|&i| self.records[i].clone()).collect() }
    }

    /// Seeded shuffle into train/val/test. Train and validation sizes are
    /// rounded; the test split takes the rest.
    pub fn split(&self, fractions: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
        let (a, b, c) = fractions;
        if a < 0.0 || b < 0.0 || c < 0.0 || ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(DataError::BadFractions);
        }
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((a * n as f64).round() as usize).min(n);
        let n_val = ((b * n as f64).round() as usize).min(n - n_train);
        Ok((
            self.subset(&idx[..n_train]),
            self.subset(&idx[n_train..n_train + n_val]),
            self.subset(&idx[n_train + n_val..]),
        ))
    }
}

const LABELS_HEADER: &str = "#pgfn-labels v1";

/// `(molecule id, assay id, active)` triples.
pub type Label = (String, String, bool);

/// Label file: `moleculeId assayId 0|1`, one observation per line.
pub fn labels_to_text(dataset: &Dataset) -> String {
    let mut out = format!("{LABELS_HEADER}\n");
    for r in &dataset.records {
        for (a, y) in &r.assays {
            let _ = writeln!(out, "{}\t{a}\t{}", r.id, u8::from(*y));
        }
    }
    out
}

pub fn parse_labels(text: &str) -> Result<Vec<Label>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == LABELS_HEADER => {}
        other => return Err(syntax(format!("bad labels header `{}`", other.unwrap_or("")))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            match c.as_slice() {
                [id, a, "0"] => Ok((id.to_string(), a.to_string(), false)),
                [id, a, "1"] => Ok((id.to_string(), a.to_string(), true)),
                _ => Err(syntax(format!("bad label line `{l}`"))),
            }
        })
        .collect()
}

impl Dataset {
    /// Merges labels into matching records, replacing any earlier label for
    /// the same assay. Returns how many labels matched no record.
    pub fn apply_labels(&mut self, labels: &[Label]) -> usize {
        let index: std::collections::HashMap<&str, usize> =
            self.records.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
        let mut updates: Vec<(usize, &str, bool)> = Vec::new();
        let mut unmatched = 0;
        for (id, a, y) in labels {
            match index.get(id.as_str()) {
                Some(&i) => updates.push((i, a, *y)),
                None => unmatched += 1,
            }
        }
        for (i, a, y) in updates {
            let assays = &mut self.records[i].assays;
            match assays.iter_mut().find(|(x, _)| x == a) {
                Some(slot) => slot.1 = y,
                None => assays.push((a.to_string(), y)),
            }
        }
        unmatched
    }
}

/// Per-feature mean and standard deviation from a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Features with zero variance keep unit scale (they standardize to 0).
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let f = rows.first()?.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; f];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; f];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m) / n;
            }
        }
        let std = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Some(FeatureStats { mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| (x - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub vocab_size: usize,
    pub arities: Vec<usize>,
    pub feat_dim: usize,
    pub n: usize,
    pub noise: f64,
    pub seed: u64,
    pub n_assays: usize,
    pub fp: FingerprintSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_size: 12,
            arities: vec![1, 2, 3, 2],
            feat_dim: 32,
            n: 2000,
            noise: 0.1,
            seed: 0,
            n_assays: 4,
            fp: FingerprintSpec::default(),
        }
    }
}

impl SynthConfig {
    pub fn vocab(&self) -> std::result::Result<FragmentVocab, ChemError> {
        FragmentVocab::generated(format!("synth{}", self.vocab_size), self.vocab_size, &self.arities)
    }
}

/// Hidden ground truth of a synthetic dataset: `y = tanh(G·φ(x)) + noise`,
/// assay `a` is positive iff `w_a · tanh(G·φ(x)) > t_a`.
#[derive(Debug, Clone)]
pub struct SynthTruth {
    pub g: Tensor,
    pub assay_weights: Vec<Vec<f64>>,
    pub assay_thresholds: Vec<f64>,
    pub fp: FingerprintSpec,
}

impl SynthTruth {
    pub fn morphology_clean(&self, fp: &Fingerprint) -> Vec<f64> {
        (0..self.g.rows())
            .map(|r| {
                let row = self.g.row(r);
                fp.active().iter().map(|&i| row[i]).sum::<f64>().tanh()
            })
            .collect()
    }

    pub fn assay_scores(&self, clean: &[f64]) -> Vec<f64> {
        self.assay_weights.iter().map(|w| pgfn_tensor::dot(w, clean)).collect()
    }

    pub fn assay_labels(&self, clean: &[f64]) -> Vec<bool> {
        self.assay_scores(clean).iter().zip(&self.assay_thresholds).map(|(s, t)| s > t).collect()
    }
}

/// `config.n` distinct molecules from uniform random rollouts with noisy
/// morphology from a frozen random map.
pub fn generate_synthetic<R: Rng + ?Sized>(config: &SynthConfig, env: &Env, rng: &mut R) -> Result<(Dataset, SynthTruth)> {
    if config.noise < 0.0 || !config.noise.is_finite() {
        return Err(syntax("noise must be non-negative"));
    }
    let bits = config.fp.bits;
    // Entries ~ Normal(0, variance 1/√B).
    let g_dist = Normal::new(0.0, (bits as f64).powf(-0.25)).expect("finite std");
    let g = Tensor::from_vec(config.feat_dim, bits, (0..config.feat_dim * bits).map(|_| g_dist.sample(rng)).collect());
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let assay_weights: Vec<Vec<f64>> =
        (0..config.n_assays).map(|_| (0..config.feat_dim).map(|_| std_normal.sample(rng)).collect()).collect();
    let mut truth = SynthTruth { g, assay_weights, assay_thresholds: vec![0.0; config.n_assays], fp: config.fp };

    let mut seen = HashSet::new();
    let mut mols = Vec::with_capacity(config.n);
    let attempts_cap = 50 * config.n.max(1);
    let mut attempts = 0;
    while mols.len() < config.n {
        if attempts == attempts_cap {
            return Err(DataError::VocabTooSmall { found: mols.len(), wanted: config.n, attempts });
        }
        attempts += 1;
        let mol = random_molecule(env, rng);
        if seen.insert(canonical_hash(&mol)) {
            mols.push(mol);
        }
    }
    let noise = Normal::new(0.0, config.noise.max(f64::MIN_POSITIVE)).expect("finite noise");
    let mut clean = Vec::with_capacity(mols.len());
    for m in &mols {
        clean.push(truth.morphology_clean(&fingerprint(m, config.fp)?));
    }
    // Median thresholds give balanced assays.
    for a in 0..config.n_assays {
        let mut s: Vec<f64> = clean.iter().map(|c| pgfn_tensor::dot(&truth.assay_weights[a], c)).collect();
        s.sort_by(f64::total_cmp);
        truth.assay_thresholds[a] = if s.is_empty() { 0.0 } else { s[s.len() / 2] };
    }
    let mut ds = Dataset::new(config.feat_dim);
    for (i, (m, c)) in mols.into_iter().zip(clean).enumerate() {
        let morph = c.iter().map(|x| if config.noise > 0.0 { x + noise.sample(rng) } else { *x }).collect();
        let assays = truth.assay_labels(&c).into_iter().enumerate().map(|(a, y)| (format!("A{a}"), y)).collect();
        ds.push(DataRecord { id: format!("M{i:05}"), structure: Structure::Assembly(m), morph, assays })?;
    }
    Ok((ds, truth))
}

/// Terminal molecule of a uniform random rollout.
pub fn random_molecule<R: Rng + ?Sized>(env: &Env, rng: &mut R) -> PartialMol {
    let mut s = State::initial();
    while !s.terminal {
        let actions = env.valid_actions(&s).expect("non-terminal");
        let a = actions[rng.random_range(0..actions.len())];
        s = env.step(&s, a).expect("valid action");
    }
    s.mol
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub id: String,
    pub mode: ConditioningMode,
    pub mol: Option<PartialMol>,
    pub morph: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TargetSelection {
    pub targets: Vec<Target>,
    /// `(record id, reason)` for candidates that were passed over.
    pub skipped: Vec<(String, String)>,
    /// The dataset without the selected targets.
    pub remaining: Dataset,
}

/// Picks `k` records in seeded order whose molecules are buildable in `env`.
pub fn select_targets(dataset: &Dataset, k: usize, env: &Env, seed: u64) -> Result<TargetSelection> {
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen = Vec::new();
    let mut skipped = Vec::new();
    for i in order {
        if chosen.len() == k {
            break;
        }
        let r = &dataset.records[i];
        match &r.structure {
            Structure::Fingerprint(_) => skipped.push((r.id.clone(), "no assembly structure".to_string())),
            Structure::Assembly(m) => match env.check_target(m) {
                Ok(()) => chosen.push(i),
                Err(e) => skipped.push((r.id.clone(), e.to_string())),
            },
        }
    }
    if chosen.len() < k {
        return Err(DataError::NotDecomposable(format!("only {} of {k} targets are decomposable", chosen.len())));
    }
    let targets = chosen
        .iter()
        .map(|&i| {
            let r = &dataset.records[i];
            Target { id: r.id.clone(), mode: ConditioningMode::Joint, mol: r.structure.molecule().cloned(), morph: r.morph.clone() }
        })
        .collect();
    let keep: Vec<usize> = (0..dataset.len()).filter(|i| !chosen.contains(i)).collect();
    Ok(TargetSelection { targets, skipped, remaining: dataset.subset(&keep) })
}

const TARGETS_HEADER: &str = "#pgfn-targets v1";

/// `targets.tsv`: `targetId mode molecule|- f0 .. f{F-1}`.
pub fn targets_to_text(targets: &[Target]) -> String {
    let f = targets.first().map_or(0, |t| t.morph.len());
    let mut out = format!("{TARGETS_HEADER} F={f}\n");
    for t in targets {
        let mol = t.mol.as_ref().map_or("-".to_string(), serialize);
        let _ = write!(out, "{}\t{}\t{mol}", t.id, t.mode.as_str());
        for x in &t.morph {
            let _ = write!(out, "\t{x}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_targets(text: &str, vocab: &FragmentVocab) -> Result<Vec<Target>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| syntax("empty targets file"))?;
    let f: usize = header
        .strip_prefix(TARGETS_HEADER)
        .and_then(|r| r.trim().strip_prefix("F="))
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| syntax(format!("bad targets header `{header}`")))?;
    let mut out = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 + f {
            return Err(DataError::InconsistentFeatureLength {
                id: cols[0].to_string(),
                got: cols.len().saturating_sub(3),
                want: f,
            });
        }
        let mode = ConditioningMode::parse(cols[1]).ok_or_else(|| syntax(format!("bad mode `{}`", cols[1])))?;
        let mol = if cols[2] == "-" { None } else { Some(parse(cols[2], vocab)?) };
        let morph = cols[3..]
            .iter()
            .map(|c| c.parse::<f64>().map_err(|_| syntax(format!("bad feature `{c}`"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(Target { id: cols[0].to_string(), mode, mol, morph });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use std::sync::Arc;

    fn env() -> Env {
        Env::new(Arc::new(SynthConfig::default().vocab().unwrap()), EnvConfig::default()).unwrap()
    }

    fn toy() -> (Dataset, FragmentVocab) {
        let v = SynthConfig::default().vocab().unwrap();
        let text = "#pgfn-data v1 F=2\n\
                    a\tmol=v1|n:0|e:\t0.5\t-1\tassay:X=1\n\
                    b\tfp=00000000000000ff\t1e-3\t2\n\
                    c\tmol=v1|n:1,2|e:0.0-1.0\t0\t0\tassay:X=0\tassay:Y=1\n";
        (Dataset::parse(text, Some(&v)).unwrap(), v)
    }

    #[test]
    fn label_file_round_trips_and_merges() {
        let (ds, _) = toy();
        let text = labels_to_text(&ds);
        assert_eq!(text, "#pgfn-labels v1\na\tX\t1\nc\tX\t0\nc\tY\t1\n");
        let labels = parse_labels(&text).unwrap();
        let mut bare = ds.clone();
        bare.records.iter_mut().for_each(|r| r.assays.clear());
        assert_eq!(bare.apply_labels(&labels), 0);
        assert_eq!(bare, ds);
        let extra = vec![("b".to_string(), "Y".to_string(), false), ("zz".to_string(), "X".to_string(), true)];
        assert_eq!(bare.apply_labels(&extra), 1);
        assert_eq!(bare.records[1].assays, vec![("Y".to_string(), false)]);
        assert!(parse_labels("#pgfn-labels v1\na\tX\t2\n").is_err());
    }

    #[test]
    fn toy_file_round_trips() {
        let (ds, v) = toy();
        assert_eq!(ds.len(), 3);
        assert_eq!(Dataset::parse(&ds.to_text(), Some(&v)).unwrap(), ds);
        assert_eq!(ds.assay_ids(), vec!["X".to_string(), "Y".to_string()]);
    }

    #[test]
    fn malformed_records() {
        let v = SynthConfig::default().vocab().unwrap();
        let mixed = "#pgfn-data v1 F=2\na\tmol=v1|n:0|e:\t1\t2\nb\tmol=v1|n:0|e:\t1\n";
        assert!(matches!(Dataset::parse(mixed, Some(&v)), Err(DataError::InconsistentFeatureLength { .. })));
        let both = "#pgfn-data v1 F=1\na\tmol=v1|n:0|e:\tfp=00000000000000ff\t1\n";
        assert!(matches!(Dataset::parse(both, Some(&v)), Err(DataError::SyntaxError(_))));
        let unknown = "#pgfn-data v1 F=1\na\tmol=v1|n:99|e:\t1\n";
        assert!(matches!(Dataset::parse(unknown, Some(&v)), Err(DataError::VocabMismatch(_))));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let mut ds = Dataset::new(1);
        for i in 0..10 {
            ds.push(DataRecord {
                id: format!("r{i}"),
                structure: Structure::Fingerprint(Fingerprint::zeros(64)),
                morph: vec![i as f64],
                assays: vec![],
            })
            .unwrap();
        }
        let (a, b, c) = ds.split((0.8, 0.1, 0.1), 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        assert_eq!(ds.split((0.8, 0.1, 0.1), 3).unwrap().0, a);
        let mut ids: Vec<String> = a.records.iter().chain(&b.records).chain(&c.records).map(|r| r.id.clone()).collect();
        ids.sort();
        let mut all: Vec<String> = ds.records.iter().map(|r| r.id.clone()).collect();
        all.sort();
        assert_eq!(ids, all);
        assert!(matches!(ds.split((0.5, 0.1, 0.1), 3), Err(DataError::BadFractions)));
    }

    #[test]
    fn synthetic_records_are_distinct_and_decomposable() {
        let e = env();
        let cfg = SynthConfig { n: 200, noise: 0.0, ..Default::default() };
        let (ds, truth) = generate_synthetic(&cfg, &e, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let ids: HashSet<&str> = ds.records.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids.len(), 200);
        for r in &ds.records {
            let m = r.structure.molecule().unwrap();
            e.check_target(m).unwrap();
            // σ = 0: morphology is exactly the clean map.
            let fp = fingerprint(m, cfg.fp).unwrap();
            assert_eq!(r.morph, truth.morphology_clean(&fp));
        }
    }

    #[test]
    fn tiny_vocab_cannot_reach_n() {
        let vocab = FragmentVocab::generated("t", 1, &[1]).unwrap();
        let e = Env::new(Arc::new(vocab), EnvConfig { max_nodes: 2, min_nodes: 1 }).unwrap();
        let cfg = SynthConfig { n: 5, ..Default::default() };
        assert!(matches!(
            generate_synthetic(&cfg, &e, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(DataError::VocabTooSmall { .. })
        ));
    }

    #[test]
    fn targets_leave_the_dataset() {
        let e = Env::new(Arc::new(SynthConfig::default().vocab().unwrap()), EnvConfig { max_nodes: 3, min_nodes: 1 }).unwrap();
        let (ds, _) = generate_synthetic(&SynthConfig { n: 50, ..Default::default() }, &env(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let sel = select_targets(&ds, 1, &e, 9).unwrap();
        assert_eq!(select_targets(&ds, 1, &e, 9).unwrap().targets, sel.targets);
        let t = &sel.targets[0];
        assert!(sel.remaining.records.iter().all(|r| r.id != t.id));
        assert_eq!(sel.remaining.len(), 49);
        // The default env caps at 8 nodes; most random molecules exceed 3.
        assert!(sel.skipped.iter().all(|(_, why)| why.contains("exceeds")));
        let text = targets_to_text(&sel.targets);
        assert_eq!(parse_targets(&text, e.vocab()).unwrap(), sel.targets);
    }
}
