//! Rewards: R = 1 + cos(z, z*)/2 and its log-domain form β·ln R.

use std::collections::HashMap;

use pgfn_tensor::cosine;

use crate::chemgraph::{canonical_hash, fingerprint, ChemError, Fingerprint, PartialMol};
use crate::embed::{EmbedError, GmcModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("joint conditioning needs a target structure")]
    MissingStructure,
    #[error("target latent must be unit norm (norm {0})")]
    NotUnit(f64),
    #[error("beta must be non-negative, got {0}")]
    BadBeta(f64),
    #[error("no reward for molecule {0:#018x}")]
    Unknown(u64),
    #[error(transparent)]
    Chem(#[from] ChemError),
    #[error("embedding failed: {0}")]
    Embed(String),
}

pub type Result<T, E = RewardError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditioningMode {
    MorphOnly,
    Joint,
}

impl ConditioningMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ConditioningMode::MorphOnly => "morph",
            ConditioningMode::Joint => "joint",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "morph" => Some(ConditioningMode::MorphOnly),
            "joint" => Some(ConditioningMode::Joint),
            _ => None,
        }
    }
}

/// Frozen target latent with the reward exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSpec {
    pub target_id: String,
    pub target: Vec<f64>,
    pub beta: f64,
    pub mode: ConditioningMode,
}

pub const DEFAULT_BETA: f64 = 64.0;

impl RewardSpec {
    pub fn new(target_id: impl Into<String>, target: Vec<f64>, beta: f64, mode: ConditioningMode) -> Result<Self> {
        let norm = pgfn_tensor::l2_norm(&target);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(RewardError::NotUnit(norm));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(RewardError::BadBeta(beta));
        }
        Ok(RewardSpec { target_id: target_id.into(), target, beta, mode })
    }
}

/// `1 + cos(latent, z*) / 2`, in [0.5, 1.5].
pub fn raw_reward(spec: &RewardSpec, latent: &[f64]) -> f64 {
    1.0 + cosine(latent, &spec.target).clamp(-1.0, 1.0) / 2.0
}

/// `β · ln raw_reward`.
pub fn log_reward(spec: &RewardSpec, latent: &[f64]) -> f64 {
    if spec.beta == 0.0 {
        return 0.0;
    }
    spec.beta * raw_reward(spec, latent).ln()
}

impl From<EmbedError> for RewardError {
    fn from(e: EmbedError) -> Self {
        RewardError::Embed(e.to_string())
    }
}

/// Freezes `h(ẏ)` (MorphOnly) or `fh(ẋ, ẏ)` (Joint) as the target latent.
/// `structure` must be given exactly when `mode` is Joint.
pub fn make_target(
    model: &GmcModel,
    target_id: impl Into<String>,
    morph: &[f64],
    structure: Option<&Fingerprint>,
    mode: ConditioningMode,
    beta: f64,
) -> Result<RewardSpec> {
    let z = match (mode, structure) {
        (ConditioningMode::MorphOnly, None) => model.embed_morphology(morph)?,
        (ConditioningMode::Joint, Some(fp)) => model.embed_joint(fp, morph)?,
        (ConditioningMode::Joint, None) => return Err(RewardError::MissingStructure),
        (ConditioningMode::MorphOnly, Some(_)) => {
            return Err(RewardError::Embed("structure given for morphology-only target".into()))
        }
    };
    RewardSpec::new(target_id, z, beta, mode)
}

/// A terminal reward as seen by the learners.
pub trait RewardFn {
    /// Positive raw reward R(x).
    fn raw_reward(&self, mol: &PartialMol) -> Result<f64>;

    fn beta(&self) -> f64;

    fn log_reward(&self, mol: &PartialMol) -> Result<f64> {
        let b = self.beta();
        if b == 0.0 {
            return Ok(0.0);
        }
        Ok(b * self.raw_reward(mol)?.ln())
    }
}

/// Rewards looked up by canonical hash.
#[derive(Debug, Clone, Default)]
pub struct TableReward {
    pub table: HashMap<u64, f64>,
    pub beta: f64,
}

impl TableReward {
    pub fn new(beta: f64) -> Self {
        TableReward { table: HashMap::new(), beta }
    }

    pub fn insert(&mut self, mol: &PartialMol, r: f64) {
        self.table.insert(canonical_hash(mol), r);
    }
}

impl RewardFn for TableReward {
    fn raw_reward(&self, mol: &PartialMol) -> Result<f64> {
        let h = canonical_hash(mol);
        self.table.get(&h).copied().ok_or(RewardError::Unknown(h))
    }

    fn beta(&self) -> f64 {
        self.beta
    }
}

/// Reward of a molecule through the frozen structure encoder.
#[derive(Debug, Clone, Copy)]
pub struct LatentReward<'a> {
    pub model: &'a GmcModel,
    pub spec: &'a RewardSpec,
}

impl<'a> LatentReward<'a> {
    pub fn new(model: &'a GmcModel, spec: &'a RewardSpec) -> Self {
        LatentReward { model, spec }
    }

    pub fn latent(&self, mol: &PartialMol) -> Result<Vec<f64>> {
        let fp = fingerprint(mol, self.model.config.fp)?;
        Ok(self.model.embed_structure(&fp)?)
    }
}

impl RewardFn for LatentReward<'_> {
    fn raw_reward(&self, mol: &PartialMol) -> Result<f64> {
        Ok(raw_reward(self.spec, &self.latent(mol)?))
    }

    fn beta(&self) -> f64 {
        self.spec.beta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(beta: f64) -> RewardSpec {
        RewardSpec::new("t", vec![0.6, 0.8, 0.0], beta, ConditioningMode::MorphOnly).unwrap()
    }

    #[test]
    fn raw_reward_examples() {
        let s = spec(64.0);
        assert!((raw_reward(&s, &[0.6, 0.8, 0.0]) - 1.5).abs() < 1e-12);
        assert!((raw_reward(&s, &[-0.6, -0.8, 0.0]) - 0.5).abs() < 1e-12);
        assert!((raw_reward(&s, &[0.0, 0.0, 1.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_reward_examples() {
        let z = [0.6, 0.8, 0.0];
        // 64 · ln 1.5, evaluated independently.
        let want = 64.0 * (3.0f64 / 2.0).ln();
        assert!((log_reward(&spec(64.0), &z) - want).abs() < 1e-12);
        assert!((log_reward(&spec(64.0), &z) - 25.949_766_918_922_52).abs() < 1e-9);
        assert_eq!(log_reward(&spec(0.0), &z), 0.0);
        for b in [1.0, 8.0, 64.0] {
            assert_eq!(log_reward(&spec(b), &[0.0, 0.0, 1.0]), 0.0);
        }
    }

    #[test]
    fn target_must_be_unit() {
        assert!(matches!(
            RewardSpec::new("t", vec![1.0, 1.0], 1.0, ConditioningMode::Joint),
            Err(RewardError::NotUnit(_))
        ));
    }

    #[test]
    fn targets_from_model() {
        use crate::chemgraph::FingerprintSpec;
        use crate::data::FeatureStats;
        use crate::embed::EmbedderConfig;
        use rand::SeedableRng;
        let cfg = EmbedderConfig { latent_dim: 4, hidden: 8, fp: FingerprintSpec { radius: 1, bits: 64 }, ..Default::default() };
        let stats = FeatureStats { mean: vec![0.0; 3], std: vec![1.0; 3] };
        let model = GmcModel::new(cfg, &stats, &mut rand_chacha::ChaCha8Rng::seed_from_u64(3)).unwrap();
        let y = [0.5, -1.0, 2.0];
        let fp = Fingerprint::from_indices(64, [1, 9, 40]);
        let m = make_target(&model, "t", &y, None, ConditioningMode::MorphOnly, 64.0).unwrap();
        assert_eq!(m.target, model.embed_morphology(&y).unwrap());
        let j = make_target(&model, "t", &y, Some(&fp), ConditioningMode::Joint, 64.0).unwrap();
        assert_ne!(j.target, m.target);
        assert_eq!(
            make_target(&model, "t", &y, None, ConditioningMode::Joint, 64.0),
            Err(RewardError::MissingStructure)
        );
    }
}
