//! Multimodal contrastive embedder: a structure encoder `f`, a morphology
//! encoder `h` and a joint encoder `fh`, all projected onto the unit sphere
//! and aligned to the joint latent with a symmetric CLIP loss.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use pgfn_tensor::{
    cosine, Activation, Adam, Checkpoint, LayerSpec, Mlp, ParamStore, Tape, Tensor, TensorError, Var,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chemgraph::{Fingerprint, FingerprintSpec};
use crate::data::{Dataset, FeatureStats};
use crate::reward::ConditioningMode;

pub const CHECKPOINT_KIND: &str = "gmc v1";

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

pub type Result<T, E = EmbedError> = std::result::Result<T, E>;

/// Similarity used on the morphology side of the validation correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphMetric {
    /// Cosine of per-feature z-scores.
    CosineZ,
    /// Cosine after projecting z-scores onto the top `k` principal axes.
    CosinePca(usize),
}

impl MorphMetric {
    pub fn parse(s: &str) -> Option<Self> {
        if s == "cosine_z" {
            return Some(MorphMetric::CosineZ);
        }
        let k = s.strip_prefix("cosine_pca(")?.strip_suffix(')')?.parse().ok()?;
        (k > 0).then_some(MorphMetric::CosinePca(k))
    }

    pub fn as_string(self) -> String {
        match self {
            MorphMetric::CosineZ => "cosine_z".into(),
            MorphMetric::CosinePca(k) => format!("cosine_pca({k})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub tau: f64,
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub pair_budget: usize,
    pub morph_metric: MorphMetric,
    pub fp: FingerprintSpec,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            latent_dim: 32,
            hidden: 64,
            tau: 0.4,
            batch: 128,
            epochs: 200,
            lr: 1e-3,
            weight_decay: 0.0,
            patience: 10,
            pair_budget: 50_000,
            morph_metric: MorphMetric::CosineZ,
            fp: FingerprintSpec::default(),
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(EmbedError::BadConfig(m.into()));
        if self.latent_dim == 0 || self.hidden == 0 || self.batch == 0 || self.epochs == 0 || self.pair_budget == 0 {
            return bad("sizes must be positive");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        Ok(())
    }
}

/// Which encoder to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoder {
    Structure,
    Morphology,
    Joint,
}

impl Encoder {
    fn prefix(self) -> &'static str {
        match self {
            Encoder::Structure => "f",
            Encoder::Morphology => "h",
            Encoder::Joint => "fh",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmcModel {
    pub store: ParamStore,
    pub config: EmbedderConfig,
    pub feat_dim: usize,
    encoders: [(Mlp, Mlp); 3],
}

impl GmcModel {
    /// Fresh model; `stats` standardizes morphology inputs.
    pub fn new<R: Rng + ?Sized>(config: EmbedderConfig, stats: &FeatureStats, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let feat_dim = stats.mean.len();
        if feat_dim == 0 {
            return Err(EmbedError::ShapeMismatch("morphology has no features".into()));
        }
        let mut store = ParamStore::new();
        store.insert("stats.mean", Tensor::row_vector(stats.mean.clone()))?;
        store.insert("stats.std", Tensor::row_vector(stats.std.clone()))?;
        let mut encoders = Vec::new();
        for enc in [Encoder::Structure, Encoder::Morphology, Encoder::Joint] {
            let (base, proj) = Self::specs(&config, feat_dim, enc);
            let p = enc.prefix();
            encoders.push((
                Mlp::init(&mut store, format!("{p}.base"), base, rng)?,
                Mlp::init(&mut store, format!("{p}.proj"), proj, rng)?,
            ));
        }
        Ok(GmcModel { store, config, feat_dim, encoders: encoders.try_into().expect("three encoders") })
    }

    fn specs(config: &EmbedderConfig, feat_dim: usize, enc: Encoder) -> (LayerSpec, LayerSpec) {
        let input = match enc {
            Encoder::Structure => config.fp.bits,
            Encoder::Morphology => feat_dim,
            Encoder::Joint => config.fp.bits + feat_dim,
        };
        let d = config.hidden;
        (
            LayerSpec::new(vec![input, d]).with_output(Activation::Relu),
            LayerSpec::new(vec![d, d, config.latent_dim]),
        )
    }

    fn bind(store: ParamStore, config: EmbedderConfig, feat_dim: usize) -> Result<Self> {
        let mut encoders = Vec::new();
        for enc in [Encoder::Structure, Encoder::Morphology, Encoder::Joint] {
            let (base, proj) = Self::specs(&config, feat_dim, enc);
            let p = enc.prefix();
            encoders.push((Mlp::bind(&store, format!("{p}.base"), base)?, Mlp::bind(&store, format!("{p}.proj"), proj)?));
        }
        Ok(GmcModel { store, config, feat_dim, encoders: encoders.try_into().expect("three encoders") })
    }

    fn stat(&self, name: &str) -> &[f64] {
        self.store.get(name).expect("stats present").data()
    }

    pub fn standardize(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(self.stat("stats.mean")).zip(self.stat("stats.std")).map(|((x, m), s)| (x - m) / s).collect()
    }

    /// Morphology representation compared in the validation correlation.
    pub fn morph_repr(&self, y: &[f64]) -> Vec<f64> {
        let z = self.standardize(y);
        match self.store.get("stats.pca") {
            None => z,
            Some(p) => (0..p.rows()).map(|r| pgfn_tensor::dot(p.row(r), &z)).collect(),
        }
    }

    fn check_inputs(&self, fps: &[&Fingerprint], morph: &[&[f64]]) -> Result<()> {
        if let Some(fp) = fps.iter().find(|fp| fp.len() != self.config.fp.bits) {
            return Err(EmbedError::ShapeMismatch(format!("fingerprint has {} bits, expected {}", fp.len(), self.config.fp.bits)));
        }
        if let Some(y) = morph.iter().find(|y| y.len() != self.feat_dim) {
            return Err(EmbedError::ShapeMismatch(format!("morphology has {} features, expected {}", y.len(), self.feat_dim)));
        }
        Ok(())
    }

    /// Unit-norm latents (one row per item) recorded on `tape`. Structure
    /// inputs are used by `f` and `fh`, morphology by `h` and `fh`.
    pub fn encode(&self, tape: &mut Tape<'_>, enc: Encoder, fps: &[&Fingerprint], morph: &[&[f64]]) -> Result<Var> {
        self.check_inputs(fps, morph)?;
        let (base, proj) = &self.encoders[enc as usize];
        let dense = |tape: &mut Tape<'_>| {
            let rows: Vec<Vec<f64>> = morph.iter().map(|y| self.standardize(y)).collect();
            tape.constant(Tensor::from_rows(&rows))
        };
        let active = || fps.iter().map(|fp| fp.active()).collect::<Vec<_>>();
        let n = match enc {
            Encoder::Morphology => morph.len(),
            _ => fps.len(),
        };
        if n == 0 {
            return Err(EmbedError::EmptyBatch);
        }
        let h = match enc {
            Encoder::Structure => base.forward_sparse(tape, active(), None)?,
            Encoder::Morphology => {
                let x = dense(tape);
                base.forward(tape, x)?
            }
            Encoder::Joint => {
                if morph.len() != fps.len() {
                    return Err(EmbedError::ShapeMismatch("joint inputs differ in length".into()));
                }
                let x = dense(tape);
                base.forward_sparse(tape, active(), Some(x))?
            }
        };
        let z = proj.forward(tape, h)?;
        Ok(tape.l2_normalize_rows(z))
    }

    fn embed_rows(&self, enc: Encoder, fps: &[&Fingerprint], morph: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new(&self.store);
        let z = self.encode(&mut tape, enc, fps, morph)?;
        let t = tape.value(z);
        Ok((0..t.rows()).map(|r| t.row(r).to_vec()).collect())
    }

    pub fn embed_structure(&self, fp: &Fingerprint) -> Result<Vec<f64>> {
        Ok(self.embed_rows(Encoder::Structure, &[fp], &[])?.remove(0))
    }

    pub fn embed_morphology(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.embed_rows(Encoder::Morphology, &[], &[y])?.remove(0))
    }

    pub fn embed_joint(&self, fp: &Fingerprint, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.embed_rows(Encoder::Joint, &[fp], &[y])?.remove(0))
    }

    pub fn embed_structures(&self, fps: &[Fingerprint]) -> Result<Vec<Vec<f64>>> {
        let refs: Vec<&Fingerprint> = fps.iter().collect();
        self.embed_rows(Encoder::Structure, &refs, &[])
    }

    pub fn embed_morphologies(&self, ys: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let refs: Vec<&[f64]> = ys.iter().map(|y| y.as_slice()).collect();
        self.embed_rows(Encoder::Morphology, &[], &refs)
    }

    pub fn embed_joints(&self, fps: &[Fingerprint], ys: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let f: Vec<&Fingerprint> = fps.iter().collect();
        let y: Vec<&[f64]> = ys.iter().map(|y| y.as_slice()).collect();
        self.embed_rows(Encoder::Joint, &f, &y)
    }

    /// `clip(f, fh) + clip(h, fh)` on one batch.
    pub fn gmc_loss_on_tape(&self, tape: &mut Tape<'_>, fps: &[&Fingerprint], morph: &[&[f64]]) -> Result<Var> {
        if fps.is_empty() {
            return Err(EmbedError::EmptyBatch);
        }
        if fps.len() != morph.len() {
            return Err(EmbedError::ShapeMismatch("structure and morphology batches differ".into()));
        }
        let zf = self.encode(tape, Encoder::Structure, fps, morph)?;
        let zh = self.encode(tape, Encoder::Morphology, fps, morph)?;
        let zj = self.encode(tape, Encoder::Joint, fps, morph)?;
        let a = clip_loss(tape, zf, zj, self.config.tau)?;
        let b = clip_loss(tape, zh, zj, self.config.tau)?;
        Ok(tape.add(a, b))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        Checkpoint::new(CHECKPOINT_KIND, self.store.clone())
            .with_meta("latent_dim", c.latent_dim)
            .with_meta("hidden", c.hidden)
            .with_meta("tau", c.tau)
            .with_meta("feat_dim", self.feat_dim)
            .with_meta("fp_bits", c.fp.bits)
            .with_meta("fp_radius", c.fp.radius)
            .with_meta("morph_metric", c.morph_metric.as_string())
    }

    /// Rebuilds a model for inference. Training-only settings take defaults.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let get = |k: &str| -> Result<&str> {
            ck.meta(k).ok_or_else(|| EmbedError::Tensor(TensorError::BadCheckpoint(format!("missing meta `{k}`"))))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| EmbedError::Tensor(TensorError::BadCheckpoint(format!("bad meta `{k}`"))))
        };
        let config = EmbedderConfig {
            latent_dim: num("latent_dim")?,
            hidden: num("hidden")?,
            tau: get("tau")?.parse().map_err(|_| EmbedError::BadConfig("bad tau".into()))?,
            morph_metric: MorphMetric::parse(get("morph_metric")?)
                .ok_or_else(|| EmbedError::BadConfig("bad morph_metric".into()))?,
            fp: FingerprintSpec { radius: num("fp_radius")?, bits: num("fp_bits")? },
            ..EmbedderConfig::default()
        };
        config.validate()?;
        Self::bind(ck.store.clone(), config, num("feat_dim")?)
    }
}

/// `(1/N) Σ_i [−log softmax_row(S)_ii − log softmax_col(S)_ii]` with
/// `S = Z·Wᵀ / τ`, for unit-norm row latents.
pub fn clip_loss(tape: &mut Tape<'_>, z: Var, w: Var, tau: f64) -> Result<Var> {
    let (n, s) = tape.shape(z);
    if n == 0 {
        return Err(EmbedError::EmptyBatch);
    }
    if tape.shape(w) != (n, s) {
        return Err(EmbedError::ShapeMismatch("clip loss inputs differ in shape".into()));
    }
    let sims = tape.matmul_t(z, w);
    let sims = tape.scale(sims, 1.0 / tau);
    let rows = tape.log_softmax_rows(sims, None);
    let st = tape.transpose(sims);
    let cols = tape.log_softmax_rows(st, None);
    let dr = tape.diag(rows);
    let dc = tape.diag(cols);
    let both = tape.add(dr, dc);
    let total = tape.sum(both);
    Ok(tape.scale(total, -1.0 / n as f64))
}

/// Value-only CLIP loss on plain rows.
pub fn clip_loss_value(z: &[Vec<f64>], w: &[Vec<f64>], tau: f64) -> Result<f64> {
    if z.is_empty() {
        return Err(EmbedError::EmptyBatch);
    }
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let zv = tape.constant(Tensor::from_rows(z));
    let wv = tape.constant(Tensor::from_rows(w));
    let l = clip_loss(&mut tape, zv, wv, tau)?;
    Ok(tape.scalar(l))
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(EmbedError::DegenerateData("need at least two paired values".into()));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 1e-300 || syy <= 1e-300 {
        return Err(EmbedError::DegenerateData("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ordered pairs `(i, j)`, `i ≠ j`: all of them when they fit in `budget`,
/// otherwise `budget` seeded draws.
pub fn sample_pairs(n: usize, budget: usize, seed: u64) -> Vec<(usize, usize)> {
    if n < 2 {
        return Vec::new();
    }
    if n * (n - 1) <= budget {
        return (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..budget)
        .map(|_| {
            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            (i, j)
        })
        .collect()
}

/// Paired similarities `d = sim(y_i, y_j)` and `d̂ = cos(f(x_i), g_j)` where
/// `g_j = h(y_j)` (MorphOnly) or `fh(x_j, y_j)` (Joint).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub pairs: Vec<(f64, f64)>,
    pub r: f64,
}

impl CorrelationReport {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn correlation_pairs(
    model: &GmcModel,
    dataset: &Dataset,
    mode: ConditioningMode,
    pair_budget: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    if dataset.len() < 2 {
        return Err(EmbedError::DegenerateData("need at least two items".into()));
    }
    let fps = dataset.fingerprints(model.config.fp)?;
    let ys = dataset.morphology();
    let zf = model.embed_structures(&fps)?;
    let zg = match mode {
        ConditioningMode::MorphOnly => model.embed_morphologies(&ys)?,
        ConditioningMode::Joint => model.embed_joints(&fps, &ys)?,
    };
    let reprs: Vec<Vec<f64>> = ys.iter().map(|y| model.morph_repr(y)).collect();
    let pairs: Vec<(f64, f64)> = sample_pairs(dataset.len(), pair_budget, seed)
        .into_iter()
        .map(|(i, j)| (cosine(&reprs[i], &reprs[j]), pgfn_tensor::dot(&zf[i], &zg[j])))
        .collect();
    let (d, dh): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let r = pearson(&d, &dh)?;
    Ok(CorrelationReport { pairs, r })
}

/// Early-stopping metric: MorphOnly correlation on the validation split.
pub fn validation_correlation(model: &GmcModel, validation: &Dataset, pair_budget: usize, seed: u64) -> Result<f64> {
    Ok(correlation_pairs(model, validation, ConditioningMode::MorphOnly, pair_budget, seed)?.r)
}

/// Top-`k` principal axes (rows) of standardized training features.
fn pca_axes(rows: &[Vec<f64>], k: usize) -> Result<Tensor> {
    let f = rows[0].len();
    if k > f {
        return Err(EmbedError::BadConfig(format!("cosine_pca({k}) exceeds {f} features")));
    }
    let n = rows.len() as f64;
    let x = DMatrix::from_fn(rows.len(), f, |r, c| rows[r][c]);
    let cov = x.transpose() * &x / n;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut out = Tensor::zeros(k, f);
    for (r, &c) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(c);
        // Sign convention: largest-magnitude entry positive.
        let pivot = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(1.0);
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (j, x) in v.iter().enumerate() {
            out.set(r, j, sign * x);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStat {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_r: f64,
    pub best_r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedReport {
    pub epochs: Vec<EpochStat>,
    pub best_epoch: usize,
}

impl EmbedReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\tloss\tval_r\tbest_r\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", e.epoch, e.mean_loss, e.val_r, e.best_r);
        }
        out
    }
}

/// Trains with minibatch Adam and keeps the parameters of the epoch with the
/// highest validation correlation. Training stops once `patience` epochs
/// pass without improvement.
pub fn train_embedder<R: Rng + ?Sized>(
    train: &Dataset,
    validation: &Dataset,
    config: &EmbedderConfig,
    rng: &mut R,
) -> Result<(GmcModel, EmbedReport)> {
    config.validate()?;
    if train.len() < 2 || validation.len() < 2 {
        return Err(EmbedError::DegenerateData("train and validation need two items each".into()));
    }
    let ys = train.morphology();
    if ys.iter().all(|y| y == &ys[0]) {
        return Err(EmbedError::DegenerateData("morphology features have zero variance".into()));
    }
    let stats = FeatureStats::from_rows(&ys).expect("non-empty");
    let fps = train.fingerprints(config.fp)?;
    let mut model = GmcModel::new(config.clone(), &stats, rng)?;
    if let MorphMetric::CosinePca(k) = config.morph_metric {
        let z: Vec<Vec<f64>> = ys.iter().map(|y| model.standardize(y)).collect();
        model.store.insert("stats.pca", pca_axes(&z, k)?)?;
    }
    let adam = Adam::new(config.lr).with_weight_decay(config.weight_decay);
    let pair_seed: u64 = rng.random();
    let mut best = (f64::NEG_INFINITY, 0usize, model.store.clone());
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        let mut losses = Vec::new();
        for chunk in order.chunks(config.batch) {
            if chunk.len() < 2 {
                continue;
            }
            let bf: Vec<&Fingerprint> = chunk.iter().map(|&i| &fps[i]).collect();
            let by: Vec<&[f64]> = chunk.iter().map(|&i| ys[i].as_slice()).collect();
            let grads = {
                let mut tape = Tape::new(&model.store);
                let l = model.gmc_loss_on_tape(&mut tape, &bf, &by)?;
                losses.push(tape.scalar(l));
                tape.backward_scalar(l)?
            };
            adam.step(&mut model.store, &grads)?;
        }
        let r = validation_correlation(&model, validation, config.pair_budget, pair_seed)?;
        if r > best.0 {
            best = (r, epoch, model.store.clone());
        }
        let mean_loss = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
        epochs.push(EpochStat { epoch, mean_loss, val_r: r, best_r: best.0 });
        if epoch - best.1 >= config.patience {
            break;
        }
    }
    let (_, best_epoch, store) = best;
    model.store = store;
    Ok((model, EmbedReport { epochs, best_epoch }))
}

/// `id\tz_0\t…` lines.
pub fn export_latents(ids: &[String], latents: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for (id, z) in ids.iter().zip(latents) {
        out.push_str(id);
        for x in z {
            let _ = write!(out, "\t{x}");
        }
        out.push('\n');
    }
    out
}
