//! Multi-label assay activity predictor used for evaluation only.

use pgfn_tensor::{sigmoid, Activation, Adam, Checkpoint, LayerSpec, Mlp, ParamStore, Tape, Tensor, TensorError, Var};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::chemgraph::{Fingerprint, FingerprintSpec};
use crate::data::Dataset;

pub const CHECKPOINT_KIND: &str = "oracle v1";

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("assay `{0}` needs at least one positive and one negative training label")]
    DegenerateLabels(String),
    #[error("no positive labels")]
    NoPositives,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

pub type Result<T, E = OracleError> = std::result::Result<T, E>;

/// Mean over positives of precision at their rank. Scores are ranked
/// descending; ties keep input order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(OracleError::ShapeMismatch("scores and labels differ in length".into()));
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 {
        return Err(OracleError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / positives as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub fp: FingerprintSpec,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { hidden: vec![64, 64], lr: 1e-4, epochs: 200, batch: 64, fp: FingerprintSpec::default() }
    }
}

#[derive(Debug, Clone)]
pub struct OracleModel {
    pub store: ParamStore,
    pub assays: Vec<String>,
    pub fp_bits: usize,
    mlp: Mlp,
}

fn layout(bits: usize, hidden: &[usize], outputs: usize) -> LayerSpec {
    let mut sizes = vec![bits];
    sizes.extend_from_slice(hidden);
    sizes.push(outputs);
    // The network emits logits; `predict` applies the sigmoid.
    LayerSpec::new(sizes).with_output(Activation::Identity)
}

impl OracleModel {
    pub fn new<R: Rng + ?Sized>(assays: Vec<String>, fp_bits: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        if assays.is_empty() {
            return Err(OracleError::BadConfig("no assays".into()));
        }
        let mut store = ParamStore::new();
        let mlp = Mlp::init(&mut store, "oracle", layout(fp_bits, hidden, assays.len()), rng)?;
        Ok(OracleModel { store, assays, fp_bits, mlp })
    }

    pub fn hidden(&self) -> Vec<usize> {
        let s = &self.mlp.spec.sizes;
        s[1..s.len() - 1].to_vec()
    }

    pub fn assay_index(&self, id: &str) -> Option<usize> {
        self.assays.iter().position(|a| a == id)
    }

    /// `n × A` logits on the tape.
    pub fn logits(&self, tape: &mut Tape<'_>, fps: &[&Fingerprint]) -> Result<Var> {
        if let Some(fp) = fps.iter().find(|fp| fp.len() != self.fp_bits) {
            return Err(OracleError::ShapeMismatch(format!("fingerprint has {} bits, expected {}", fp.len(), self.fp_bits)));
        }
        Ok(self.mlp.forward_sparse(tape, fps.iter().map(|fp| fp.active()).collect(), None)?)
    }

    /// Per-assay probabilities.
    pub fn predict(&self, fp: &Fingerprint) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.store);
        let z = self.logits(&mut tape, &[fp])?;
        Ok(tape.value(z).data().iter().map(|&x| sigmoid(x)).collect())
    }

    pub fn predict_many(&self, fps: &[Fingerprint]) -> Result<Vec<Vec<f64>>> {
        let refs: Vec<&Fingerprint> = fps.iter().collect();
        let mut tape = Tape::new(&self.store);
        let z = self.logits(&mut tape, &refs)?;
        let t = tape.value(z);
        Ok((0..t.rows()).map(|r| t.row(r).iter().map(|&x| sigmoid(x)).collect()).collect())
    }

    /// Masked mean binary cross-entropy, `softplus(z) − y·z` per observed label.
    pub fn bce_on_tape(&self, tape: &mut Tape<'_>, fps: &[&Fingerprint], labels: &[Vec<Option<bool>>]) -> Result<Var> {
        let a = self.assays.len();
        if labels.len() != fps.len() || labels.iter().any(|l| l.len() != a) {
            return Err(OracleError::ShapeMismatch("label matrix does not match batch".into()));
        }
        let z = self.logits(tape, fps)?;
        let mut y = Vec::with_capacity(fps.len() * a);
        let mut mask = Vec::with_capacity(fps.len() * a);
        for row in labels {
            for l in row {
                y.push(if *l == Some(true) { 1.0 } else { 0.0 });
                mask.push(if l.is_some() { 1.0 } else { 0.0 });
            }
        }
        let observed: f64 = mask.iter().sum();
        if observed == 0.0 {
            return Err(OracleError::BadConfig("batch has no observed labels".into()));
        }
        let yv = tape.constant(Tensor::from_vec(fps.len(), a, y));
        let mv = tape.constant(Tensor::from_vec(fps.len(), a, mask));
        let sp = tape.softplus(z);
        let yz = tape.mul(yv, z);
        let per = tape.sub(sp, yz);
        let masked = tape.mul(per, mv);
        let total = tape.sum(masked);
        Ok(tape.scale(total, 1.0 / observed))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let hidden: Vec<String> = self.hidden().iter().map(|h| h.to_string()).collect();
        Checkpoint::new(CHECKPOINT_KIND, self.store.clone())
            .with_meta("fp_bits", self.fp_bits)
            .with_meta("hidden", hidden.join(","))
            .with_meta("assays", self.assays.join(","))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let meta = |k: &str| ck.meta(k).ok_or_else(|| OracleError::BadConfig(format!("checkpoint lacks `{k}`")));
        let fp_bits: usize = meta("fp_bits")?.parse().map_err(|_| OracleError::BadConfig("bad fp_bits".into()))?;
        let hidden = meta("hidden")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| OracleError::BadConfig("bad hidden".into())))
            .collect::<Result<Vec<usize>>>()?;
        let assays: Vec<String> = meta("assays")?.split(',').map(str::to_string).collect();
        let mlp = Mlp::bind(&ck.store, "oracle", layout(fp_bits, &hidden, assays.len()))?;
        Ok(OracleModel { store: ck.store.clone(), assays, fp_bits, mlp })
    }
}

/// Label matrix of `dataset` over `assays`; missing entries are `None`.
pub fn label_matrix(dataset: &Dataset, assays: &[String]) -> Vec<Vec<Option<bool>>> {
    dataset
        .records
        .iter()
        .map(|r| assays.iter().map(|a| r.assays.iter().find(|(id, _)| id == a).map(|(_, y)| *y)).collect())
        .collect()
}

/// Macro-mean AP over assays that have a positive in `dataset`.
pub fn macro_average_precision(model: &OracleModel, dataset: &Dataset, fp: FingerprintSpec) -> Result<f64> {
    let fps = dataset.fingerprints(fp)?;
    let probs = model.predict_many(&fps)?;
    let labels = label_matrix(dataset, &model.assays);
    let mut aps = Vec::new();
    for a in 0..model.assays.len() {
        let (s, y): (Vec<f64>, Vec<bool>) =
            probs.iter().zip(&labels).filter_map(|(p, l)| l[a].map(|y| (p[a], y))).unzip();
        match average_precision(&s, &y) {
            Ok(ap) => aps.push(ap),
            Err(OracleError::NoPositives) => {}
            Err(e) => return Err(e),
        }
    }
    if aps.is_empty() {
        return Err(OracleError::NoPositives);
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub val_ap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub epochs: Vec<OracleEpoch>,
    pub best_epoch: usize,
}

/// Trains on every assay seen in `train` and keeps the epoch with the best
/// validation macro-AP.
pub fn oracle_train<R: Rng + ?Sized>(
    train: &Dataset,
    validation: &Dataset,
    config: &OracleConfig,
    rng: &mut R,
) -> Result<(OracleModel, OracleReport)> {
    if !(config.lr > 0.0) || config.epochs == 0 || config.batch == 0 {
        return Err(OracleError::BadConfig("lr, epochs and batch must be positive".into()));
    }
    let assays = train.assay_ids();
    let labels = label_matrix(train, &assays);
    for (a, id) in assays.iter().enumerate() {
        let pos = labels.iter().any(|l| l[a] == Some(true));
        let neg = labels.iter().any(|l| l[a] == Some(false));
        if !(pos && neg) {
            return Err(OracleError::DegenerateLabels(id.clone()));
        }
    }
    if assays.is_empty() {
        return Err(OracleError::BadConfig("training split has no assay labels".into()));
    }
    let fps = train.fingerprints(config.fp)?;
    let mut model = OracleModel::new(assays, config.fp.bits, &config.hidden, rng)?;
    let adam = Adam::new(config.lr);
    let mut best = (f64::NEG_INFINITY, 0usize, model.store.clone());
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).filter(|&i| labels[i].iter().any(Option::is_some)).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        let mut losses = Vec::new();
        for chunk in order.chunks(config.batch) {
            let bf: Vec<&Fingerprint> = chunk.iter().map(|&i| &fps[i]).collect();
            let bl: Vec<Vec<Option<bool>>> = chunk.iter().map(|&i| labels[i].clone()).collect();
            let grads = {
                let mut tape = Tape::new(&model.store);
                let l = model.bce_on_tape(&mut tape, &bf, &bl)?;
                losses.push(tape.scalar(l));
                tape.backward_scalar(l)?
            };
            adam.step(&mut model.store, &grads)?;
        }
        let ap = macro_average_precision(&model, validation, config.fp)?;
        if ap > best.0 {
            best = (ap, epoch, model.store.clone());
        }
        let loss = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
        epochs.push(OracleEpoch { epoch, loss, val_ap: ap });
    }
    let (_, best_epoch, store) = best;
    model.store = store;
    Ok((model, OracleReport { epochs, best_epoch }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DataRecord, Structure};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ap_hand_values() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.1, 0.9], &[true, false]).unwrap(), 0.5);
        // Tie: the earlier item ranks first.
        assert_eq!(average_precision(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
        assert!(matches!(average_precision(&[0.3], &[false]), Err(OracleError::NoPositives)));
    }

    #[test]
    fn ap_of_random_scores_tends_to_prevalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 20_000;
        let s: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let y: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5).collect();
        assert!((average_precision(&s, &y).unwrap() - 0.5).abs() < 0.02);
    }

    fn zero_model() -> OracleModel {
        let mut m = OracleModel::new(vec!["a".into(), "b".into()], 16, &[4, 4], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let names: Vec<String> = m.store.names().map(str::to_string).collect();
        for n in names {
            m.store.get_mut(&n).unwrap().data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        m
    }

    #[test]
    fn zero_weights_predict_one_half() {
        let m = zero_model();
        assert_eq!(m.predict(&Fingerprint::from_indices(16, [1, 5])).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(m.predict(&Fingerprint::zeros(8)), Err(OracleError::ShapeMismatch(_))));
    }

    #[test]
    fn single_weight_response_is_monotone() {
        // One path: bit 3 → h0 → h0 → output 0.
        let mut m = zero_model();
        let mut prev = 0.0;
        for w in [0.0, 0.5, 1.0, 2.0] {
            m.store.get_mut("oracle.l0.w").unwrap().set(0, 3, w);
            m.store.get_mut("oracle.l1.w").unwrap().set(0, 0, 1.0);
            m.store.get_mut("oracle.l2.w").unwrap().set(0, 0, 1.0);
            let p = m.predict(&Fingerprint::from_indices(16, [3])).unwrap()[0];
            assert!(p >= prev && p > 0.0 && p < 1.0);
            prev = p;
        }
        assert!(prev > 0.5);
    }

    fn separable(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ds = Dataset::new(1);
        for i in 0..n {
            let bits: Vec<usize> = (0..6).map(|_| rng.random_range(0..64)).collect();
            let fp = Fingerprint::from_indices(64, bits);
            let pos = fp.get(0) || fp.get(1) || fp.get(2) || fp.get(3) || fp.get(4);
            let y2 = fp.count_ones().is_multiple_of(2);
            ds.push(DataRecord {
                id: format!("r{i}"),
                structure: Structure::Fingerprint(fp),
                morph: vec![0.0],
                assays: vec![("hit".into(), pos), ("even".into(), y2)],
            })
            .unwrap();
        }
        ds
    }

    #[test]
    fn learns_separable_labels() {
        let cfg = OracleConfig { lr: 1e-2, epochs: 60, batch: 32, fp: FingerprintSpec { radius: 0, bits: 64 }, ..Default::default() };
        let (tr, va) = (separable(400, 1), separable(200, 2));
        let (m, rep) = oracle_train(&tr, &va, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let fps = va.fingerprints(cfg.fp).unwrap();
        let p = m.predict_many(&fps).unwrap();
        let s: Vec<f64> = p.iter().map(|r| r[0]).collect();
        let y: Vec<bool> = va.records.iter().map(|r| r.assays[0].1).collect();
        assert!(average_precision(&s, &y).unwrap() > 0.95);
        assert_eq!(rep.epochs.len(), 60);
        let back = OracleModel::from_checkpoint(&Checkpoint::from_bytes(&m.to_checkpoint().to_bytes()).unwrap()).unwrap();
        assert_eq!(back.predict(&fps[0]).unwrap(), m.predict(&fps[0]).unwrap());
    }

    #[test]
    fn all_negative_assay_is_degenerate() {
        let mut tr = separable(50, 1);
        for r in &mut tr.records {
            r.assays[0].1 = false;
        }
        let cfg = OracleConfig { fp: FingerprintSpec { radius: 0, bits: 64 }, epochs: 1, ..Default::default() };
        assert!(matches!(
            oracle_train(&tr, &separable(10, 2), &cfg, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(OracleError::DegenerateLabels(a)) if a == "hit"
        ));
    }
}
