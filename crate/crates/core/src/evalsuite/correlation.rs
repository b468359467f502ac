//! Latent-vs-morphology similarity correlation.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EvalError;
use crate::data::Dataset;
use crate::embed::{correlation_pairs, CorrelationReport, EmbedError, GmcModel};
use crate::reward::ConditioningMode;

impl From<EmbedError> for EvalError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::DegenerateData(m) => EvalError::DegenerateData(m),
            other => EvalError::Other(other.to_string()),
        }
    }
}

/// Pearson r between morphology similarity `d(y_i, y_j)` and latent
/// similarity `d̂` over sampled pairs of `dataset`.
pub fn correlation_analysis(
    model: &GmcModel,
    dataset: &Dataset,
    mode: ConditioningMode,
    pair_budget: usize,
    seed: u64,
) -> Result<CorrelationReport, EvalError> {
    Ok(correlation_pairs(model, dataset, mode, pair_budget, seed)?)
}

/// The same analysis after shuffling morphology vectors across records.
pub fn permutation_null(
    model: &GmcModel,
    dataset: &Dataset,
    mode: ConditioningMode,
    pair_budget: usize,
    seed: u64,
) -> Result<CorrelationReport, EvalError> {
    let mut shuffled = dataset.clone();
    let mut ys = shuffled.morphology();
    ys.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    for (r, y) in shuffled.records.iter_mut().zip(ys) {
        r.morph = y;
    }
    correlation_analysis(model, &shuffled, mode, pair_budget, seed)
}

/// `d\td_hat` rows for plotting.
pub fn pairs_tsv(report: &CorrelationReport) -> String {
    let mut out = String::from("d\td_hat\n");
    for (d, dh) in &report.pairs {
        let _ = writeln!(out, "{d}\t{dh}");
    }
    out
}
