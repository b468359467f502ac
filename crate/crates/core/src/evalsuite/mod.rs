//! Evaluation: sample logs, mode counting, diversity, target recovery,
//! oracle hit counts, latent-similarity correlation and exact flow oracles.

mod correlation;
mod flow;
mod metrics;
mod records;

pub use crate::embed::CorrelationReport;
pub use crate::oracle::average_precision;
pub use correlation::{correlation_analysis, pairs_tsv, permutation_null};
pub use flow::{log_partition, BruteForceFlow, MAX_STATES};
pub use metrics::{
    assay_hit_counts, build_report, calibrate_threshold, count_modes, curve_tsv, export_projection, histogram_tsv,
    max_sim_to_target, nearest_rank_percentile, parse_projection, reward_histogram, similarities_tsv, top_k_indices,
    topk_diversity, AssayHits, Diversity, MetricsReport, Mode, ModeSet, ProjectionRow, ReportOptions, Summary,
    DEFAULT_CUTOFF, DEFAULT_PERCENTILE,
};
pub use records::{RunMetrics, SampleRecord};

use crate::chemgraph::ChemError;
use crate::env::EnvError;
use crate::reward::RewardError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("need at least {need} samples, have {have}")]
    TooFewSamples { need: usize, have: usize },
    #[error("environment too large to enumerate ({0} states)")]
    TooLarge(usize),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Chem(#[from] ChemError),
    #[error("{0}")]
    Other(String),
}
