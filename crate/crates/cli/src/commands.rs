//! One function per subcommand. Every command writes its resolved config
//! next to its outputs and logs progress on stderr only, so output files are
//! a pure function of config, seed and inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pgfn_core::baselines::{random_run, sac_train, sql_train, BaselineConfig, Method};
use pgfn_core::chemgraph::{fingerprint, Fingerprint, FragmentVocab};
use pgfn_core::data::{
    generate_synthetic, labels_to_text, parse_labels, parse_targets, select_targets, targets_to_text, DataError,
    Dataset, Target,
};
use pgfn_core::embed::{self, export_latents, train_embedder, GmcModel};
use pgfn_core::env::Env;
use pgfn_core::evalsuite::{
    build_report, calibrate_threshold, correlation_analysis, count_modes, curve_tsv, export_projection, histogram_tsv,
    pairs_tsv, permutation_null, reward_histogram, similarities_tsv, topk_diversity, MetricsReport,
    ReportOptions, RunMetrics,
};
use pgfn_core::gflownet::{train, PolicyModel, ReplayBuffer};
use pgfn_core::oracle::{self, macro_average_precision, oracle_train, OracleModel};
use pgfn_core::reward::{make_target, ConditioningMode, LatentReward};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{RunConfig, SamplerMethod};
use crate::error::{load_checkpoint, read_artifact, runtime, write_artifact, CliError};

/// RNG stream ids; every stage draws from its own ChaCha stream of the run seed.
const SYNTH_STREAM: u64 = 1;
const EMBED_STREAM: u64 = 2;
const SAMPLER_STREAM: u64 = 3;
const ORACLE_STREAM: u64 = 4;
const CALIBRATION_STREAM: u64 = 5;

/// Mixed into the seed so the oracle never trains on the embedder's split.
const ORACLE_SPLIT_SALT: u64 = 0x6f72_6163_6c65;

const REWARD_RANGE: (f64, f64) = (0.5, 1.5);

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn write_resolved(dir: &Path, cfg: &RunConfig, command: &str) -> Result<(), CliError> {
    let text = format!("# pgfn {} {command}\n{}", env!("CARGO_PKG_VERSION"), cfg.to_text());
    write_artifact(&dir.join("config.resolved"), text)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    write_artifact(path, serde_json::to_string_pretty(value).map_err(runtime)? + "\n")
}

fn data_error(e: DataError) -> CliError {
    match e {
        DataError::VocabMismatch(m) => CliError::VersionMismatch(m),
        other => runtime(other),
    }
}

fn load_vocab(cfg: &RunConfig) -> Result<Arc<FragmentVocab>, CliError> {
    let path = cfg.vocab_path();
    let text = read_artifact(&path)?;
    FragmentVocab::parse(&text).map(Arc::new).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn load_env(cfg: &RunConfig) -> Result<(Arc<FragmentVocab>, Env), CliError> {
    let vocab = load_vocab(cfg)?;
    let env = Env::new(vocab.clone(), cfg.env).map_err(|e| CliError::Config(format!("[env] {e}")))?;
    Ok((vocab, env))
}

fn load_dataset(cfg: &RunConfig, vocab: &FragmentVocab) -> Result<Dataset, CliError> {
    Dataset::parse(&read_artifact(&cfg.dataset_path())?, Some(vocab)).map_err(data_error)
}

fn load_embedder(cfg: &RunConfig) -> Result<GmcModel, CliError> {
    let ck = load_checkpoint(&cfg.embedder_path(), embed::CHECKPOINT_KIND)?;
    GmcModel::from_checkpoint(&ck).map_err(|e| CliError::VersionMismatch(e.to_string()))
}

fn load_target(cfg: &RunConfig, vocab: &FragmentVocab, id: Option<&str>) -> Result<Target, CliError> {
    let targets = parse_targets(&read_artifact(&cfg.targets_path())?, vocab).map_err(data_error)?;
    match id {
        None => targets.into_iter().next().ok_or_else(|| CliError::MissingArtifact("targets file lists no targets".into())),
        Some(id) => targets
            .into_iter()
            .find(|t| t.id == id)
            .ok_or_else(|| CliError::Config(format!("unknown target `{id}`"))),
    }
}

fn mode_of(joint: bool) -> ConditioningMode {
    if joint {
        ConditioningMode::Joint
    } else {
        ConditioningMode::MorphOnly
    }
}

pub fn run_dir(cfg: &RunConfig, target: &str, mode: ConditioningMode, method: SamplerMethod) -> PathBuf {
    cfg.out_dir.join("runs").join(target).join(mode.as_str()).join(method.as_str()).join(format!("seed{}", cfg.seed))
}

pub fn eval_dir(cfg: &RunConfig, target: &str, mode: ConditioningMode) -> PathBuf {
    cfg.out_dir.join("eval").join(target).join(mode.as_str()).join(format!("seed{}", cfg.seed))
}

/// Target fingerprint and reward specification for a sampler or evaluation run.
struct TargetReward {
    target: Target,
    structure: Option<Fingerprint>,
    spec: pgfn_core::reward::RewardSpec,
}

fn target_reward(cfg: &RunConfig, model: &GmcModel, target: Target, mode: ConditioningMode) -> Result<TargetReward, CliError> {
    let structure = match &target.mol {
        Some(m) => Some(fingerprint(m, model.config.fp).map_err(runtime)?),
        None => None,
    };
    if mode == ConditioningMode::Joint && structure.is_none() {
        return Err(CliError::Config(format!("target `{}` has no structure; joint mode needs one", target.id)));
    }
    let given = if mode == ConditioningMode::Joint { structure.as_ref() } else { None };
    let spec = make_target(model, target.id.clone(), &target.morph, given, mode, cfg.sampler.beta).map_err(runtime)?;
    Ok(TargetReward { target, structure, spec })
}

pub fn gen_synth(cfg: &RunConfig) -> Result<(), CliError> {
    let synth = cfg.synth_config();
    let vocab = synth.vocab().map_err(|e| CliError::Config(format!("[synth] {e}")))?;
    let env = Env::new(Arc::new(vocab.clone()), cfg.env).map_err(|e| CliError::Config(format!("[env] {e}")))?;
    eprintln!("generating {} molecules over {} fragment types", synth.n, vocab.len());
    let (dataset, _) = generate_synthetic(&synth, &env, &mut stream(cfg.seed, SYNTH_STREAM)).map_err(data_error)?;
    let sel = select_targets(&dataset, cfg.synth.targets, &env, cfg.seed).map_err(data_error)?;
    write_artifact(&cfg.vocab_path(), vocab.to_text())?;
    write_artifact(&cfg.dataset_path(), sel.remaining.to_text())?;
    write_artifact(&cfg.labels_path(), labels_to_text(&sel.remaining))?;
    write_artifact(&cfg.targets_path(), targets_to_text(&sel.targets))?;
    let dir = cfg.out_dir.join("data");
    write_json(
        &dir.join("summary.json"),
        &json!({
            "records": sel.remaining.len(),
            "feat_dim": sel.remaining.feat_dim,
            "assays": sel.remaining.assay_ids(),
            "targets": sel.targets.iter().map(|t| &t.id).collect::<Vec<_>>(),
            "skipped_targets": sel.skipped,
        }),
    )?;
    write_resolved(&dir, cfg, "gen-synth")
}

pub fn train_embedder_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let vocab = load_vocab(cfg)?;
    let dataset = load_dataset(cfg, &vocab)?;
    let (train, val, test) = dataset.split(cfg.split, cfg.seed).map_err(data_error)?;
    eprintln!("embedder: {} train, {} validation, {} test records", train.len(), val.len(), test.len());
    let (model, report) =
        train_embedder(&train, &val, &cfg.embedder(), &mut stream(cfg.seed, EMBED_STREAM)).map_err(runtime)?;
    let dir = cfg.out_dir.join("embedder");
    write_artifact(&cfg.embedder_path(), model.to_checkpoint().to_bytes())?;
    write_artifact(&dir.join("epochs.tsv"), report.to_tsv())?;

    let budget = cfg.eval.correlation_pairs;
    let morph = correlation_analysis(&model, &test, ConditioningMode::MorphOnly, budget, cfg.seed).map_err(runtime)?;
    let joint = correlation_analysis(&model, &test, ConditioningMode::Joint, budget, cfg.seed).map_err(runtime)?;
    let shuffled = permutation_null(&model, &test, ConditioningMode::MorphOnly, budget, cfg.seed).map_err(runtime)?;
    write_artifact(&dir.join("correlation_morph.tsv"), pairs_tsv(&morph))?;
    write_artifact(&dir.join("correlation_joint.tsv"), pairs_tsv(&joint))?;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "epochs_run": report.epochs.len(),
            "best_epoch": report.best_epoch,
            "best_val_r": report.epochs.last().map(|e| e.best_r),
            "test_pairs": morph.len(),
            "test_r_morph": morph.r,
            "test_r_joint": joint.r,
            "test_r_null": shuffled.r,
        }),
    )?;
    let fps = test.fingerprints(model.config.fp).map_err(data_error)?;
    let ids: Vec<String> = test.records.iter().map(|r| r.id.clone()).collect();
    write_artifact(&dir.join("latents.tsv"), export_latents(&ids, &model.embed_structures(&fps).map_err(runtime)?))?;
    eprintln!("embedder: best epoch {}, test r {:.3} (null {:.3})", report.best_epoch, morph.r, shuffled.r);
    write_resolved(&dir, cfg, "train-embedder")
}

pub fn train_sampler(cfg: &RunConfig, method: SamplerMethod, target: Option<&str>, joint: bool) -> Result<(), CliError> {
    let (vocab, env) = load_env(cfg)?;
    let model = load_embedder(cfg)?;
    let mode = mode_of(joint);
    let tr = target_reward(cfg, &model, load_target(cfg, &vocab, target)?, mode)?;
    let reward = LatentReward::new(&model, &tr.spec);
    let mut rng = stream(cfg.seed, SAMPLER_STREAM);
    let mut metrics = RunMetrics::new(tr.target.id.clone(), method.as_str(), cfg.seed, model.config.fp);
    let dir = run_dir(cfg, &tr.target.id, mode, method);
    eprintln!("{}: target {} ({}), {} steps", method.as_str(), tr.target.id, mode.as_str(), cfg.sampler.steps);
    let mut losses = String::new();
    match method {
        SamplerMethod::GFlowNet => {
            let tc = cfg.train_config();
            let mut policy = PolicyModel::new(&env, cfg.policy_config(), &mut rng).map_err(runtime)?;
            let replay = match (&tr.target.mol, joint) {
                (Some(mol), true) => Some(
                    ReplayBuffer::seeded(&env, mol, tc.replay_seed_count, tc.buffer_capacity, &mut rng).map_err(runtime)?,
                ),
                _ => None,
            };
            let report = train(&mut policy, &env, &reward, &tc, replay.as_ref(), &mut rng, &mut metrics).map_err(runtime)?;
            losses.push_str("step\tloss\tlog_z\n");
            for (i, (l, z)) in report.losses.iter().zip(&report.log_z).enumerate() {
                losses.push_str(&format!("{i}\t{l}\t{z}\n"));
            }
            write_artifact(&dir.join("policy.ckpt"), policy.to_checkpoint(&env).to_bytes())?;
        }
        SamplerMethod::Baseline(m) => {
            let bc = cfg.baseline_config(m);
            bc.validate().map_err(|e| CliError::Config(format!("[sampler] {e}")))?;
            match m {
                Method::Random => random_run(&env, &reward, &bc, &mut rng, &mut metrics).map_err(runtime)?,
                Method::Sql => {
                    let (agent, ls) = sql_train(&env, &reward, &bc, &mut rng, &mut metrics).map_err(runtime)?;
                    losses.push_str("step\tloss\n");
                    for (i, l) in ls.iter().enumerate() {
                        losses.push_str(&format!("{i}\t{l}\n"));
                    }
                    write_artifact(&dir.join("policy.ckpt"), agent.to_checkpoint().to_bytes())?;
                }
                Method::Sac => {
                    let (agent, rep) = sac_train(&env, &reward, &bc, &mut rng, &mut metrics).map_err(runtime)?;
                    losses.push_str("step\tcritic_loss\tactor_loss\n");
                    for (i, (c, a)) in rep.critic_losses.iter().zip(&rep.actor_losses).enumerate() {
                        losses.push_str(&format!("{i}\t{c}\t{a}\n"));
                    }
                    write_artifact(&dir.join("policy.ckpt"), agent.to_checkpoint().to_bytes())?;
                }
            }
        }
    }
    if !losses.is_empty() {
        write_artifact(&dir.join("losses.tsv"), losses)?;
    }
    write_artifact(&dir.join("samples.log"), metrics.to_log())?;
    eprintln!("{}: {} samples logged", method.as_str(), metrics.len());
    write_resolved(&dir, cfg, "train-sampler")
}

pub fn train_oracle_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let vocab = load_vocab(cfg)?;
    let mut dataset = load_dataset(cfg, &vocab)?;
    let labels_path = cfg.labels_path();
    if cfg.paths.labels.is_some() || labels_path.exists() {
        let labels = parse_labels(&read_artifact(&labels_path)?).map_err(data_error)?;
        let unmatched = dataset.apply_labels(&labels);
        if unmatched > 0 {
            eprintln!("oracle: {unmatched} labels name molecules outside the dataset");
        }
    }
    let (train, val, test) = dataset.split(cfg.split, cfg.seed ^ ORACLE_SPLIT_SALT).map_err(data_error)?;
    let oc = cfg.oracle_config();
    let (model, report) = oracle_train(&train, &val, &oc, &mut stream(cfg.seed, ORACLE_STREAM)).map_err(runtime)?;
    let dir = cfg.out_dir.join("oracle");
    write_artifact(&cfg.oracle_path(), model.to_checkpoint().to_bytes())?;
    let mut tsv = String::from("epoch\tloss\tval_ap\n");
    for e in &report.epochs {
        tsv.push_str(&format!("{}\t{}\t{}\n", e.epoch, e.loss, e.val_ap));
    }
    write_artifact(&dir.join("epochs.tsv"), tsv)?;
    let test_ap = macro_average_precision(&model, &test, oc.fp).ok();
    write_json(
        &dir.join("summary.json"),
        &json!({
            "assays": model.assays,
            "best_epoch": report.best_epoch,
            "best_val_ap": report.epochs[report.best_epoch].val_ap,
            "test_macro_ap": test_ap,
        }),
    )?;
    eprintln!("oracle: best epoch {}, test macro AP {test_ap:?}", report.best_epoch);
    write_resolved(&dir, cfg, "train-oracle")
}

pub fn evaluate(
    cfg: &RunConfig,
    target: Option<&str>,
    methods: Option<&[SamplerMethod]>,
    joint: bool,
) -> Result<(), CliError> {
    let (vocab, env) = load_env(cfg)?;
    let model = load_embedder(cfg)?;
    let fp = model.config.fp;
    let mode = mode_of(joint);
    let tr = target_reward(cfg, &model, load_target(cfg, &vocab, target)?, mode)?;
    let reward = LatentReward::new(&model, &tr.spec);
    let oracle = if cfg.eval.oracle {
        let ck = load_checkpoint(&cfg.oracle_path(), oracle::CHECKPOINT_KIND)?;
        let o = OracleModel::from_checkpoint(&ck).map_err(|e| CliError::VersionMismatch(e.to_string()))?;
        if o.fp_bits != fp.bits {
            return Err(CliError::VersionMismatch(format!(
                "oracle reads {}-bit fingerprints, embedder {}",
                o.fp_bits, fp.bits
            )));
        }
        Some(o)
    } else {
        None
    };

    let mut calibration = RunMetrics::new(tr.target.id.clone(), "random", cfg.seed, fp);
    let cal_cfg = BaselineConfig { steps: cfg.eval.calibration_samples, batch: 1, ..BaselineConfig::for_method(Method::Random) };
    random_run(&env, &reward, &cal_cfg, &mut stream(cfg.seed, CALIBRATION_STREAM), &mut calibration).map_err(runtime)?;
    let threshold = calibrate_threshold(&calibration).map_err(runtime)?;
    let dir = eval_dir(cfg, &tr.target.id, mode);
    write_json(&dir.join("calibration.json"), &json!({ "samples": calibration.len(), "percentile": 0.9, "threshold": threshold }))?;
    eprintln!("evaluate: target {} ({}), threshold {threshold:.4}", tr.target.id, mode.as_str());

    for &method in methods.unwrap_or(&cfg.eval.methods) {
        let log = read_artifact(&run_dir(cfg, &tr.target.id, mode, method).join("samples.log"))?;
        let samples = RunMetrics::from_log(&log, &vocab, fp).map_err(runtime)?;
        let opts = ReportOptions {
            mode,
            threshold,
            cutoff: cfg.eval.cutoff,
            topk: cfg.eval.topk,
            window: cfg.eval.window,
            target: tr.structure.as_ref(),
            oracle: oracle.as_ref(),
            hit_threshold: cfg.eval.hit_threshold,
            hit_k: cfg.eval.hit_k,
        };
        let report = build_report(&samples, &opts).map_err(runtime)?;
        let name = method.as_str();
        write_artifact(&dir.join(format!("{name}.json")), report.to_json() + "\n")?;
        let (lo, hi) = REWARD_RANGE;
        let hist = reward_histogram(&samples, lo, hi, cfg.eval.hist_bins);
        write_artifact(&dir.join(format!("{name}.reward_hist.tsv")), histogram_tsv(&hist, lo, hi))?;
        let modes = count_modes(&samples, threshold, cfg.eval.cutoff);
        write_artifact(&dir.join(format!("{name}.modes.tsv")), curve_tsv(&modes.curve))?;
        if let Ok(d) = topk_diversity(&samples, cfg.eval.topk) {
            write_artifact(&dir.join(format!("{name}.similarity.tsv")), similarities_tsv(&d))?;
        }
        let projection = export_projection(&samples, tr.structure.as_ref(), cfg.eval.projection_k).map_err(runtime)?;
        write_artifact(&dir.join(format!("{name}.projection.tsv")), projection)?;
        eprintln!(
            "evaluate: {name}: {} samples, {} modes, max sim to target {:?}",
            report.num_samples, report.num_modes, report.max_sim_to_target
        );
    }
    write_resolved(&dir, cfg, "evaluate")
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() < 2 { 0.0 } else { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) };
        Some(MeanStd { mean, std: var.sqrt() })
    }

    fn show(x: Option<Self>) -> String {
        x.map_or_else(|| "n/a".to_string(), |m| format!("{:.4} ± {:.4}", m.mean, m.std))
    }

    fn tsv(x: Option<Self>) -> String {
        x.map_or_else(|| "nan\tnan".to_string(), |m| format!("{}\t{}", m.mean, m.std))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub target: String,
    pub mode: String,
    pub method: String,
    pub runs: usize,
    pub modes: Option<MeanStd>,
    pub max_sim: Option<MeanStd>,
    pub topk_sim: Option<MeanStd>,
    pub mean_reward: Option<MeanStd>,
}

fn collect_json(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_json(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "json") {
            out.push(p);
        }
    }
    Ok(())
}

/// Aggregates every metrics report under `dir` into one row per
/// (target, mode, method) and writes `summary.tsv` into `dir`.
pub fn report(dir: &Path) -> Result<Vec<SummaryRow>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::MissingArtifact(dir.display().to_string()));
    }
    let mut files = Vec::new();
    collect_json(dir, &mut files).map_err(runtime)?;
    let mut groups: BTreeMap<(String, String, String), Vec<MetricsReport>> = BTreeMap::new();
    for f in files {
        // Calibration and summary files are not metrics reports.
        if let Ok(r) = serde_json::from_str::<MetricsReport>(&read_artifact(&f)?) {
            groups.entry((r.target_id.clone(), r.mode.clone(), r.method.clone())).or_default().push(r);
        }
    }
    if groups.is_empty() {
        return Err(CliError::MissingArtifact(format!("no metrics reports under {}", dir.display())));
    }
    let rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((target, mode, method), rs)| {
            let pick = |f: &dyn Fn(&MetricsReport) -> Option<f64>| -> Option<MeanStd> {
                MeanStd::of(&rs.iter().filter_map(f).collect::<Vec<_>>())
            };
            SummaryRow {
                runs: rs.len(),
                modes: pick(&|r| Some(r.num_modes as f64)),
                max_sim: pick(&|r| r.max_sim_to_target),
                topk_sim: pick(&|r| r.topk_similarity.as_ref().map(|s| s.mean)),
                mean_reward: pick(&|r| Some(r.mean_raw_reward)),
                target,
                mode,
                method,
            }
        })
        .collect();
    let mut tsv = String::from(
        "target\tmode\tmethod\truns\tmodes_mean\tmodes_std\tmax_sim_mean\tmax_sim_std\ttopk_sim_mean\ttopk_sim_std\treward_mean\treward_std\n",
    );
    for r in &rows {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.target,
            r.mode,
            r.method,
            r.runs,
            MeanStd::tsv(r.modes),
            MeanStd::tsv(r.max_sim),
            MeanStd::tsv(r.topk_sim),
            MeanStd::tsv(r.mean_reward)
        ));
    }
    write_artifact(&dir.join("summary.tsv"), tsv)?;
    Ok(rows)
}

/// Human-readable version of [`report`] rows.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let header = ["target", "mode", "method", "runs", "modes", "max sim to target", "top-k similarity", "mean reward"];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.target.clone(),
                r.mode.clone(),
                r.method.clone(),
                r.runs.to_string(),
                MeanStd::show(r.modes),
                MeanStd::show(r.max_sim),
                MeanStd::show(r.topk_sim),
                MeanStd::show(r.mean_reward),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let padded: Vec<String> =
            cells.iter().zip(&widths).map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count()))).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for row in &body {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_uses_sample_deviation() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.std, 1.0);
        assert_eq!(MeanStd::of(&[5.0]).unwrap().std, 0.0);
        assert!(MeanStd::of(&[]).is_none());
    }

    #[test]
    fn streams_are_independent() {
        use rand::Rng;
        let a: u64 = stream(3, 1).random();
        let b: u64 = stream(3, 2).random();
        assert_ne!(a, b);
        assert_eq!(a, stream(3, 1).random::<u64>());
    }
}
