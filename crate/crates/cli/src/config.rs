//! Flat `key = value` run configuration with `[section]` headers.
//!
//! Every key has a default, unknown sections and keys are rejected, and
//! [`RunConfig::to_text`] writes the fully resolved configuration back in the
//! same format so a run can be repeated from its output directory alone.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pgfn_core::baselines::{BaselineConfig, Method};
use pgfn_core::chemgraph::FingerprintSpec;
use pgfn_core::data::SynthConfig;
use pgfn_core::embed::{EmbedderConfig, MorphMetric};
use pgfn_core::env::EnvConfig;
use pgfn_core::gflownet::{BackwardPolicy, PolicyConfig, TrainConfig};
use pgfn_core::net::NetConfig;
use pgfn_core::oracle::OracleConfig;

use crate::error::CliError;

pub const SEED_ENV: &str = "PGFN_SEED";

/// Sampler selected by `[sampler] method`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerMethod {
    GFlowNet,
    Baseline(Method),
}

impl SamplerMethod {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gflownet" => Some(SamplerMethod::GFlowNet),
            other => Method::parse(other).map(SamplerMethod::Baseline),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SamplerMethod::GFlowNet => "gflownet",
            SamplerMethod::Baseline(m) => m.as_str(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub vocab: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub embedder: Option<PathBuf>,
    pub oracle: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSection {
    pub vocab_size: usize,
    pub arities: Vec<usize>,
    pub feat_dim: usize,
    pub n: usize,
    pub noise: f64,
    pub n_assays: usize,
    pub targets: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSection {
    pub method: SamplerMethod,
    pub beta: f64,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub z_lr: f64,
    pub eps: f64,
    pub temperature: f64,
    pub replay_ratio: f64,
    pub buffer: usize,
    pub replay_seed: usize,
    pub pb: BackwardPolicy,
    /// Entropy coefficient; the method default when unset.
    pub alpha: Option<f64>,
    pub gamma: f64,
    pub episodes: usize,
    pub target_update: usize,
    pub polyak: Option<f64>,
    pub replay_capacity: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub methods: Vec<SamplerMethod>,
    pub calibration_samples: usize,
    pub cutoff: f64,
    pub topk: usize,
    pub window: usize,
    pub oracle: bool,
    pub hit_threshold: f64,
    pub hit_k: usize,
    pub hist_bins: usize,
    pub projection_k: usize,
    pub correlation_pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub paths: Paths,
    pub env: EnvConfig,
    pub fp: FingerprintSpec,
    pub synth: SynthSection,
    pub split: (f64, f64, f64),
    pub embedder: EmbedderConfig,
    pub sampler: SamplerSection,
    pub oracle: OracleConfig,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let tc = TrainConfig::default();
        let bc = BaselineConfig::for_method(Method::Sac);
        let net = NetConfig::default();
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            paths: Paths { vocab: None, dataset: None, labels: None, targets: None, embedder: None, oracle: None },
            env: EnvConfig::default(),
            fp: FingerprintSpec::default(),
            synth: SynthSection {
                vocab_size: synth.vocab_size,
                arities: synth.arities,
                feat_dim: synth.feat_dim,
                n: synth.n,
                noise: synth.noise,
                n_assays: synth.n_assays,
                targets: 3,
            },
            split: (0.8, 0.1, 0.1),
            embedder: EmbedderConfig::default(),
            sampler: SamplerSection {
                method: SamplerMethod::GFlowNet,
                beta: 64.0,
                steps: tc.steps,
                batch: tc.batch_size,
                lr: tc.lr,
                z_lr: tc.z_lr,
                eps: tc.epsilon,
                temperature: tc.temperature,
                replay_ratio: tc.replay_ratio,
                buffer: tc.buffer_capacity,
                replay_seed: tc.replay_seed_count,
                pb: BackwardPolicy::Uniform,
                alpha: None,
                gamma: bc.gamma,
                episodes: bc.episodes_per_step,
                target_update: bc.target_update,
                polyak: None,
                replay_capacity: bc.replay_capacity,
                embed_dim: net.embed_dim,
                hidden: net.hidden,
                depth: net.depth,
            },
            oracle: OracleConfig::default(),
            eval: EvalSection {
                methods: vec![SamplerMethod::GFlowNet, SamplerMethod::Baseline(Method::Random)],
                calibration_samples: 10_000,
                cutoff: 0.3,
                topk: 100,
                window: 10_000,
                oracle: true,
                hit_threshold: 0.7,
                hit_k: 1000,
                hist_bins: 20,
                projection_k: 1000,
                correlation_pairs: 50_000,
            },
        }
    }
}

fn num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn list<T: FromStr>(v: &str) -> Result<Vec<T>, String> {
    v.split(',').map(|x| num(x.trim())).collect()
}

fn optional(v: &str) -> Result<Option<f64>, String> {
    if v == "none" {
        Ok(None)
    } else {
        num(v).map(Some)
    }
}

fn bool_value(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn methods(v: &str) -> Result<Vec<SamplerMethod>, String> {
    v.split(',')
        .map(|m| SamplerMethod::parse(m.trim()).ok_or_else(|| format!("unknown method `{}`", m.trim())))
        .collect()
}

fn path_value(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string())
}

fn opt_value(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    fn set(&mut self, section: &str, key: &str, v: &str) -> Result<(), String> {
        let some_path = |v: &str| if v == "none" { None } else { Some(PathBuf::from(v)) };
        match (section, key) {
            ("", "seed") => self.seed = num(v)?,
            ("", "out_dir") => self.out_dir = PathBuf::from(v),
            ("paths", "vocab") => self.paths.vocab = some_path(v),
            ("paths", "dataset") => self.paths.dataset = some_path(v),
            ("paths", "labels") => self.paths.labels = some_path(v),
            ("paths", "targets") => self.paths.targets = some_path(v),
            ("paths", "embedder") => self.paths.embedder = some_path(v),
            ("paths", "oracle") => self.paths.oracle = some_path(v),
            ("env", "max_nodes") => self.env.max_nodes = num(v)?,
            ("env", "min_nodes") => self.env.min_nodes = num(v)?,
            ("fingerprint", "bits") => self.fp.bits = num(v)?,
            ("fingerprint", "radius") => self.fp.radius = num(v)?,
            ("synth", "vocab_size") => self.synth.vocab_size = num(v)?,
            ("synth", "arities") => self.synth.arities = list(v)?,
            ("synth", "feat_dim") => self.synth.feat_dim = num(v)?,
            ("synth", "n") => self.synth.n = num(v)?,
            ("synth", "noise") => self.synth.noise = num(v)?,
            ("synth", "n_assays") => self.synth.n_assays = num(v)?,
            ("synth", "targets") => self.synth.targets = num(v)?,
            ("split", "train") => self.split.0 = num(v)?,
            ("split", "val") => self.split.1 = num(v)?,
            ("split", "test") => self.split.2 = num(v)?,
            ("embedder", "latent_dim") => self.embedder.latent_dim = num(v)?,
            ("embedder", "hidden") => self.embedder.hidden = num(v)?,
            ("embedder", "tau") => self.embedder.tau = num(v)?,
            ("embedder", "batch") => self.embedder.batch = num(v)?,
            ("embedder", "epochs") => self.embedder.epochs = num(v)?,
            ("embedder", "lr") => self.embedder.lr = num(v)?,
            ("embedder", "weight_decay") => self.embedder.weight_decay = num(v)?,
            ("embedder", "patience") => self.embedder.patience = num(v)?,
            ("embedder", "pair_budget") => self.embedder.pair_budget = num(v)?,
            ("embedder", "morph_metric") => {
                self.embedder.morph_metric = MorphMetric::parse(v).ok_or_else(|| format!("unknown metric `{v}`"))?
            }
            ("sampler", "method") => {
                self.sampler.method = SamplerMethod::parse(v).ok_or_else(|| format!("unknown method `{v}`"))?
            }
            ("sampler", "beta") => self.sampler.beta = num(v)?,
            ("sampler", "steps") => self.sampler.steps = num(v)?,
            ("sampler", "batch") => self.sampler.batch = num(v)?,
            ("sampler", "lr") => self.sampler.lr = num(v)?,
            ("sampler", "z_lr") => self.sampler.z_lr = num(v)?,
            ("sampler", "eps") => self.sampler.eps = num(v)?,
            ("sampler", "temperature") => self.sampler.temperature = num(v)?,
            ("sampler", "replay_ratio") => self.sampler.replay_ratio = num(v)?,
            ("sampler", "buffer") => self.sampler.buffer = num(v)?,
            ("sampler", "replay_seed") => self.sampler.replay_seed = num(v)?,
            ("sampler", "pb") => {
                self.sampler.pb = BackwardPolicy::parse(v).ok_or_else(|| format!("pb must be uniform or learned, got `{v}`"))?
            }
            ("sampler", "alpha") => self.sampler.alpha = optional(v)?,
            ("sampler", "gamma") => self.sampler.gamma = num(v)?,
            ("sampler", "episodes") => self.sampler.episodes = num(v)?,
            ("sampler", "target_update") => self.sampler.target_update = num(v)?,
            ("sampler", "polyak") => self.sampler.polyak = optional(v)?,
            ("sampler", "replay_capacity") => self.sampler.replay_capacity = num(v)?,
            ("sampler", "embed_dim") => self.sampler.embed_dim = num(v)?,
            ("sampler", "hidden") => self.sampler.hidden = num(v)?,
            ("sampler", "depth") => self.sampler.depth = num(v)?,
            ("oracle", "hidden") => self.oracle.hidden = list(v)?,
            ("oracle", "lr") => self.oracle.lr = num(v)?,
            ("oracle", "epochs") => self.oracle.epochs = num(v)?,
            ("oracle", "batch") => self.oracle.batch = num(v)?,
            ("eval", "methods") => self.eval.methods = methods(v)?,
            ("eval", "calibration_samples") => self.eval.calibration_samples = num(v)?,
            ("eval", "cutoff") => self.eval.cutoff = num(v)?,
            ("eval", "topk") => self.eval.topk = num(v)?,
            ("eval", "window") => self.eval.window = num(v)?,
            ("eval", "oracle") => self.eval.oracle = bool_value(v)?,
            ("eval", "hit_threshold") => self.eval.hit_threshold = num(v)?,
            ("eval", "hit_k") => self.eval.hit_k = num(v)?,
            ("eval", "hist_bins") => self.eval.hist_bins = num(v)?,
            ("eval", "projection_k") => self.eval.projection_k = num(v)?,
            ("eval", "correlation_pairs") => self.eval.correlation_pairs = num(v)?,
            ("", k) => return Err(format!("unknown key `{k}`")),
            (s, k) => return Err(format!("unknown key `{k}` in [{s}]")),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        const SECTIONS: [&str; 9] = ["paths", "env", "fingerprint", "synth", "split", "embedder", "sampler", "oracle", "eval"];
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| CliError::Config(format!("line {}: {m}", n + 1));
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(err(format!("unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            cfg.set(&section, k.trim(), v.trim()).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` and applies the `PGFN_SEED` override.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::Config(format!("config file {} not found", path.display())),
            _ => CliError::Config(format!("cannot read {}: {e}", path.display())),
        })?;
        let mut cfg = Self::parse(&text)?;
        if let Ok(s) = std::env::var(SEED_ENV) {
            cfg.seed = s.trim().parse().map_err(|_| CliError::Config(format!("{SEED_ENV}=`{s}` is not an integer")))?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        let (a, b, c) = self.split;
        if a.min(b).min(c) < 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
            return bad("[split] fractions must be non-negative and sum to 1");
        }
        if self.fp.bits == 0 {
            return bad("[fingerprint] bits must be positive");
        }
        if self.env.min_nodes > self.env.max_nodes || self.env.max_nodes == 0 {
            return bad("[env] need 1 ≤ max_nodes and min_nodes ≤ max_nodes");
        }
        if self.eval.methods.is_empty() {
            return bad("[eval] methods must not be empty");
        }
        if self.sampler.alpha.is_some_and(|a| !(a > 0.0)) {
            return bad("[sampler] alpha must be positive");
        }
        self.embedder().validate().map_err(|e| CliError::Config(format!("[embedder] {e}")))?;
        self.train_config().validate().map_err(|e| CliError::Config(format!("[sampler] {e}")))?;
        if let SamplerMethod::Baseline(m) = self.sampler.method {
            self.baseline_config(m).validate().map_err(|e| CliError::Config(format!("[sampler] {e}")))?;
        }
        Ok(())
    }

    fn or_out(&self, p: &Option<PathBuf>, default: &str) -> PathBuf {
        p.clone().unwrap_or_else(|| self.out_dir.join(default))
    }

    pub fn vocab_path(&self) -> PathBuf {
        self.or_out(&self.paths.vocab, "data/vocab.tsv")
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.or_out(&self.paths.dataset, "data/dataset.tsv")
    }

    /// Label file; optional for training the oracle.
    pub fn labels_path(&self) -> PathBuf {
        self.or_out(&self.paths.labels, "data/labels.tsv")
    }

    pub fn targets_path(&self) -> PathBuf {
        self.or_out(&self.paths.targets, "data/targets.tsv")
    }

    pub fn embedder_path(&self) -> PathBuf {
        self.or_out(&self.paths.embedder, "embedder/gmc.ckpt")
    }

    pub fn oracle_path(&self) -> PathBuf {
        self.or_out(&self.paths.oracle, "oracle/oracle.ckpt")
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            vocab_size: self.synth.vocab_size,
            arities: self.synth.arities.clone(),
            feat_dim: self.synth.feat_dim,
            n: self.synth.n,
            noise: self.synth.noise,
            seed: self.seed,
            n_assays: self.synth.n_assays,
            fp: self.fp,
        }
    }

    pub fn embedder(&self) -> EmbedderConfig {
        EmbedderConfig { fp: self.fp, ..self.embedder }
    }

    pub fn oracle_config(&self) -> OracleConfig {
        OracleConfig { fp: self.fp, ..self.oracle.clone() }
    }

    pub fn net(&self) -> NetConfig {
        NetConfig { embed_dim: self.sampler.embed_dim, hidden: self.sampler.hidden, depth: self.sampler.depth }
    }

    pub fn policy_config(&self) -> PolicyConfig {
        PolicyConfig { net: self.net(), backward: self.sampler.pb }
    }

    pub fn train_config(&self) -> TrainConfig {
        let s = &self.sampler;
        TrainConfig {
            batch_size: s.batch,
            steps: s.steps,
            lr: s.lr,
            z_lr: s.z_lr,
            temperature: s.temperature,
            epsilon: s.eps,
            replay_ratio: s.replay_ratio,
            buffer_capacity: s.buffer,
            replay_seed_count: s.replay_seed,
        }
    }

    pub fn baseline_config(&self, method: Method) -> BaselineConfig {
        let s = &self.sampler;
        let base = BaselineConfig::for_method(method);
        BaselineConfig {
            method,
            alpha: s.alpha.unwrap_or(base.alpha),
            gamma: s.gamma,
            lr: s.lr,
            batch: s.batch,
            steps: s.steps,
            episodes_per_step: s.episodes,
            target_update: s.target_update,
            polyak: s.polyak,
            replay_capacity: s.replay_capacity,
            net: self.net(),
        }
    }

    /// The resolved configuration in the input format.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let p = &self.paths;
        let s = &self.sampler;
        let e = &self.embedder;
        let v = &self.eval;
        let _ = writeln!(o, "seed = {}\nout_dir = {}", self.seed, self.out_dir.display());
        let _ = writeln!(o, "\n[paths]");
        for (k, x) in [
            ("vocab", &p.vocab),
            ("dataset", &p.dataset),
            ("labels", &p.labels),
            ("targets", &p.targets),
            ("embedder", &p.embedder),
            ("oracle", &p.oracle),
        ] {
            let _ = writeln!(o, "{k} = {}", path_value(x));
        }
        let _ = writeln!(o, "\n[env]\nmax_nodes = {}\nmin_nodes = {}", self.env.max_nodes, self.env.min_nodes);
        let _ = writeln!(o, "\n[fingerprint]\nbits = {}\nradius = {}", self.fp.bits, self.fp.radius);
        let y = &self.synth;
        let _ = writeln!(
            o,
            "\n[synth]\nvocab_size = {}\narities = {}\nfeat_dim = {}\nn = {}\nnoise = {}\nn_assays = {}\ntargets = {}",
            y.vocab_size,
            join(&y.arities),
            y.feat_dim,
            y.n,
            y.noise,
            y.n_assays,
            y.targets
        );
        let _ = writeln!(o, "\n[split]\ntrain = {}\nval = {}\ntest = {}", self.split.0, self.split.1, self.split.2);
        let _ = writeln!(
            o,
            "\n[embedder]\nlatent_dim = {}\nhidden = {}\ntau = {}\nbatch = {}\nepochs = {}\nlr = {}\nweight_decay = {}\npatience = {}\npair_budget = {}\nmorph_metric = {}",
            e.latent_dim,
            e.hidden,
            e.tau,
            e.batch,
            e.epochs,
            e.lr,
            e.weight_decay,
            e.patience,
            e.pair_budget,
            e.morph_metric.as_string()
        );
        let _ = writeln!(
            o,
            "\n[sampler]\nmethod = {}\nbeta = {}\nsteps = {}\nbatch = {}\nlr = {}\nz_lr = {}\neps = {}\ntemperature = {}\nreplay_ratio = {}\nbuffer = {}\nreplay_seed = {}\npb = {}\nalpha = {}\ngamma = {}\nepisodes = {}\ntarget_update = {}\npolyak = {}\nreplay_capacity = {}\nembed_dim = {}\nhidden = {}\ndepth = {}",
            s.method.as_str(),
            s.beta,
            s.steps,
            s.batch,
            s.lr,
            s.z_lr,
            s.eps,
            s.temperature,
            s.replay_ratio,
            s.buffer,
            s.replay_seed,
            s.pb.as_str(),
            opt_value(s.alpha),
            s.gamma,
            s.episodes,
            s.target_update,
            opt_value(s.polyak),
            s.replay_capacity,
            s.embed_dim,
            s.hidden,
            s.depth
        );
        let _ = writeln!(
            o,
            "\n[oracle]\nhidden = {}\nlr = {}\nepochs = {}\nbatch = {}",
            join(&self.oracle.hidden),
            self.oracle.lr,
            self.oracle.epochs,
            self.oracle.batch
        );
        let methods: Vec<&str> = v.methods.iter().map(|m| m.as_str()).collect();
        let _ = writeln!(
            o,
            "\n[eval]\nmethods = {}\ncalibration_samples = {}\ncutoff = {}\ntopk = {}\nwindow = {}\noracle = {}\nhit_threshold = {}\nhit_k = {}\nhist_bins = {}\nprojection_k = {}\ncorrelation_pairs = {}",
            methods.join(","),
            v.calibration_samples,
            v.cutoff,
            v.topk,
            v.window,
            v.oracle,
            v.hit_threshold,
            v.hit_k,
            v.hist_bins,
            v.projection_k,
            v.correlation_pairs
        );
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_text_round_trips() {
        let text = "seed = 7\n[sampler]\nmethod = sac\nalpha = 0.5\npolyak = 0.01\n[embedder]\nmorph_metric = cosine_pca(4)\n[paths]\nlabels = x/labels.tsv\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.sampler.method, SamplerMethod::Baseline(Method::Sac));
        assert_eq!(cfg.sampler.polyak, Some(0.01));
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(RunConfig::parse(&RunConfig::default().to_text()).unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        for text in ["bogus = 1", "[sampler]\nsteps = 10\nstepz = 10", "[nope]\n", "[env]\nmax_nodes"] {
            assert!(matches!(RunConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
        let err = RunConfig::parse("[sampler]\n\nstepz = 3").unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("stepz"), "{err}");
    }

    #[test]
    fn values_are_validated() {
        assert!(RunConfig::parse("[split]\ntrain = 0.9").is_err());
        assert!(RunConfig::parse("[sampler]\nreplay_ratio = 1").is_err());
        assert!(RunConfig::parse("[sampler]\npb = maybe").is_err());
        assert!(RunConfig::parse("[eval]\nmethods = gflownet,nope").is_err());
        assert!(RunConfig::parse("[sampler]\nmethod = sql\ngamma = 0").is_err());
    }

    #[test]
    fn comments_and_defaults() {
        let cfg = RunConfig::parse("# tiny\nout_dir = runs/x  # trailing\n").unwrap();
        assert_eq!(cfg.out_dir, PathBuf::from("runs/x"));
        assert_eq!(cfg.dataset_path(), PathBuf::from("runs/x/data/dataset.tsv"));
        assert_eq!(cfg.baseline_config(Method::Sql).alpha, 0.1);
        assert_eq!(cfg.baseline_config(Method::Sac).alpha, 0.2);
    }
}
