//! Flat `key = value` run configuration with command-line overrides.
//!
//! A config file holds one `key = value` per line; `#` starts a comment.
//! `--set key=value` overrides are applied after the file, in order, so the
//! last assignment wins. Relative paths in a file resolve against the file's
//! directory; relative paths in overrides resolve against the working
//! directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use isac_core::baselines::{BaselineConfig, Method};
use isac_core::experiments::{DatasetSource, DatasetSpec, SuiteConfig};
use isac_core::graph::EdgeListDialect;
use isac_core::trainer::{ClueReduction, DecoderGradient, HarnessConfig};
use isac_core::{Activation, ChannelConfig, DecoderObjective, FeatureMode, TrainConfig};

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "ISAC_OUTPUT_DIR";

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

pub const KEYS: &[Key] = &[
    Key { name: "dataset", default: "", help: "edge-list path, or synthetic:NODES:EDGES:SEED (required)" },
    Key { name: "dataset_format", default: "whitespace", help: "edge-list separator: whitespace | csv" },
    Key { name: "dataset_name", default: "", help: "name used in CSV rows; defaults to the file stem or \"synthetic\"" },
    Key { name: "split", default: "", help: "split TSV from `isac split`; derived from expert_fraction and seed when empty" },
    Key { name: "expert_fraction", default: "0.05", help: "fraction of edges visible to the evaluator, in (0, 1)" },
    Key { name: "seed", default: "0", help: "seed for single runs (split, initialization, sampling)" },
    Key { name: "seeds", default: "0,1,2,3,4", help: "seed list for `report`" },
    Key { name: "method", default: "isac", help: "model trained by `train`: isac | gae | vgae" },
    Key { name: "methods", default: "isac,gae,vgae,no-inference", help: "methods compared by `report`" },
    Key { name: "iterations", default: "100", help: "outer training iterations T" },
    Key { name: "decoder_steps", default: "1", help: "decoder updates per outer iteration" },
    Key { name: "evaluator_steps", default: "1", help: "evaluator updates per outer iteration" },
    Key { name: "batch_size", default: "64", help: "clue nodes per update" },
    Key { name: "lr", default: "0.001", help: "evaluator (and baseline) learning rate" },
    Key { name: "decoder_lr", default: "", help: "decoder learning rate; empty means lr" },
    Key { name: "embedding_dim", default: "50", help: "embedding width" },
    Key { name: "hidden_dim", default: "50", help: "hidden GCN layer width" },
    Key { name: "output_activation", default: "sigmoid", help: "evaluator output layer: sigmoid | relu | identity" },
    Key { name: "features", default: "identity", help: "node features: identity | random:DIM" },
    Key { name: "feature_seed", default: "0", help: "seed of the random feature projection" },
    Key { name: "samples_per_clue", default: "1", help: "decoder samples per clue (sampled gradient)" },
    Key { name: "objective", default: "saturating", help: "decoder cost: saturating | non-saturating" },
    Key { name: "decoder_gradient", default: "sampled", help: "decoder gradient: sampled | exact" },
    Key { name: "reduction", default: "mean", help: "per-clue combination in a batch: mean | sum" },
    Key { name: "training_snr_db", default: "none", help: "clue channel during training: none (noiseless) or an SNR in dB" },
    Key { name: "validation_pairs", default: "256", help: "held-out pairs per class for the per-iteration accuracy" },
    Key { name: "monitor_clues", default: "256", help: "fixed clues for the per-iteration objectives" },
    Key { name: "checkpoint_every", default: "10", help: "iterations between checkpoints" },
    Key { name: "baseline_epochs", default: "matched", help: "GAE/VGAE epochs; matched = iterations x (decoder_steps + evaluator_steps)" },
    Key { name: "snr_db", default: "0,2,4,6,8,10", help: "SNR points of the SER sweep" },
    Key { name: "trials", default: "100000", help: "SER trials per point" },
    Key { name: "channel_gain", default: "1.0", help: "channel gain H" },
    Key { name: "episodes", default: "1000", help: "episodes per clue count in symbol counting" },
    Key { name: "clues_per_episode", default: "1,2,5,10,20", help: "clue counts in symbol counting" },
    Key { name: "harness_steps", default: "20000", help: "evaluator steps of the optimum harness" },
    Key { name: "harness_lr", default: "0.01", help: "Adam step size of the optimum harness" },
    Key { name: "output_dir", default: "out", help: "directory for artifacts; overridden by ISAC_OUTPUT_DIR" },
];

/// Help text listing every key with its default.
pub fn keys_help() -> String {
    let mut s = String::from("Configuration keys (config file `key = value`, or --set key=value):\n");
    for k in KEYS {
        let default = if k.default.is_empty() { "-" } else { k.default };
        let _ = writeln!(s, "  {:<18} [{default}] {}", k.name, k.help);
    }
    let _ = writeln!(s, "\n{OUTPUT_DIR_ENV} overrides output_dir.");
    s
}

/// A configuration problem; always names the key when one is involved.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Debug)]
struct Value {
    text: String,
    base: PathBuf,
}

/// Unvalidated assignments, defaults filled in.
#[derive(Clone, Debug)]
pub struct RawConfig {
    values: BTreeMap<&'static str, Value>,
}

impl RawConfig {
    pub fn defaults() -> Self {
        let values = KEYS
            .iter()
            .map(|k| (k.name, Value { text: k.default.to_string(), base: PathBuf::new() }))
            .collect();
        RawConfig { values }
    }

    fn assign(&mut self, key: &str, text: &str, base: &Path, origin: &str) -> Result<()> {
        let Some(k) = KEYS.iter().find(|k| k.name == key) else {
            return err(format!("{origin}: unknown key `{key}`"));
        };
        self.values.insert(k.name, Value { text: text.trim().to_string(), base: base.to_path_buf() });
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, base: &Path, source: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("{source}:{}: expected `key = value`", i + 1));
            };
            self.assign(k.trim(), v, base, &format!("{source}:{}", i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        self.apply_text(&text, &base, &path.display().to_string())
    }

    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let Some((k, v)) = assignment.split_once('=') else {
            return err(format!("--set {assignment:?}: expected key=value"));
        };
        self.assign(k.trim(), v, Path::new(""), "--set")
    }

    fn text(&self, key: &str) -> &str {
        &self.values[key].text
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let v = &self.values[key];
        if v.text.is_empty() {
            None
        } else {
            Some(v.base.join(&v.text))
        }
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.text(key).parse().map_err(|e| ConfigError(format!("key `{key}`: {e} (got {:?})", self.text(key))))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.text(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| ConfigError(format!("key `{key}`: {e} (got {s:?})"))))
            .collect()
    }
}

/// Where the graph comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetChoice {
    File { path: PathBuf, dialect: EdgeListDialect },
    Synthetic { nodes: usize, edges: usize, seed: u64 },
}

/// Validated configuration shared by every command.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub dataset: Option<DatasetChoice>,
    pub dataset_name: String,
    pub split: Option<PathBuf>,
    pub expert_fraction: f64,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub method: Method,
    pub methods: Vec<Method>,
    pub train: TrainConfig,
    pub baseline_epochs: Option<usize>,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub channel_gain: f64,
    pub episodes: usize,
    pub clues_per_episode: Vec<usize>,
    pub harness: HarnessConfig,
    pub output_dir: PathBuf,
    /// Resolved assignments except `output_dir`, hashed into CSV rows.
    pub canonical: String,
}

fn parse_features(text: &str, seed: u64) -> std::result::Result<FeatureMode, String> {
    match text {
        "identity" => Ok(FeatureMode::Identity),
        other => {
            let dim = other
                .strip_prefix("random:")
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|&d| d > 0)
                .ok_or_else(|| format!("expected identity or random:DIM, got {other:?}"))?;
            Ok(FeatureMode::RandomProjection { dim, seed })
        }
    }
}

fn parse_dataset(raw: &RawConfig) -> Result<Option<DatasetChoice>> {
    let text = raw.text("dataset");
    if text.is_empty() {
        return Ok(None);
    }
    if let Some(rest) = text.strip_prefix("synthetic:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let bad = || ConfigError(format!("key `dataset`: expected synthetic:NODES:EDGES:SEED, got {text:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let nodes = parts[0].parse().map_err(|_| bad())?;
        let edges = parts[1].parse().map_err(|_| bad())?;
        let seed = parts[2].parse().map_err(|_| bad())?;
        return Ok(Some(DatasetChoice::Synthetic { nodes, edges, seed }));
    }
    let dialect = match raw.text("dataset_format") {
        "whitespace" => EdgeListDialect::Whitespace,
        "csv" => EdgeListDialect::Csv,
        other => return err(format!("key `dataset_format`: expected whitespace or csv, got {other:?}")),
    };
    let path = raw.path("dataset").expect("non-empty");
    if !path.is_file() {
        return err(format!("key `dataset`: file {} does not exist", path.display()));
    }
    Ok(Some(DatasetChoice::File { path, dialect }))
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let dataset = parse_dataset(raw)?;
        let dataset_name = match (raw.text("dataset_name"), &dataset) {
            (name, _) if !name.is_empty() => name.to_string(),
            (_, Some(DatasetChoice::File { path, .. })) => {
                path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
            }
            _ => "synthetic".to_string(),
        };
        let name_ok = dataset_name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !name_ok {
            return err(format!("key `dataset_name`: {dataset_name:?} may only contain letters, digits, - and _"));
        }
        let split = raw.path("split");
        if let Some(p) = &split {
            if !p.is_file() {
                return err(format!("key `split`: file {} does not exist", p.display()));
            }
        }

        let seed: u64 = raw.parse("seed")?;
        let feature_seed: u64 = raw.parse("feature_seed")?;
        let features = parse_features(raw.text("features"), feature_seed)
            .map_err(|e| ConfigError(format!("key `features`: {e}")))?;
        let channel_gain: f64 = raw.parse("channel_gain")?;
        let training_channel = match raw.text("training_snr_db") {
            "none" | "" => None,
            _ => {
                let snr: f64 = raw.parse("training_snr_db")?;
                Some(
                    ChannelConfig::new(channel_gain, snr)
                        .map_err(|e| ConfigError(format!("key `training_snr_db`: {e}")))?,
                )
            }
        };
        let decoder_lr = match raw.text("decoder_lr") {
            "" => None,
            _ => Some(raw.parse("decoder_lr")?),
        };
        let train = TrainConfig {
            outer_iterations: raw.parse("iterations")?,
            decoder_steps: raw.parse("decoder_steps")?,
            evaluator_steps: raw.parse("evaluator_steps")?,
            batch_size: raw.parse("batch_size")?,
            lr: raw.parse("lr")?,
            decoder_lr,
            embedding_dim: raw.parse("embedding_dim")?,
            hidden_dim: raw.parse("hidden_dim")?,
            output_activation: raw.parse::<Activation>("output_activation")?,
            features,
            samples_per_clue: raw.parse("samples_per_clue")?,
            objective: raw.parse::<DecoderObjective>("objective")?,
            decoder_gradient: raw.parse::<DecoderGradient>("decoder_gradient")?,
            reduction: raw.parse::<ClueReduction>("reduction")?,
            seed,
            training_channel,
            validation_pairs: raw.parse("validation_pairs")?,
            monitor_clues: raw.parse("monitor_clues")?,
            checkpoint_every: raw.parse("checkpoint_every")?,
            checkpoint_dir: None,
        };
        // core messages already name the offending key
        train.validate().map_err(|e| ConfigError(e.to_string()))?;

        let expert_fraction: f64 = raw.parse("expert_fraction")?;
        if !(expert_fraction > 0.0 && expert_fraction < 1.0) {
            return err(format!("key `expert_fraction`: must lie in (0, 1), got {expert_fraction}"));
        }
        let method: Method = raw.parse("method")?;
        if method == Method::NoInference {
            return err("key `method`: no-inference has nothing to train");
        }
        let methods: Vec<Method> = raw.list("methods")?;
        if methods.is_empty() {
            return err("key `methods`: at least one method required");
        }
        let seeds: Vec<u64> = raw.list("seeds")?;
        if seeds.is_empty() {
            return err("key `seeds`: at least one seed required");
        }
        let baseline_epochs = match raw.text("baseline_epochs") {
            "matched" => None,
            _ => Some(raw.parse("baseline_epochs")?),
        };
        let snr_db: Vec<f64> = raw.list("snr_db")?;
        if snr_db.is_empty() || snr_db.iter().any(|s| !s.is_finite()) {
            return err("key `snr_db`: need one or more finite values");
        }
        let trials: usize = raw.parse("trials")?;
        if trials == 0 {
            return err("key `trials`: must be at least 1");
        }
        if channel_gain == 0.0 || !channel_gain.is_finite() {
            return err(format!("key `channel_gain`: must be finite and non-zero, got {channel_gain}"));
        }
        let episodes: usize = raw.parse("episodes")?;
        if episodes == 0 {
            return err("key `episodes`: must be at least 1");
        }
        let clues_per_episode: Vec<usize> = raw.list("clues_per_episode")?;
        if clues_per_episode.is_empty() || clues_per_episode.contains(&0) {
            return err("key `clues_per_episode`: need one or more positive counts");
        }
        let harness = HarnessConfig {
            steps: raw.parse("harness_steps")?,
            lr: raw.parse("harness_lr")?,
            hidden_dim: HarnessConfig::default().hidden_dim,
            embedding_dim: HarnessConfig::default().embedding_dim,
            seed,
        };
        if !(harness.lr > 0.0 && harness.lr.is_finite()) {
            return err(format!("key `harness_lr`: must be positive, got {}", harness.lr));
        }
        let output_dir = match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => raw.path("output_dir").ok_or_else(|| ConfigError("key `output_dir`: must not be empty".into()))?,
        };

        let canonical = raw
            .values
            .iter()
            .filter(|(k, _)| **k != "output_dir")
            .fold(String::new(), |mut s, (k, v)| {
                let _ = writeln!(s, "{k}={}", v.text);
                s
            });
        Ok(RunConfig {
            dataset,
            dataset_name,
            split,
            expert_fraction,
            seed,
            seeds,
            method,
            methods,
            train,
            baseline_epochs,
            snr_db,
            trials,
            channel_gain,
            episodes,
            clues_per_episode,
            harness,
            output_dir,
            canonical,
        })
    }

    pub fn load(config: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut raw = RawConfig::defaults();
        if let Some(path) = config {
            raw.apply_file(path)?;
        }
        for o in overrides {
            raw.apply_override(o)?;
        }
        Self::from_raw(&raw)
    }

    pub fn require_dataset(&self) -> Result<&DatasetChoice> {
        self.dataset.as_ref().ok_or_else(|| ConfigError("key `dataset`: required by this command".into()))
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        let source = match self.require_dataset()? {
            DatasetChoice::File { path, dialect } => DatasetSource::File { path: path.clone(), dialect: *dialect },
            DatasetChoice::Synthetic { nodes, edges, seed } => {
                DatasetSource::Synthetic { nodes: *nodes, edges: *edges, seed: *seed }
            }
        };
        Ok(DatasetSpec { name: self.dataset_name.clone(), source })
    }

    pub fn suite(&self) -> Result<SuiteConfig> {
        Ok(SuiteConfig {
            datasets: vec![self.dataset_spec()?],
            methods: self.methods.clone(),
            seeds: self.seeds.clone(),
            expert_fraction: self.expert_fraction,
            train: self.train.clone(),
            baseline_epochs: self.baseline_epochs,
            snrs_db: self.snr_db.clone(),
            ser_trials: self.trials,
            channel_gain: self.channel_gain,
            episodes: self.episodes,
            clues_per_episode: self.clues_per_episode.clone(),
        })
    }

    pub fn baseline(&self) -> BaselineConfig {
        let t = &self.train;
        BaselineConfig {
            epochs: self.baseline_epochs.unwrap_or(t.outer_iterations * (t.decoder_steps + t.evaluator_steps)),
            lr: t.lr,
            hidden_dim: t.hidden_dim,
            embedding_dim: t.embedding_dim,
            features: t.features,
            seed: self.seed,
        }
    }
}
