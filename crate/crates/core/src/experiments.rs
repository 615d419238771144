//! Metric computation and the experiment suite: link accuracy, convergence
//! history, SER sweep and symbol counting for every (dataset, seed) cell.
//!
//! Output directory layout after [`run_suite`]:
//! `metrics.csv` (one row per measurement), `history_<dataset>_<seed>.csv`,
//! `summary.csv` (mean and std over seeds next to published reference
//! values), `methodology.txt`, `plot.py`, `progress.txt` (one line per
//! finished cell) and `COMPLETE` once everything has been written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::baselines::{
    embedding_symbol_count, gae_train, reduction_ratio, sample_episodes, vgae_train, BaselineConfig, EmbeddingPrior,
    Method,
};
use crate::error::{Error, Result};
use crate::graph::{load_edge_list, split_links, synthetic, EdgeListDialect, KnowledgeGraph, LinkSplit, SparseMatrix};
use crate::numerics::sigmoid;
use crate::receiver::{db_improvement, ser_experiment, PriorSource, UniformPrior};
use crate::trainer::{decoder_link_score, train, TrainConfig};

/// Balanced link accuracy at threshold 0.5: test positives must score above
/// it and test negatives below it; a score of exactly 0.5 is an error.
pub fn accuracy_eval(mut scorer: impl FnMut(usize, usize) -> Result<f64>, split: &LinkSplit) -> Result<f64> {
    if split.test_positives.is_empty() {
        return Err(Error::Empty("test positives"));
    }
    if split.test_negatives.is_empty() {
        return Err(Error::Empty("test negatives"));
    }
    let mut check = |u: usize, v: usize| -> Result<f64> {
        let p = scorer(u, v)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::NonFinite(format!("score {p} for ({u}, {v})")));
        }
        Ok(p)
    };
    let mut hits = 0usize;
    for &(u, v) in &split.test_positives {
        hits += usize::from(check(u, v)? > 0.5);
    }
    for &(u, v) in &split.test_negatives {
        hits += usize::from(check(u, v)? < 0.5);
    }
    Ok(hits as f64 / (split.test_positives.len() + split.test_negatives.len()) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyReport {
    pub method: Method,
    pub dataset: String,
    pub expert_fraction: f64,
    pub iterations: usize,
    pub accuracy: f64,
    pub seed: u64,
}

/// One measurement row.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub dataset: String,
    pub method: String,
    pub metric: String,
    /// Sweep coordinate (iteration, SNR, clues per episode); absent for
    /// scalar metrics.
    pub x: Option<f64>,
    pub value: f64,
    pub seed: u64,
    pub config_hash: String,
}

pub const METRIC_HEADER: &str = "dataset,method,metric,x,value,seed,config_hash";

impl MetricRecord {
    pub fn csv_line(&self) -> String {
        let x = self.x.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.dataset, self.method, self.metric, x, self.value, self.seed, self.config_hash
        )
    }
}

pub fn write_metrics<W: Write>(records: &[MetricRecord], mut out: W) -> Result<()> {
    writeln!(out, "{METRIC_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

/// First 16 hex digits of the SHA-256 of a canonical configuration text.
pub fn config_hash(canonical: &str) -> String {
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    File { path: PathBuf, dialect: EdgeListDialect },
    /// Seeded collaboration-style stand-in.
    Synthetic { nodes: usize, edges: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    /// Used in CSV rows and file names; letters, digits, `-` and `_` only.
    pub name: String,
    pub source: DatasetSource,
}

impl DatasetSpec {
    pub fn load(&self) -> Result<KnowledgeGraph> {
        match &self.source {
            DatasetSource::File { path, dialect } => {
                let file = File::open(path).map_err(|e| {
                    Error::InvalidArgument(format!("dataset {}: cannot open {}: {e}", self.name, path.display()))
                })?;
                let (g, stats) = load_edge_list(BufReader::new(file), *dialect)?;
                log::info!(
                    "dataset {}: {} nodes, {} edges ({} self-loops dropped, {} duplicates collapsed)",
                    self.name,
                    g.node_count(),
                    g.edge_count(),
                    stats.self_loops_dropped,
                    stats.duplicates_collapsed
                );
                Ok(g)
            }
            DatasetSource::Synthetic { nodes, edges, seed } => synthetic::collaboration_graph(*nodes, *edges, *seed),
        }
    }
}

/// Everything one suite run needs. Each cell copies `train` with its own
/// seed; the baselines share the evaluator's architecture, features and
/// learning rate.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub datasets: Vec<DatasetSpec>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub expert_fraction: f64,
    pub train: TrainConfig,
    /// `None` matches the iSAC gradient-step budget `T·(decoder_steps + evaluator_steps)`.
    pub baseline_epochs: Option<usize>,
    pub snrs_db: Vec<f64>,
    pub ser_trials: usize,
    pub channel_gain: f64,
    pub episodes: usize,
    pub clues_per_episode: Vec<usize>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            datasets: Vec::new(),
            methods: Method::ALL.to_vec(),
            seeds: vec![0, 1, 2, 3, 4],
            expert_fraction: 0.05,
            train: TrainConfig::default(),
            baseline_epochs: None,
            snrs_db: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            ser_trials: 100_000,
            channel_gain: 1.0,
            episodes: 1000,
            clues_per_episode: vec![1, 2, 5, 10, 20],
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::InvalidArgument("no datasets configured".into()));
        }
        for d in &self.datasets {
            let ok = !d.name.is_empty() && d.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !ok {
                return Err(Error::InvalidArgument(format!("dataset name {:?}", d.name)));
            }
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods configured".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("no seeds configured".into()));
        }
        if !(self.expert_fraction > 0.0 && self.expert_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!("expert_fraction {}", self.expert_fraction)));
        }
        if self.ser_trials == 0 || self.episodes == 0 {
            return Err(Error::InvalidArgument("ser_trials and episodes must be at least 1".into()));
        }
        if self.snrs_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("snr list must be finite".into()));
        }
        if self.clues_per_episode.contains(&0) {
            return Err(Error::InvalidArgument("clues_per_episode entries must be at least 1".into()));
        }
        self.train.validate()
    }

    /// Stable text identifying the configuration, hashed into every row.
    pub fn canonical(&self) -> String {
        format!("{self:?}")
    }

    pub fn baseline_config(&self, seed: u64) -> BaselineConfig {
        let t = &self.train;
        BaselineConfig {
            epochs: self
                .baseline_epochs
                .unwrap_or(t.outer_iterations * (t.decoder_steps + t.evaluator_steps)),
            lr: t.lr,
            hidden_dim: t.hidden_dim,
            embedding_dim: t.embedding_dim,
            features: t.features,
            seed,
        }
    }
}

/// Published figures for side-by-side comparison, keyed by dataset family.
pub fn reference_value(dataset: &str, method: &str, metric: &str, x: Option<f64>) -> Option<f64> {
    let d = dataset.to_ascii_lowercase();
    let family = if d.contains("grqc") {
        "grqc"
    } else if d.contains("cora") {
        "cora"
    } else {
        return None;
    };
    let at_2db = x == Some(2.0);
    let v = match (family, method, metric) {
        ("grqc", "isac", "accuracy") => 0.8601,
        ("grqc", "vgae", "accuracy") => 0.8061,
        ("grqc", "gae", "accuracy") => 0.7779,
        ("grqc", "isac", "db_gain_vs_no-inference") if at_2db => 19.69,
        ("grqc", "isac", "db_gain_vs_vgae") if at_2db => 4.73,
        ("grqc", "isac", "db_gain_vs_gae") if at_2db => 15.26,
        ("grqc", "isac", "symbol_reduction_vs_vgae") => 0.8428,
        ("grqc", "isac", "symbol_reduction_vs_gae") => 0.7992,
        ("cora", "isac", "symbol_reduction_vs_vgae") => 0.8752,
        ("cora", "isac", "symbol_reduction_vs_gae") => 0.8501,
        _ => return None,
    };
    Some(v)
}

/// Appends records to `metrics.csv` as cells finish.
struct Sink {
    out: BufWriter<File>,
    all: Vec<MetricRecord>,
}

impl Sink {
    fn push(&mut self, r: MetricRecord) -> Result<()> {
        writeln!(self.out, "{}", r.csv_line())?;
        self.all.push(r);
        Ok(())
    }
}

struct Cell<'a> {
    dataset: &'a str,
    seed: u64,
    hash: &'a str,
}

impl Cell<'_> {
    fn record(&self, method: &str, metric: &str, x: Option<f64>, value: f64) -> MetricRecord {
        MetricRecord {
            dataset: self.dataset.to_string(),
            method: method.to_string(),
            metric: metric.to_string(),
            x,
            value,
            seed: self.seed,
            config_hash: self.hash.to_string(),
        }
    }
}

/// Runs every configured cell and writes the outputs into `out_dir`.
///
/// Datasets are loaded and checked before any training starts. Re-running
/// the same configuration reproduces every CSV byte for byte.
pub fn run_suite(cfg: &SuiteConfig, out_dir: &Path) -> Result<Vec<MetricRecord>> {
    cfg.validate()?;
    let graphs = cfg.datasets.iter().map(|d| d.load()).collect::<Result<Vec<_>>>()?;
    let hash = config_hash(&cfg.canonical());
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();

    fs::create_dir_all(out_dir)?;
    let _ = fs::remove_file(out_dir.join("COMPLETE"));
    let mut progress = BufWriter::new(File::create(out_dir.join("progress.txt"))?);
    let mut sink = Sink { out: BufWriter::new(File::create(out_dir.join("metrics.csv"))?), all: Vec::new() };
    writeln!(sink.out, "{METRIC_HEADER}")?;

    for (spec, g) in cfg.datasets.iter().zip(&graphs) {
        for &seed in &cfg.seeds {
            let cell = Cell { dataset: &spec.name, seed, hash: &hash };
            run_cell(cfg, &methods, g, &cell, out_dir, &mut sink)?;
            sink.out.flush()?;
            writeln!(progress, "done {} {seed}", spec.name)?;
            progress.flush()?;
        }
    }
    sink.out.flush()?;

    let mut summary = BufWriter::new(File::create(out_dir.join("summary.csv"))?);
    write_summary(&sink.all, &mut summary)?;
    summary.flush()?;
    fs::write(out_dir.join("methodology.txt"), methodology(cfg))?;
    fs::write(out_dir.join("plot.py"), PLOT_SCRIPT)?;
    let mut done = OpenOptions::new().create(true).write(true).truncate(true).open(out_dir.join("COMPLETE"))?;
    writeln!(done, "{hash}")?;
    Ok(sink.all)
}

fn run_cell(
    cfg: &SuiteConfig,
    methods: &[Method],
    g: &KnowledgeGraph,
    cell: &Cell<'_>,
    out_dir: &Path,
    sink: &mut Sink,
) -> Result<()> {
    let n = g.node_count();
    let split = split_links(g, cfg.expert_fraction, cell.seed)?;
    let phi = SparseMatrix::renormalized_laplacian(g);
    log::info!("cell {} seed {}: {} nodes, {} expert edges", cell.dataset, cell.seed, n, split.expert_edges.len());

    let uniform = UniformPrior { node_count: n };
    let mut isac = None;
    let mut gae = None;
    let mut vgae = None;
    for &method in methods {
        match method {
            Method::Isac => {
                let tcfg = TrainConfig { seed: cell.seed, checkpoint_dir: None, ..cfg.train.clone() };
                let out = train(g, &phi, &split, &tcfg)?;
                let path = out_dir.join(format!("history_{}_{}.csv", cell.dataset, cell.seed));
                let mut w = BufWriter::new(File::create(path)?);
                out.history.write_csv(&mut w)?;
                w.flush()?;
                for r in &out.history.records {
                    let x = Some(r.iteration as f64);
                    sink.push(cell.record("isac", "gamma_e", x, r.gamma_e))?;
                    sink.push(cell.record("isac", "decoder_obj", x, r.decoder_obj))?;
                    sink.push(cell.record("isac", "val_accuracy", x, r.val_accuracy))?;
                }
                let acc = accuracy_eval(|u, v| Ok(decoder_link_score(&out.decoder, u, v)), &split)?;
                sink.push(cell.record("isac", "accuracy", None, acc))?;
                isac = Some(out.decoder);
            }
            Method::Gae => {
                let (model, losses) = gae_train(g, &phi, &split, &cfg.baseline_config(cell.seed))?;
                push_losses(sink, cell, "gae", &losses)?;
                let acc = accuracy_eval(|u, v| Ok(embedding_score(model.embeddings(), u, v)), &split)?;
                sink.push(cell.record("gae", "accuracy", None, acc))?;
                gae = Some(model.embeddings().clone());
            }
            Method::Vgae => {
                let (model, losses) = vgae_train(g, &phi, &split, &cfg.baseline_config(cell.seed))?;
                push_losses(sink, cell, "vgae", &losses)?;
                let acc = accuracy_eval(|u, v| Ok(embedding_score(model.embeddings(), u, v)), &split)?;
                sink.push(cell.record("vgae", "accuracy", None, acc))?;
                vgae = Some(model.embeddings().clone());
            }
            Method::NoInference => {}
        }
    }

    // SER sweep on identical trials for every method
    let gae_prior = gae.as_ref().map(|e| EmbeddingPrior { embeddings: e });
    let vgae_prior = vgae.as_ref().map(|e| EmbeddingPrior { embeddings: e });
    let mut sources: Vec<(&str, &dyn PriorSource)> = Vec::new();
    for &method in methods {
        match method {
            Method::Isac => sources.push(("isac", isac.as_ref().expect("trained above"))),
            Method::Gae => sources.push(("gae", gae_prior.as_ref().expect("trained above"))),
            Method::Vgae => sources.push(("vgae", vgae_prior.as_ref().expect("trained above"))),
            Method::NoInference => sources.push(("no-inference", &uniform)),
        }
    }
    let points = ser_experiment(
        &sources,
        n,
        &split.test_positives,
        &cfg.snrs_db,
        cfg.ser_trials,
        cfg.channel_gain,
        cell.seed,
    )?;
    let mut ser: BTreeMap<(String, u64), f64> = BTreeMap::new();
    for p in &points {
        sink.push(cell.record(&p.method, "ser", Some(p.snr_db), p.ser))?;
        ser.insert((p.method.clone(), p.snr_db.to_bits()), p.ser);
    }
    for &(name, _) in &sources {
        for &(other, _) in &sources {
            if name == other {
                continue;
            }
            for &snr in &cfg.snrs_db {
                let reference = ser[&(other.to_string(), snr.to_bits())];
                let ours = ser[&(name.to_string(), snr.to_bits())];
                // undefined when the reference made no errors
                if reference > 0.0 {
                    let gain = db_improvement(reference, ours)?;
                    sink.push(cell.record(name, &format!("db_gain_vs_{other}"), Some(snr), gain))?;
                }
            }
        }
    }

    // transmitted-symbol counting
    for &c in &cfg.clues_per_episode {
        if c > n {
            continue;
        }
        let episodes = sample_episodes(g, cfg.episodes, c, cell.seed)?;
        let x = Some(c as f64);
        let totals: Vec<(Method, u64)> = methods
            .iter()
            .map(|&m| (m, episodes.iter().map(|&e| embedding_symbol_count(m, e)).sum()))
            .collect();
        for &(m, total) in &totals {
            sink.push(cell.record(m.name(), "symbols", x, total as f64))?;
        }
        let implicit: usize = episodes.iter().map(|e| e.implicit).sum();
        sink.push(cell.record("all", "implicit_terms", x, implicit as f64))?;
        if let Some(&(_, ours)) = totals.iter().find(|t| t.0 == Method::Isac) {
            for &(m, theirs) in totals.iter().filter(|t| t.0 != Method::Isac) {
                let metric = format!("symbol_reduction_vs_{}", m.name());
                sink.push(cell.record("isac", &metric, x, reduction_ratio(ours, theirs)))?;
            }
        }
    }
    Ok(())
}

fn embedding_score(e: &crate::numerics::Matrix, u: usize, v: usize) -> f64 {
    sigmoid(crate::numerics::dot(e.row(u), e.row(v)))
}

fn push_losses(sink: &mut Sink, cell: &Cell<'_>, method: &str, losses: &[f64]) -> Result<()> {
    for (epoch, &l) in losses.iter().enumerate() {
        sink.push(cell.record(method, "train_loss", Some((epoch + 1) as f64), l))?;
    }
    Ok(())
}

/// Mean and sample standard deviation over seeds for every metric except
/// per-iteration traces, with the published value where one exists.
pub fn write_summary<W: Write>(records: &[MetricRecord], mut out: W) -> Result<()> {
    const TRACES: [&str; 4] = ["gamma_e", "decoder_obj", "val_accuracy", "train_loss"];
    let mut groups: BTreeMap<(String, String, String, Option<u64>), Vec<(f64, Option<f64>)>> = BTreeMap::new();
    for r in records.iter().filter(|r| !TRACES.contains(&r.metric.as_str())) {
        let key = (r.dataset.clone(), r.method.clone(), r.metric.clone(), r.x.map(f64::to_bits));
        groups.entry(key).or_default().push((r.value, r.x));
    }
    writeln!(out, "dataset,method,metric,x,mean,std,seeds,reference")?;
    let mut rows: Vec<_> = groups.into_iter().collect();
    // order numerically by x inside each metric
    rows.sort_by(|a, b| {
        let (ka, kb) = (&a.0, &b.0);
        (&ka.0, &ka.1, &ka.2)
            .cmp(&(&kb.0, &kb.1, &kb.2))
            .then(a.1[0].1.unwrap_or(f64::NEG_INFINITY).total_cmp(&b.1[0].1.unwrap_or(f64::NEG_INFINITY)))
    });
    for ((dataset, method, metric, _), values) in rows {
        let x = values[0].1;
        let k = values.len() as f64;
        let mean = values.iter().map(|v| v.0).sum::<f64>() / k;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v.0 - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        let reference = reference_value(&dataset, &method, &metric, x).map(|v| v.to_string()).unwrap_or_default();
        let xs = x.map(|x| x.to_string()).unwrap_or_default();
        writeln!(out, "{dataset},{method},{metric},{xs},{mean},{std},{},{reference}", values.len())?;
    }
    Ok(())
}

fn methodology(cfg: &SuiteConfig) -> String {
    let t = &cfg.train;
    format!(
        "\
Link accuracy: balanced test set (held-out edges and an equal number of
non-edges); a pair counts as correct when a positive scores above 0.5 or a
negative below 0.5. iSAC is scored by its decoder table, sigma(d_u . d_v);
GAE and VGAE by their (mean) embeddings, sigma(z_u . z_v).

SER: each trial draws a held-out edge and an orientation; the clue end is
assumed known, the other end is sent as {bits} antipodal symbols over
AWGN with gain {gain} and decoded by MAP with the method's prior over
implicit terms (iSAC: decoder rule; GAE/VGAE: softmax of embedding inner
products; no-inference: uniform). All methods and SNR points share trials
and noise draws. {trials} trials per point. db_gain_vs_X = 10 log10(SER_X /
SER_method), omitted when SER_X is zero.

Symbols: episodes of c random clues; the implicit terms are the distinct
neighbors of the clues. iSAC sends c symbols, GAE/VGAE send c + r embedding
symbols, no-inference sends c + r index symbols. symbol_reduction_vs_X =
1 - symbols_isac / symbols_X. {episodes} episodes per c.

Training: T = {iters}, batch {batch}, evaluator lr {lr}, decoder lr {dlr},
embedding dim {emb}, hidden dim {hid}, features {features:?}, decoder
gradient {grad}, reduction {red}, expert fraction {frac}. Baselines train
for {epochs} full-batch epochs on the expert edges.

Reference column: figures published for the original datasets. The
synthetic stand-in graph, the accuracy protocol and the recovery scheme
differ from the original setup, so only orderings are comparable.
",
        bits = "ceil(log2 n)",
        gain = cfg.channel_gain,
        trials = cfg.ser_trials,
        episodes = cfg.episodes,
        iters = t.outer_iterations,
        batch = t.batch_size,
        lr = t.lr,
        dlr = t.decoder_lr(),
        emb = t.embedding_dim,
        hid = t.hidden_dim,
        features = t.features,
        grad = t.decoder_gradient,
        red = t.reduction,
        frac = cfg.expert_fraction,
        epochs = cfg.baseline_config(0).epochs,
    )
}

/// matplotlib script reading `metrics.csv` from its own directory.
pub const PLOT_SCRIPT: &str = r#"import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
rows = list(csv.DictReader(open(os.path.join(here, "metrics.csv"))))
series = defaultdict(lambda: defaultdict(list))
for r in rows:
    if r["x"] == "":
        continue
    series[(r["dataset"], r["method"], r["metric"])][float(r["x"])].append(float(r["value"]))


def mean_curve(key):
    pts = sorted(series[key].items())
    return [p[0] for p in pts], [sum(v) / len(v) for _, v in pts]


datasets = sorted({k[0] for k in series})
for d in datasets:
    fig, ax = plt.subplots(1, 4, figsize=(20, 4))
    for metric, label in [("gamma_e", "evaluator"), ("decoder_obj", "decoder")]:
        if (d, "isac", metric) in series:
            ax[0].plot(*mean_curve((d, "isac", metric)), label=label)
    ax[0].set_xlabel("iteration")
    ax[0].set_title("convergence")
    ax[0].legend()
    if (d, "isac", "val_accuracy") in series:
        ax[1].plot(*mean_curve((d, "isac", "val_accuracy")), label="isac")
    for r in rows:
        if r["dataset"] == d and r["metric"] == "accuracy" and r["method"] != "isac":
            ax[1].axhline(float(r["value"]), linestyle=":", label=r["method"] + " seed " + r["seed"])
    ax[1].set_xlabel("iteration")
    ax[1].set_title("link accuracy")
    ax[1].legend(fontsize=6)
    for m in ["isac", "vgae", "gae", "no-inference"]:
        if (d, m, "ser") in series:
            ax[2].semilogy(*mean_curve((d, m, "ser")), marker="o", label=m)
    ax[2].set_xlabel("SNR (dB)")
    ax[2].set_title("symbol error rate")
    ax[2].legend()
    for m in ["isac", "vgae", "gae", "no-inference"]:
        if (d, m, "symbols") in series:
            ax[3].plot(*mean_curve((d, m, "symbols")), marker="o", label=m)
    ax[3].set_xlabel("clues per episode")
    ax[3].set_title("transmitted symbols")
    ax[3].legend()
    fig.tight_layout()
    fig.savefig(os.path.join(here, "figures_" + d + ".png"), dpi=120)
"#;
