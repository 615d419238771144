//! Command implementations. Everything a command reads is loaded and
//! validated before its output directory is touched.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use isac_core::baselines::{gae_train, vgae_train, EmbeddingPrior, GaeModel, Method, VgaeModel};
use isac_core::baselines::{embedding_symbol_count, reduction_ratio, sample_episodes};
use isac_core::diagnostics::{gradient_suites, write_gradcheck_csv};
use isac_core::experiments::{accuracy_eval, config_hash, run_suite, write_metrics, MetricRecord};
use isac_core::graph::{renormalized_laplacian, split_links, EdgeListDialect, SparseMatrix};
use isac_core::numerics::{dot, sigmoid};
use isac_core::receiver::{ser_experiment, PriorSource, UniformPrior};
use isac_core::trainer::{
    decoder_link_score, initial_models, joint_checkpoint, theorem1_harness, train as train_isac, TrainConfig,
};
use isac_core::{load_edge_list, Checkpoint, DecoderModel, FeatureMode, KnowledgeGraph, LinkSplit, Matrix};

use crate::config::{ConfigError, RunConfig};
use crate::{ConfigArgs, EvalArgs, EvalKind, IngestArgs};

/// Exit code 2 for `Config`, 1 for `Runtime`.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<isac_core::Error> for Failure {
    fn from(e: isac_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn config_failure(context: &str) -> impl Fn(isac_core::Error) -> Failure + '_ {
    move |e| Failure::Config(format!("{context}: {e}"))
}

struct Prepared {
    cfg: RunConfig,
    graph: KnowledgeGraph,
    split: LinkSplit,
    hash: String,
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    if let Some(path) = &args.config {
        if !path.is_file() {
            return Err(Failure::Config(format!("config file {} does not exist", path.display())));
        }
    }
    Ok(RunConfig::load(args.config.as_deref(), &args.set)?)
}

fn load_graph(cfg: &RunConfig) -> Result<KnowledgeGraph> {
    let spec = cfg.dataset_spec()?;
    spec.load().map_err(config_failure("key `dataset`"))
}

fn prepare(args: &ConfigArgs) -> Result<Prepared> {
    let cfg = load_config(args)?;
    let graph = load_graph(&cfg)?;
    let split = match &cfg.split {
        Some(path) => {
            let file = File::open(path).map_err(|e| Failure::Config(format!("key `split`: {e}")))?;
            let split = LinkSplit::read_tsv(BufReader::new(file)).map_err(config_failure("key `split`"))?;
            split.validate(&graph).map_err(config_failure("key `split` does not match the dataset"))?;
            split
        }
        None => split_links(&graph, cfg.expert_fraction, cfg.seed).map_err(config_failure("key `expert_fraction`"))?,
    };
    let hash = config_hash(&cfg.canonical);
    Ok(Prepared { cfg, graph, split, hash })
}

fn features_tag(mode: FeatureMode) -> String {
    match mode {
        FeatureMode::Identity => "identity".into(),
        FeatureMode::RandomProjection { dim, seed } => format!("random:{dim}:{seed}"),
    }
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> isac_core::Result<()>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Sends CSV to `--out` or stdout.
fn emit(out: Option<&PathBuf>, write: impl FnOnce(&mut dyn Write) -> isac_core::Result<()>) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

pub fn train(args: &ConfigArgs) -> Result<()> {
    let p = prepare(args)?;
    let cfg = &p.cfg;
    let dir = &cfg.output_dir;
    let phi = SparseMatrix::renormalized_laplacian(&p.graph);
    fs::create_dir_all(dir)?;
    write_file(&dir.join("split.tsv"), |w| p.split.write_tsv(w))?;
    let n = p.graph.node_count();

    let mut ck = match cfg.method {
        Method::Isac => {
            let tcfg = TrainConfig { checkpoint_dir: Some(dir.clone()), ..cfg.train.clone() };
            let out = train_isac(&p.graph, &phi, &p.split, &tcfg)?;
            write_file(&dir.join("history.csv"), |w| out.history.write_csv(w))?;
            // wall-clock lives outside the CSV outputs so those stay reproducible
            let mut timing = String::from("iteration\tseconds\n");
            for r in &out.history.records {
                timing.push_str(&format!("{}\t{:.3}\n", r.iteration, r.seconds));
            }
            fs::write(dir.join("timing.txt"), timing)?;
            let acc = accuracy_eval(|u, v| Ok(decoder_link_score(&out.decoder, u, v)), &p.split)?;
            log::info!("isac decoder link accuracy {acc:.4} on {} test pairs", 2 * p.split.test_positives.len());
            joint_checkpoint(&out.evaluator, &out.decoder, cfg.train.outer_iterations)
        }
        Method::Gae | Method::Vgae => {
            let bcfg = cfg.baseline();
            let (ck, losses, emb) = if cfg.method == Method::Gae {
                let (m, l) = gae_train(&p.graph, &phi, &p.split, &bcfg)?;
                (m.to_checkpoint(), l, m.embeddings().clone())
            } else {
                let (m, l) = vgae_train(&p.graph, &phi, &p.split, &bcfg)?;
                (m.to_checkpoint(), l, m.embeddings().clone())
            };
            let mut text = String::from("epoch,loss\n");
            for (i, l) in losses.iter().enumerate() {
                text.push_str(&format!("{},{l}\n", i + 1));
            }
            fs::write(dir.join("loss.csv"), text)?;
            let acc = accuracy_eval(|u, v| Ok(sigmoid(dot(emb.row(u), emb.row(v)))), &p.split)?;
            log::info!("{} link accuracy {acc:.4}", cfg.method);
            ck
        }
        Method::NoInference => unreachable!("rejected by config validation"),
    };
    ck.set_meta("features", &features_tag(cfg.train.features));
    ck.set_meta("config_hash", &p.hash);
    ck.save(dir.join("model.txt"))?;
    log::info!("trained {} on {} nodes; artifacts in {}", cfg.method, n, dir.display());
    Ok(())
}

/// A trained model's link scorer and destination prior.
enum Loaded {
    Isac(DecoderModel),
    Embeddings(Method, Matrix),
}

impl Loaded {
    fn method(&self) -> Method {
        match self {
            Loaded::Isac(_) => Method::Isac,
            Loaded::Embeddings(m, _) => *m,
        }
    }

    fn score(&self, u: usize, v: usize) -> f64 {
        match self {
            Loaded::Isac(d) => decoder_link_score(d, u, v),
            Loaded::Embeddings(_, e) => sigmoid(dot(e.row(u), e.row(v))),
        }
    }
}

fn read_checkpoint(path: Option<&PathBuf>) -> Result<Checkpoint> {
    let path = path.ok_or_else(|| Failure::Config("--checkpoint is required for this evaluation".into()))?;
    if !path.is_file() {
        return Err(Failure::Config(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(Checkpoint::load(path)?)
}

fn load_model(ck: &Checkpoint, cfg: &RunConfig, graph: &KnowledgeGraph) -> Result<Loaded> {
    let n = graph.node_count();
    let nodes: usize = ck.meta_parse("nodes")?;
    if nodes != n {
        return Err(Failure::Runtime(format!("incompatible checkpoint: {nodes} nodes, dataset has {n}")));
    }
    let want = features_tag(cfg.train.features);
    if let Some(have) = ck.meta("features") {
        if have != want {
            return Err(Failure::Runtime(format!(
                "incompatible checkpoint: trained with features {have}, config has {want}"
            )));
        }
    }
    let phi = SparseMatrix::renormalized_laplacian(graph);
    let features = cfg.train.features.build(n);
    match ck.meta("kind") {
        Some("isac") | Some("decoder") => Ok(Loaded::Isac(DecoderModel::from_checkpoint(ck, n)?)),
        Some("gae") => Ok(Loaded::Embeddings(Method::Gae, GaeModel::from_checkpoint(ck, features, &phi)?.embeddings().clone())),
        Some("vgae") => {
            Ok(Loaded::Embeddings(Method::Vgae, VgaeModel::from_checkpoint(ck, features, &phi)?.embeddings().clone()))
        }
        other => Err(Failure::Runtime(format!("checkpoint kind {other:?} cannot be evaluated"))),
    }
}

fn record(p: &Prepared, method: &str, metric: &str, x: Option<f64>, value: f64) -> MetricRecord {
    MetricRecord {
        dataset: p.cfg.dataset_name.clone(),
        method: method.to_string(),
        metric: metric.to_string(),
        x,
        value,
        seed: p.cfg.seed,
        config_hash: p.hash.clone(),
    }
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    match args.kind {
        EvalKind::Gradcheck => {
            let cfg = load_config(&args.cfg)?;
            let reports = gradient_suites(cfg.seed)?;
            emit(args.out.as_ref(), |w| write_gradcheck_csv(&reports, w))?;
            let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.suite).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Runtime(format!("gradient check failed: {}", failed.join(", "))))
            }
        }
        EvalKind::Theorem1 => theorem1(args),
        EvalKind::Symbols => symbols(args),
        EvalKind::Accuracy => {
            let p = prepare(&args.cfg)?;
            let ck = read_checkpoint(args.checkpoint.as_ref())?;
            let model = load_model(&ck, &p.cfg, &p.graph)?;
            let acc = accuracy_eval(|u, v| Ok(model.score(u, v)), &p.split)?;
            let rows = [record(&p, model.method().name(), "accuracy", None, acc)];
            emit(args.out.as_ref(), |w| write_metrics(&rows, w))
        }
        EvalKind::Ser => {
            let p = prepare(&args.cfg)?;
            let ck = read_checkpoint(args.checkpoint.as_ref())?;
            let model = load_model(&ck, &p.cfg, &p.graph)?;
            let n = p.graph.node_count();
            let uniform = UniformPrior { node_count: n };
            let emb_prior;
            let learned: &dyn PriorSource = match &model {
                Loaded::Isac(d) => d,
                Loaded::Embeddings(_, e) => {
                    emb_prior = EmbeddingPrior { embeddings: e };
                    &emb_prior
                }
            };
            let sources: [(&str, &dyn PriorSource); 2] =
                [(model.method().name(), learned), (Method::NoInference.name(), &uniform)];
            let points = ser_experiment(
                &sources,
                n,
                &p.split.test_positives,
                &p.cfg.snr_db,
                p.cfg.trials,
                p.cfg.channel_gain,
                p.cfg.seed,
            )?;
            let rows: Vec<MetricRecord> =
                points.iter().map(|pt| record(&p, &pt.method, "ser", Some(pt.snr_db), pt.ser)).collect();
            emit(args.out.as_ref(), |w| write_metrics(&rows, w))
        }
    }
}

fn symbols(args: &EvalArgs) -> Result<()> {
    let p = prepare(&args.cfg)?;
    let mut rows = Vec::new();
    for &c in &p.cfg.clues_per_episode {
        if c > p.graph.node_count() {
            return Err(Failure::Config(format!("key `clues_per_episode`: {c} exceeds the node count")));
        }
        let episodes = sample_episodes(&p.graph, p.cfg.episodes, c, p.cfg.seed)?;
        let x = Some(c as f64);
        let total = |m: Method| episodes.iter().map(|&e| embedding_symbol_count(m, e)).sum::<u64>();
        for &m in &p.cfg.methods {
            rows.push(record(&p, m.name(), "symbols", x, total(m) as f64));
        }
        if p.cfg.methods.contains(&Method::Isac) {
            for &m in p.cfg.methods.iter().filter(|&&m| m != Method::Isac) {
                let r = reduction_ratio(total(Method::Isac), total(m));
                rows.push(record(&p, "isac", &format!("symbol_reduction_vs_{}", m.name()), x, r));
            }
        }
    }
    emit(args.out.as_ref(), |w| write_metrics(&rows, w))
}

fn theorem1(args: &EvalArgs) -> Result<()> {
    let cfg = load_config(&args.cfg)?;
    let graph = load_graph(&cfg)?;
    let n = graph.node_count();
    if n > 6 {
        return Err(Failure::Config(format!("key `dataset`: theorem1 needs at most 6 nodes, got {n}")));
    }
    let phi = renormalized_laplacian(&graph);
    let decoder = match &args.checkpoint {
        Some(_) => {
            let ck = read_checkpoint(args.checkpoint.as_ref())?;
            match load_model(&ck, &cfg, &graph)? {
                Loaded::Isac(d) => d,
                Loaded::Embeddings(m, _) => {
                    return Err(Failure::Runtime(format!("theorem1 needs an iSAC decoder, checkpoint is {m}")))
                }
            }
        }
        None => initial_models(n, &cfg.train, &phi)?.1,
    };
    let report = theorem1_harness(&graph, &phi, &decoder, &cfg.harness)?;
    eprintln!("sup_distance {}", report.sup_distance);
    emit(args.out.as_ref(), |w| {
        writeln!(w, "u,v,score,optimum")?;
        for &(u, v, s, o) in &report.pairs {
            writeln!(w, "{u},{v},{s},{o}")?;
        }
        Ok(())
    })
}

pub fn split(args: &ConfigArgs) -> Result<()> {
    let p = prepare(args)?;
    fs::create_dir_all(&p.cfg.output_dir)?;
    let path = p.cfg.output_dir.join("split.tsv");
    write_file(&path, |w| p.split.write_tsv(w))?;
    log::info!(
        "{} expert edges, {} test pairs per class -> {}",
        p.split.expert_edges.len(),
        p.split.test_positives.len(),
        path.display()
    );
    Ok(())
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let dialect = match args.format.as_str() {
        "whitespace" => EdgeListDialect::Whitespace,
        "csv" => EdgeListDialect::Csv,
        other => return Err(Failure::Config(format!("--format: expected whitespace or csv, got {other:?}"))),
    };
    let file = File::open(&args.input)
        .map_err(|e| Failure::Config(format!("--input {}: {e}", args.input.display())))?;
    let (g, stats) = load_edge_list(BufReader::new(file), dialect).map_err(config_failure("--input"))?;
    write_file(&args.output, |w| g.write_edge_list(w))?;
    eprintln!(
        "{} nodes, {} edges; {} lines read, {} self-loops dropped, {} duplicates collapsed",
        g.node_count(),
        g.edge_count(),
        stats.lines,
        stats.self_loops_dropped,
        stats.duplicates_collapsed
    );
    Ok(())
}

pub fn report(args: &ConfigArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let suite = cfg.suite()?;
    suite.validate().map_err(|e| Failure::Config(e.to_string()))?;
    // validation first: every dataset must load before anything is written
    for d in &suite.datasets {
        d.load().map_err(config_failure("key `dataset`"))?;
    }
    let records = run_suite(&suite, &cfg.output_dir)?;
    log::info!("{} metric rows written to {}", records.len(), cfg.output_dir.display());
    Ok(())
}
