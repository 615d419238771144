//! The alternating minimax loop between the destination's decoder and the
//! source's evaluator, plus the closed-form optimum harness for small graphs.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::channel::{encode_index, hard_decode, transmit, ChannelConfig};
use crate::checkpoint::Checkpoint;
use crate::decoder::{DecoderModel, DecoderObjective, DecoderSample};
use crate::error::{Error, Result};
use crate::evaluator::{clamp_prob, EvaluatorModel, WeightedPair};
use crate::gcn::{Activation, FeatureMode, Features, GcnParams};
use crate::graph::{Edge, KnowledgeGraph, LinkSplit, Operator};
use crate::numerics::{dot, sigmoid, AdamAscent, Matrix, RngState};

/// How the decoder turns evaluator feedback into a gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DecoderGradient {
    /// Score-function estimate from the sampled implicit terms.
    #[default]
    Sampled,
    /// Exact expectation over every candidate (evaluator scores all of them).
    Exact,
}

/// How per-clue objectives in a batch are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ClueReduction {
    /// Batch mean; the step size is independent of the batch size.
    #[default]
    Mean,
    /// Sum over clue nodes, as in the semantic distance itself.
    Sum,
}

impl std::str::FromStr for ClueReduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mean" => Ok(ClueReduction::Mean),
            "sum" => Ok(ClueReduction::Sum),
            other => Err(Error::InvalidArgument(format!("unknown clue reduction {other:?}"))),
        }
    }
}

impl std::fmt::Display for ClueReduction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClueReduction::Mean => "mean",
            ClueReduction::Sum => "sum",
        })
    }
}

impl std::str::FromStr for DecoderGradient {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sampled" => Ok(DecoderGradient::Sampled),
            "exact" => Ok(DecoderGradient::Exact),
            other => Err(Error::InvalidArgument(format!("unknown decoder gradient {other:?}"))),
        }
    }
}

impl std::fmt::Display for DecoderGradient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecoderGradient::Sampled => "sampled",
            DecoderGradient::Exact => "exact",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub outer_iterations: usize,
    pub decoder_steps: usize,
    pub evaluator_steps: usize,
    /// Clue nodes per step.
    pub batch_size: usize,
    /// Evaluator learning rate.
    pub lr: f64,
    /// Decoder learning rate; `None` uses `lr`.
    pub decoder_lr: Option<f64>,
    /// Embedding width of both players.
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    /// Activation of the evaluator's last layer (hidden layers are sigmoid).
    pub output_activation: Activation,
    pub features: FeatureMode,
    /// Implicit terms drawn per clue in a decoder step.
    pub samples_per_clue: usize,
    pub objective: DecoderObjective,
    pub decoder_gradient: DecoderGradient,
    pub reduction: ClueReduction,
    pub seed: u64,
    /// Forward clue channel during training; `None` is error-free.
    pub training_channel: Option<ChannelConfig>,
    /// Pairs per side in the validation slice reported in the history.
    pub validation_pairs: usize,
    /// Clues in the fixed monitoring set used for the recorded objectives.
    pub monitor_clues: usize,
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            outer_iterations: 100,
            decoder_steps: 1,
            evaluator_steps: 1,
            batch_size: 64,
            lr: 0.001,
            decoder_lr: None,
            embedding_dim: 50,
            hidden_dim: 50,
            output_activation: Activation::Sigmoid,
            features: FeatureMode::Identity,
            samples_per_clue: 1,
            objective: DecoderObjective::Saturating,
            decoder_gradient: DecoderGradient::Sampled,
            reduction: ClueReduction::Mean,
            seed: 0,
            training_channel: None,
            validation_pairs: 256,
            monitor_clues: 256,
            checkpoint_every: 10,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("decoder_steps", self.decoder_steps),
            ("evaluator_steps", self.evaluator_steps),
            ("batch_size", self.batch_size),
            ("embedding_dim", self.embedding_dim),
            ("hidden_dim", self.hidden_dim),
            ("samples_per_clue", self.samples_per_clue),
            ("monitor_clues", self.monitor_clues),
            ("checkpoint_every", self.checkpoint_every),
        ];
        for (key, v) in counts {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{key} must be at least 1")));
            }
        }
        let lrs = [("lr", Some(self.lr)), ("decoder_lr", self.decoder_lr)];
        for (key, lr) in lrs {
            if let Some(lr) = lr {
                if !(lr > 0.0 && lr.is_finite()) {
                    return Err(Error::InvalidArgument(format!("{key} must be positive, got {lr}")));
                }
            }
        }
        Ok(())
    }

    pub fn decoder_lr(&self) -> f64 {
        self.decoder_lr.unwrap_or(self.lr)
    }
}

/// One row of the training history.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Semantic distance on the monitoring clues.
    pub gamma_e: f64,
    /// Decoder objective `E[cost(p)]` on the monitoring clues.
    pub decoder_obj: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<IterationRecord>,
}

impl TrainHistory {
    /// `iteration,gamma_e,decoder_obj,val_accuracy`. Wall-clock time is kept
    /// out so reruns are byte-identical; see [`TrainHistory::write_timing_csv`].
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,gamma_e,decoder_obj,val_accuracy")?;
        for r in &self.records {
            writeln!(out, "{},{},{},{}", r.iteration, r.gamma_e, r.decoder_obj, r.val_accuracy)?;
        }
        Ok(())
    }

    pub fn write_timing_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,seconds")?;
        for r in &self.records {
            writeln!(out, "{},{:.3}", r.iteration, r.seconds)?;
        }
        Ok(())
    }

    /// `|Γ_e − decoder objective|` per iteration.
    pub fn gaps(&self) -> Vec<f64> {
        self.records.iter().map(|r| (r.gamma_e - r.decoder_obj).abs()).collect()
    }

    /// Means of the gap over consecutive `window`-iteration blocks ending at
    /// the last iteration, oldest first, restricted to blocks ending in the
    /// final half of training.
    pub fn trailing_gap_windows(&self, window: usize) -> Vec<f64> {
        let gaps = self.gaps();
        let t = gaps.len();
        if window == 0 || t < window {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut end = t;
        while end >= window && end > t / 2 {
            let block = &gaps[end - window..end];
            out.push(block.iter().sum::<f64>() / window as f64);
            end -= window;
        }
        out.reverse();
        out
    }

    /// Whether the windowed gap never grows across the final half.
    pub fn gap_non_increasing(&self, window: usize) -> bool {
        let w = self.trailing_gap_windows(window);
        w.len() >= 2 && w.windows(2).all(|p| p[1] <= p[0])
    }
}

/// Trained players and the iteration they reached.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub evaluator: EvaluatorModel,
    pub decoder: DecoderModel,
    pub history: TrainHistory,
}

/// Both players in one checkpoint.
pub fn joint_checkpoint(evaluator: &EvaluatorModel, decoder: &DecoderModel, iteration: usize) -> Checkpoint {
    let mut ck = evaluator.to_checkpoint();
    ck.set_meta("kind", "isac");
    ck.set_meta("iteration", &iteration.to_string());
    ck.push_tensor("decoder.table", decoder.table().clone());
    ck
}

pub fn load_joint_checkpoint(
    ck: &Checkpoint,
    features: Features,
    phi: &impl Operator,
) -> Result<(EvaluatorModel, DecoderModel)> {
    let evaluator = EvaluatorModel::from_checkpoint(ck, features, phi)?;
    let decoder = DecoderModel::from_checkpoint(ck, phi.dim())?;
    Ok((evaluator, decoder))
}

/// Initial players for a config; shared by [`train`] and its callers so that
/// zero iterations reproduce this exactly.
pub fn initial_models(n: usize, cfg: &TrainConfig, phi: &impl Operator) -> Result<(EvaluatorModel, DecoderModel)> {
    let mut rng = RngState::with_stream(cfg.seed, 1);
    let features = cfg.features.build(n);
    let gcn = GcnParams::init(
        &[features.cols(), cfg.hidden_dim, cfg.embedding_dim],
        &[Activation::Sigmoid, cfg.output_activation],
        &mut rng,
    )?;
    let evaluator = EvaluatorModel::new(gcn, features, phi)?;
    let mut rng = RngState::with_stream(cfg.seed, 2);
    let decoder = DecoderModel::init(n, cfg.embedding_dim, &mut rng);
    Ok((evaluator, decoder))
}

/// Link score the decoder itself assigns: `σ(θ_d(u)ᵀθ_d(v))`.
pub fn decoder_link_score(decoder: &DecoderModel, u: usize, v: usize) -> f64 {
    let t = decoder.table();
    sigmoid(dot(t.row(u), t.row(v)))
}

/// Balanced-threshold accuracy; a score of exactly 0.5 is an error.
fn threshold_accuracy(pos: &[Edge], neg: &[Edge], score: impl Fn(usize, usize) -> f64) -> f64 {
    let hits = pos.iter().filter(|&&(u, v)| score(u, v) > 0.5).count()
        + neg.iter().filter(|&&(u, v)| score(u, v) < 0.5).count();
    hits as f64 / (pos.len() + neg.len()).max(1) as f64
}

/// Exact monitoring objectives on fixed clues: positives are each clue's
/// expert neighbors (uniformly weighted), negatives the full decoder rule.
fn monitor_objectives(
    evaluator: &EvaluatorModel,
    decoder: &DecoderModel,
    clues: &[usize],
    expert_nbrs: &[Vec<usize>],
    objective: DecoderObjective,
) -> Result<(f64, f64)> {
    let e = evaluator.embeddings();
    let mut pos_sum = 0.0;
    let mut pos_clues = 0usize;
    let mut neg_sum = 0.0;
    let mut cost_sum = 0.0;
    let dists = decoder.inference_rules(clues)?;
    let scores = evaluator.scores_block(clues)?;
    for (i, (&v, dist)) in clues.iter().zip(&dists).enumerate() {
        let nb = &expert_nbrs[v];
        if !nb.is_empty() {
            let s: f64 = nb.iter().map(|&u| clamp_prob(sigmoid(dot(e.row(u), e.row(v)))).ln()).sum();
            pos_sum += s / nb.len() as f64;
            pos_clues += 1;
        }
        for (&u, &q) in dist.candidates.iter().zip(&dist.probs) {
            let p = scores.get(i, u);
            neg_sum += q * (1.0 - clamp_prob(p)).ln();
            cost_sum += q * objective.cost(p);
        }
    }
    let k = clues.len() as f64;
    let gamma = pos_sum / pos_clues.max(1) as f64 + neg_sum / k;
    Ok((gamma, cost_sum / k))
}

/// Draws `batch` clue nodes uniformly with replacement.
fn sample_clues(n: usize, batch: usize, rng: &mut RngState) -> Vec<usize> {
    (0..batch).map(|_| rng.random_range(0..n)).collect()
}

/// Runs the adversarial training loop.
///
/// Each outer iteration performs `decoder_steps` decoder updates followed by
/// `evaluator_steps` evaluator updates. A decoder step sends each clue
/// through the training channel, samples implicit terms from its rule and
/// descends the evaluator-scored cost. An evaluator step takes one expert
/// neighbor per clue as a positive and one decoder sample as a negative and
/// ascends the semantic distance.
pub fn train(g: &KnowledgeGraph, phi: &impl Operator, split: &LinkSplit, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    split.validate(g)?;
    let n = g.node_count();
    if phi.dim() != n {
        return Err(Error::Dimension(format!("operator is {}, graph has {n} nodes", phi.dim())));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("training needs at least two nodes".into()));
    }
    let (mut evaluator, mut decoder) = initial_models(n, cfg, phi)?;
    let expert_nbrs = split.expert_neighbors(n);
    let mut rng = RngState::with_stream(cfg.seed, 3);
    let mut noise_rng = RngState::with_stream(cfg.seed, 4);

    let mut aux = RngState::with_stream(cfg.seed, 5);
    let monitor: Vec<usize> = if cfg.monitor_clues >= n {
        (0..n).collect()
    } else {
        let mut m = rand::seq::index::sample(&mut aux, n, cfg.monitor_clues).into_vec();
        m.sort_unstable();
        m
    };
    let take = |pairs: &[Edge], aux: &mut RngState| -> Vec<Edge> {
        if pairs.len() <= cfg.validation_pairs {
            pairs.to_vec()
        } else {
            let mut idx = rand::seq::index::sample(aux, pairs.len(), cfg.validation_pairs).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| pairs[i]).collect()
        }
    };
    let val_pos = take(&split.test_positives, &mut aux);
    let val_neg = take(&split.test_negatives, &mut aux);

    let orphans = (0..n).filter(|&v| expert_nbrs[v].is_empty()).count();
    if orphans > 0 {
        log::info!("{orphans} of {n} clue nodes have no expert positives and contribute negatives only");
    }

    let start = Instant::now();
    let mut history = TrainHistory::default();
    for iteration in 1..=cfg.outer_iterations {
        for _ in 0..cfg.decoder_steps {
            let clues = sample_clues(n, cfg.batch_size, &mut rng);
            let received: Vec<usize> = match &cfg.training_channel {
                None => clues.clone(),
                Some(ch) => clues
                    .iter()
                    .map(|&v| hard_decode(&transmit(&encode_index(v, n)?, ch, &mut noise_rng), ch, n))
                    .collect::<Result<_>>()?,
            };
            let mut grad = match cfg.decoder_gradient {
                DecoderGradient::Sampled => {
                    let dists = decoder.inference_rules(&received)?;
                    let mut batch = Vec::with_capacity(clues.len() * cfg.samples_per_clue);
                    for (&v, dist) in clues.iter().zip(&dists) {
                        for _ in 0..cfg.samples_per_clue {
                            let u = dist.sample(&mut rng);
                            batch.push(DecoderSample { clue: dist.clue, implicit: u, score: evaluator.score(u, v)? });
                        }
                    }
                    // mean cost of the batch as the variance-reducing baseline
                    let baseline = batch.iter().map(|s| cfg.objective.cost(s.score)).sum::<f64>() / batch.len() as f64;
                    decoder.gradient(&batch, cfg.objective, baseline)?
                }
                DecoderGradient::Exact => {
                    let mut offset = 0;
                    decoder.expected_gradient(&received, cfg.objective, |block| {
                        let truth = &clues[offset..offset + block.len()];
                        offset += block.len();
                        evaluator.scores_block(truth)
                    })?
                }
            };
            if cfg.reduction == ClueReduction::Sum {
                grad.scale_inplace(clues.len() as f64);
            }
            decoder.update(&grad, cfg.decoder_lr())?;
        }

        for _ in 0..cfg.evaluator_steps {
            let clues = sample_clues(n, cfg.batch_size, &mut rng);
            let mut pos: Vec<Edge> = Vec::with_capacity(clues.len());
            let mut neg: Vec<Edge> = Vec::with_capacity(clues.len());
            let dists = decoder.inference_rules(&clues)?;
            for (&v, dist) in clues.iter().zip(&dists) {
                if let Some(&u) = expert_nbrs[v].choose(&mut rng) {
                    pos.push((u, v));
                }
                neg.push((dist.sample(&mut rng), v));
            }
            if pos.is_empty() {
                log::debug!("evaluator batch without expert positives");
            }
            let (wp, wn) = match cfg.reduction {
                ClueReduction::Mean => (1.0 / pos.len().max(1) as f64, 1.0 / neg.len() as f64),
                ClueReduction::Sum => (1.0, 1.0),
            };
            let pairs: Vec<WeightedPair> = pos
                .iter()
                .map(|&(u, v)| WeightedPair { u, v, positive_weight: wp, negative_weight: 0.0 })
                .chain(neg.iter().map(|&(u, v)| WeightedPair { u, v, positive_weight: 0.0, negative_weight: wn }))
                .collect();
            let grads = evaluator.weighted_gradient(phi, &pairs)?;
            evaluator.update(phi, &grads, cfg.lr)?;
        }

        let (gamma_e, decoder_obj) = monitor_objectives(&evaluator, &decoder, &monitor, &expert_nbrs, cfg.objective)?;
        let val_accuracy = threshold_accuracy(&val_pos, &val_neg, |u, v| decoder_link_score(&decoder, u, v));
        if !(gamma_e.is_finite() && decoder_obj.is_finite()) {
            return Err(Error::NonFinite(format!("training objectives at iteration {iteration}")));
        }
        history.records.push(IterationRecord {
            iteration,
            gamma_e,
            decoder_obj,
            val_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        });
        log::debug!("iteration {iteration}: gamma_e {gamma_e:.5} decoder {decoder_obj:.5} val {val_accuracy:.4}");
        if let Some(dir) = &cfg.checkpoint_dir {
            if iteration % cfg.checkpoint_every == 0 {
                joint_checkpoint(&evaluator, &decoder, iteration).save(dir.join(format!("checkpoint_{iteration:04}.txt")))?;
            }
        }
    }
    Ok(TrainOutput { evaluator, decoder, history })
}

/// Monte-Carlo semantic distance: `sample_count` expert edges (random
/// orientation) score the true rule, and `sample_count` decoder draws on
/// clues taken from expert edges score the learned one.
pub fn semantic_distance(
    evaluator: &EvaluatorModel,
    decoder: &DecoderModel,
    split: &LinkSplit,
    sample_count: usize,
    rng: &mut RngState,
) -> Result<f64> {
    if split.expert_edges.is_empty() {
        return Err(Error::Empty("expert edges"));
    }
    if sample_count == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let mut pos = 0.0;
    let mut neg = 0.0;
    for _ in 0..sample_count {
        let &(a, b) = split.expert_edges.choose(rng).expect("non-empty");
        let (u, v) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
        pos += clamp_prob(evaluator.score(u, v)?).ln();
        let &(a, b) = split.expert_edges.choose(rng).expect("non-empty");
        let clue = if rng.random_bool(0.5) { a } else { b };
        let u_hat = decoder.sample_implicit(clue, 1, rng)?[0];
        neg += (1.0 - clamp_prob(evaluator.score(u_hat, clue)?)).ln();
    }
    Ok((pos + neg) / sample_count as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarnessConfig {
    pub steps: usize,
    pub lr: f64,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig { steps: 20_000, lr: 0.01, hidden_dim: 8, embedding_dim: 8, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarnessReport {
    /// `max |score − optimum|` over pairs with any probability mass.
    pub sup_distance: f64,
    /// `(u, v, score, optimum)` for `u < v`.
    pub pairs: Vec<(usize, usize, f64, f64)>,
}

/// Trains only the evaluator on the exact expected semantic distance of
/// the rules `s` (true) and `d` (generated), rows indexed by clue, clues
/// uniformly weighted, and reports the distance to the pointwise optimum.
///
/// Scores are symmetric, so the optimum for the unordered pair `{u, v}` is
/// `(S(u|v) + S(v|u)) / (S(u|v) + S(v|u) + D(u|v) + D(v|u))`, which reduces
/// to `S/(S + D)` when both directions agree.
pub fn optimum_harness(s: &Matrix, d: &Matrix, phi: &impl Operator, cfg: &HarnessConfig) -> Result<HarnessReport> {
    let n = phi.dim();
    if s.shape() != (n, n) || d.shape() != (n, n) {
        return Err(Error::Dimension("rule tables must be n x n".into()));
    }
    let w = 1.0 / n as f64;
    let mut pairs = Vec::new();
    for v in 0..n {
        for u in 0..n {
            if u != v && (s.get(v, u) > 0.0 || d.get(v, u) > 0.0) {
                pairs.push(WeightedPair { u, v, positive_weight: w * s.get(v, u), negative_weight: w * d.get(v, u) });
            }
        }
    }
    let mut rng = RngState::with_stream(cfg.seed, 6);
    // linear output so scores below one half are representable
    let gcn = GcnParams::init(
        &[n, cfg.hidden_dim, cfg.embedding_dim],
        &[Activation::Sigmoid, Activation::Identity],
        &mut rng,
    )?;
    let mut model = EvaluatorModel::new(gcn, Features::Identity(n), phi)?;
    // optima of exactly zero need diverging logits; plain SGD only gets there logarithmically
    let mut adam = AdamAscent::new(model.gcn().weights(), cfg.lr)?;
    for _ in 0..cfg.steps {
        let grads = model.weighted_gradient(phi, &pairs)?;
        let step = adam.direction(&grads)?;
        model.update(phi, &step, 1.0)?;
    }
    let mut report = HarnessReport { sup_distance: 0.0, pairs: Vec::new() };
    for v in 0..n {
        for u in (v + 1)..n {
            let sp = s.get(v, u) + s.get(u, v);
            let dp = d.get(v, u) + d.get(u, v);
            if sp + dp == 0.0 {
                continue;
            }
            let opt = sp / (sp + dp);
            let score = model.score(u, v)?;
            report.sup_distance = report.sup_distance.max((score - opt).abs());
            report.pairs.push((v, u, score, opt));
        }
    }
    Ok(report)
}

/// The optimum harness with the true rule uniform over each node's graph
/// neighbors and the generated rule taken from a frozen decoder.
pub fn theorem1_harness(
    g: &KnowledgeGraph,
    phi: &impl Operator,
    decoder: &DecoderModel,
    cfg: &HarnessConfig,
) -> Result<HarnessReport> {
    let n = g.node_count();
    if n > 6 {
        return Err(Error::InvalidArgument(format!("harness needs an enumerable graph, got {n} nodes")));
    }
    if decoder.node_count() != n {
        return Err(Error::Dimension(format!("decoder has {} nodes, graph {n}", decoder.node_count())));
    }
    let mut s = Matrix::zeros(n, n);
    let mut d = Matrix::zeros(n, n);
    for v in 0..n {
        let nb = g.neighbors(v);
        for &u in nb {
            s.set(v, u, 1.0 / nb.len() as f64);
        }
        let dist = decoder.inference_rule(v)?;
        for (&u, &p) in dist.candidates.iter().zip(&dist.probs) {
            d.set(v, u, p);
        }
    }
    optimum_harness(&s, &d, phi, cfg)
}
