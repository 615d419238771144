//! Graph auto-encoder comparators and the transmitted-symbol counting model.
//!
//! GAE: a GCN encoder (sigmoid hidden layer, linear output) trained with
//! balanced binary cross-entropy on inner-product link scores.
//! VGAE: a shared sigmoid trunk with linear mean and log-variance heads,
//! trained on the reparameterized reconstruction loss plus the Gaussian KL
//! term averaged over nodes. Evaluation uses the mean embeddings.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::checkpoint::Checkpoint;
use crate::decoder::InferenceDistribution;
use crate::error::{check_node, Error, Result};
use crate::evaluator::{mean_weighted, pair_embedding_gradient, pair_objective};
use crate::gcn::{
    gcn_backward, gcn_forward, layer_backward, layer_forward, Activation, FeatureMode, Features, GcnParams,
    LayerInput,
};
use crate::graph::{canonical, Edge, KnowledgeGraph, LinkSplit, Operator};
use crate::numerics::{dot, sgd_step, sigmoid, softmax, Matrix, RngState};
use crate::receiver::PriorSource;

/// Compared methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Isac,
    Gae,
    Vgae,
    NoInference,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Isac, Method::Gae, Method::Vgae, Method::NoInference];

    pub fn name(self) -> &'static str {
        match self {
            Method::Isac => "isac",
            Method::Gae => "gae",
            Method::Vgae => "vgae",
            Method::NoInference => "no-inference",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// Training settings shared by both auto-encoders.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    /// Full-batch gradient steps.
    pub epochs: usize,
    pub lr: f64,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    pub features: FeatureMode,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            epochs: 200,
            lr: 0.001,
            hidden_dim: 50,
            embedding_dim: 50,
            features: FeatureMode::Identity,
            seed: 0,
        }
    }
}

/// Uniform random node pairs that are not expert edges.
fn sample_negatives(n: usize, count: usize, experts: &KnowledgeGraph, rng: &mut RngState) -> Vec<Edge> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v && !experts.has_edge(u, v) {
            out.push(canonical(u, v));
        }
    }
    out
}

fn check_checkpoint(ck: &Checkpoint, kind: &str, n: usize) -> Result<()> {
    if ck.meta("kind") != Some(kind) {
        return Err(Error::Checkpoint(format!("expected a {kind} checkpoint, found {:?}", ck.meta("kind"))));
    }
    let nodes: usize = ck.meta_parse("nodes")?;
    if nodes != n {
        return Err(Error::Checkpoint(format!("checkpoint has {nodes} nodes, graph has {n}")));
    }
    Ok(())
}

fn expert_graph(n: usize, split: &LinkSplit) -> Result<KnowledgeGraph> {
    KnowledgeGraph::from_edges(n, split.expert_edges.iter().copied())
}

#[derive(Clone, Debug)]
pub struct GaeModel {
    encoder: GcnParams,
    features: Features,
    embeddings: Matrix,
}

impl GaeModel {
    pub fn init(n: usize, cfg: &BaselineConfig, phi: &impl Operator, rng: &mut RngState) -> Result<Self> {
        let features = cfg.features.build(n);
        let encoder = GcnParams::init(
            &[features.cols(), cfg.hidden_dim, cfg.embedding_dim],
            &[Activation::Sigmoid, Activation::Identity],
            rng,
        )?;
        Self::new(encoder, features, phi)
    }

    pub fn new(encoder: GcnParams, features: Features, phi: &impl Operator) -> Result<Self> {
        let embeddings = gcn_forward(&features, phi, &encoder)?.into_embeddings();
        Ok(GaeModel { encoder, features, embeddings })
    }

    pub fn encoder(&self) -> &GcnParams {
        &self.encoder
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    /// Balanced BCE `−[mean_pos log p + mean_neg log(1 − p)]` and its
    /// gradient with respect to the encoder weights.
    pub fn loss_and_gradient(&self, phi: &impl Operator, pos: &[Edge], neg: &[Edge]) -> Result<(f64, Vec<Matrix>)> {
        if pos.is_empty() || neg.is_empty() {
            return Err(Error::Empty("auto-encoder training pairs"));
        }
        let trace = gcn_forward(&self.features, phi, &self.encoder)?;
        let pairs = mean_weighted(pos, neg);
        let loss = -pair_objective(trace.embeddings(), &pairs)?;
        let mut up = pair_embedding_gradient(trace.embeddings(), &pairs)?;
        up.scale_inplace(-1.0);
        let grads = gcn_backward(&self.features, &trace, phi, &self.encoder, &up)?;
        Ok((loss, grads))
    }

    pub fn step(&mut self, phi: &impl Operator, grads: &[Matrix], lr: f64) -> Result<()> {
        sgd_step(self.encoder.weights_mut(), grads, lr)?;
        self.embeddings = gcn_forward(&self.features, phi, &self.encoder)?.into_embeddings();
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("kind", "gae");
        ck.set_meta("nodes", &self.embeddings.rows().to_string());
        self.encoder.to_checkpoint("gae", &mut ck);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, features: Features, phi: &impl Operator) -> Result<Self> {
        check_checkpoint(ck, "gae", phi.dim())?;
        Self::new(GcnParams::from_checkpoint("gae", ck)?, features, phi)
    }
}

/// Trains a GAE on the expert edges; returns the model and per-epoch losses.
pub fn gae_train(
    g: &KnowledgeGraph,
    phi: &impl Operator,
    split: &LinkSplit,
    cfg: &BaselineConfig,
) -> Result<(GaeModel, Vec<f64>)> {
    let n = g.node_count();
    let mut rng = RngState::with_stream(cfg.seed, 0x6ae);
    let mut model = GaeModel::init(n, cfg, phi, &mut rng)?;
    let experts = expert_graph(n, split)?;
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let neg = sample_negatives(n, split.expert_edges.len(), &experts, &mut rng);
        let (loss, grads) = model.loss_and_gradient(phi, &split.expert_edges, &neg)?;
        model.step(phi, &grads, cfg.lr)?;
        losses.push(loss);
    }
    Ok((model, losses))
}

/// `½ Σ (μ² + σ² − ln σ² − 1)` over all entries.
pub fn kl_divergence(mu: &Matrix, logvar: &Matrix) -> Result<f64> {
    mu.check_same_shape(logvar, "kl_divergence")?;
    Ok(0.5
        * mu.data()
            .iter()
            .zip(logvar.data())
            .map(|(m, lv)| m * m + lv.exp() - lv - 1.0)
            .sum::<f64>())
}

/// Parameter layout: trunk weights, then mean head, then log-variance head.
#[derive(Clone, Debug)]
pub struct VgaeModel {
    trunk: GcnParams,
    mean_head: Matrix,
    logvar_head: Matrix,
    features: Features,
    means: Matrix,
}

struct VgaeForward {
    trunk: crate::gcn::GcnTrace,
    mu: Matrix,
    logvar: Matrix,
}

impl VgaeModel {
    pub fn init(n: usize, cfg: &BaselineConfig, phi: &impl Operator, rng: &mut RngState) -> Result<Self> {
        let features = cfg.features.build(n);
        let trunk = GcnParams::init(&[features.cols(), cfg.hidden_dim], &[Activation::Sigmoid], rng)?;
        let mean_head = crate::gcn::glorot_uniform(cfg.hidden_dim, cfg.embedding_dim, rng);
        let logvar_head = crate::gcn::glorot_uniform(cfg.hidden_dim, cfg.embedding_dim, rng);
        Self::from_parts(trunk, mean_head, logvar_head, features, phi)
    }

    pub fn from_parts(
        trunk: GcnParams,
        mean_head: Matrix,
        logvar_head: Matrix,
        features: Features,
        phi: &impl Operator,
    ) -> Result<Self> {
        mean_head.check_same_shape(&logvar_head, "vgae heads")?;
        let mut m = VgaeModel { trunk, mean_head, logvar_head, features, means: Matrix::zeros(0, 0) };
        m.means = m.forward(phi)?.mu;
        Ok(m)
    }

    /// All trainable tensors in layout order.
    pub fn params(&self) -> Vec<Matrix> {
        let mut p = self.trunk.weights().to_vec();
        p.push(self.mean_head.clone());
        p.push(self.logvar_head.clone());
        p
    }

    pub fn with_params(&self, params: &[Matrix], phi: &impl Operator) -> Result<Self> {
        let k = self.trunk.depth();
        if params.len() != k + 2 {
            return Err(Error::Dimension(format!("expected {} tensors, got {}", k + 2, params.len())));
        }
        let trunk = GcnParams::new(params[..k].to_vec(), self.trunk.activations().to_vec())?;
        Self::from_parts(trunk, params[k].clone(), params[k + 1].clone(), self.features.clone(), phi)
    }

    /// Mean embeddings used for scoring.
    pub fn embeddings(&self) -> &Matrix {
        &self.means
    }

    fn forward(&self, phi: &impl Operator) -> Result<VgaeForward> {
        let trunk = gcn_forward(&self.features, phi, &self.trunk)?;
        let h = LayerInput::Dense(trunk.embeddings());
        let mu = layer_forward(h, phi, &self.mean_head, Activation::Identity)?;
        let logvar = layer_forward(h, phi, &self.logvar_head, Activation::Identity)?;
        Ok(VgaeForward { trunk, mu, logvar })
    }

    /// Negative ELBO for fixed noise `eps`:
    /// `BCE(z) + KL(q‖𝒩(0, I))/n` with `z = μ + exp(½ ln σ²)·ε`.
    /// Returns the loss and gradients in [`VgaeModel::params`] order.
    pub fn loss_and_gradient(
        &self,
        phi: &impl Operator,
        pos: &[Edge],
        neg: &[Edge],
        eps: &Matrix,
    ) -> Result<(f64, Vec<Matrix>)> {
        if pos.is_empty() || neg.is_empty() {
            return Err(Error::Empty("auto-encoder training pairs"));
        }
        let fwd = self.forward(phi)?;
        fwd.mu.check_same_shape(eps, "vgae noise")?;
        let n = fwd.mu.rows() as f64;
        let std: Matrix = fwd.logvar.map(|lv| (0.5 * lv).exp());
        let z = {
            let mut z = fwd.mu.clone();
            z.add_scaled(1.0, &std.hadamard(eps)?)?;
            z
        };
        let pairs = mean_weighted(pos, neg);
        let recon = -pair_objective(&z, &pairs)?;
        let kl = kl_divergence(&fwd.mu, &fwd.logvar)? / n;

        let mut dz = pair_embedding_gradient(&z, &pairs)?;
        dz.scale_inplace(-1.0);
        let mut dmu = dz.clone();
        dmu.add_scaled(1.0 / n, &fwd.mu)?;
        let mut dlv = dz.hadamard(eps)?.hadamard(&std)?;
        dlv.scale_inplace(0.5);
        for (d, lv) in dlv.data_mut().iter_mut().zip(fwd.logvar.data()) {
            *d += 0.5 * (lv.exp() - 1.0) / n;
        }

        let h = fwd.trunk.embeddings();
        let (dw_mu, dh1) =
            layer_backward(LayerInput::Dense(h), &fwd.mu, phi, &self.mean_head, Activation::Identity, &dmu, true)?;
        let (dw_lv, dh2) = layer_backward(
            LayerInput::Dense(h),
            &fwd.logvar,
            phi,
            &self.logvar_head,
            Activation::Identity,
            &dlv,
            true,
        )?;
        let mut dh = dh1.expect("requested");
        dh.add_scaled(1.0, &dh2.expect("requested"))?;
        let mut grads = gcn_backward(&self.features, &fwd.trunk, phi, &self.trunk, &dh)?;
        grads.push(dw_mu);
        grads.push(dw_lv);
        Ok((recon + kl, grads))
    }

    pub fn step(&mut self, phi: &impl Operator, grads: &[Matrix], lr: f64) -> Result<()> {
        let mut params = self.params();
        sgd_step(&mut params, grads, lr)?;
        *self = self.with_params(&params, phi)?;
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("kind", "vgae");
        ck.set_meta("nodes", &self.means.rows().to_string());
        self.trunk.to_checkpoint("vgae.trunk", &mut ck);
        ck.push_tensor("vgae.mean_head", self.mean_head.clone());
        ck.push_tensor("vgae.logvar_head", self.logvar_head.clone());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, features: Features, phi: &impl Operator) -> Result<Self> {
        check_checkpoint(ck, "vgae", phi.dim())?;
        let trunk = GcnParams::from_checkpoint("vgae.trunk", ck)?;
        let mean_head = ck.tensor("vgae.mean_head")?.clone();
        let logvar_head = ck.tensor("vgae.logvar_head")?.clone();
        Self::from_parts(trunk, mean_head, logvar_head, features, phi)
    }
}

pub fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut RngState) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Trains a VGAE on the expert edges; returns the model and per-epoch losses.
pub fn vgae_train(
    g: &KnowledgeGraph,
    phi: &impl Operator,
    split: &LinkSplit,
    cfg: &BaselineConfig,
) -> Result<(VgaeModel, Vec<f64>)> {
    let n = g.node_count();
    let mut rng = RngState::with_stream(cfg.seed, 0x76ae);
    let mut model = VgaeModel::init(n, cfg, phi, &mut rng)?;
    let experts = expert_graph(n, split)?;
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let neg = sample_negatives(n, split.expert_edges.len(), &experts, &mut rng);
        let eps = standard_normal_matrix(n, cfg.embedding_dim, &mut rng);
        let (loss, grads) = model.loss_and_gradient(phi, &split.expert_edges, &neg, &eps)?;
        model.step(phi, &grads, cfg.lr)?;
        losses.push(loss);
    }
    Ok((model, losses))
}

/// `σ(z_uᵀz_v)` on an embedding table.
pub fn baseline_score(embeddings: &Matrix, u: usize, v: usize) -> Result<f64> {
    check_node(u, embeddings.rows())?;
    check_node(v, embeddings.rows())?;
    Ok(sigmoid(dot(embeddings.row(u), embeddings.row(v))))
}

/// Destination-side prior from an embedding table: softmax of `z_uᵀz_clue`
/// over every node except the clue.
#[derive(Clone, Copy, Debug)]
pub struct EmbeddingPrior<'a> {
    pub embeddings: &'a Matrix,
}

impl PriorSource for EmbeddingPrior<'_> {
    fn prior(&self, clue: usize) -> Result<InferenceDistribution> {
        let e = self.embeddings;
        check_node(clue, e.rows())?;
        let candidates: Vec<usize> = (0..e.rows()).filter(|&u| u != clue).collect();
        if candidates.is_empty() {
            return Err(Error::Empty("candidate set"));
        }
        let logits: Vec<f64> = candidates.iter().map(|&u| dot(e.row(u), e.row(clue))).collect();
        let probs = softmax(&logits)?;
        Ok(InferenceDistribution { clue, candidates, probs })
    }
}

/// One communication episode: `clues` explicit terms sent, `implicit` terms
/// to be recovered at the destination.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Episode {
    pub clues: usize,
    pub implicit: usize,
}

/// Fixed-size symbols needed to deliver an episode.
///
/// iSAC sends one index symbol per clue and infers the rest; GAE/VGAE send
/// one embedding symbol per clue and per recovered implicit term; without
/// inference every implicit term is sent explicitly as an index symbol.
pub fn embedding_symbol_count(method: Method, episode: Episode) -> u64 {
    let (c, r) = (episode.clues as u64, episode.implicit as u64);
    match method {
        Method::Isac => c,
        Method::Gae | Method::Vgae | Method::NoInference => c + r,
    }
}

/// `1 − ours/theirs`.
pub fn reduction_ratio(ours: u64, theirs: u64) -> f64 {
    if theirs == 0 {
        0.0
    } else {
        1.0 - ours as f64 / theirs as f64
    }
}

/// Episodes built from random clue sets: the implicit terms of an episode are
/// the distinct graph neighbors of its clues that are not clues themselves.
pub fn sample_episodes(g: &KnowledgeGraph, count: usize, clues_per_episode: usize, seed: u64) -> Result<Vec<Episode>> {
    let n = g.node_count();
    if clues_per_episode == 0 || clues_per_episode > n {
        return Err(Error::InvalidArgument(format!("{clues_per_episode} clues per episode")));
    }
    let mut rng = RngState::with_stream(seed, 0xe915);
    let mut out = Vec::with_capacity(count);
    let mut mark = vec![0usize; n];
    for e in 1..=count {
        let clues = rand::seq::index::sample(&mut rng, n, clues_per_episode).into_vec();
        for &c in &clues {
            mark[c] = usize::MAX - e;
        }
        let mut implicit = 0;
        for &c in &clues {
            for &u in g.neighbors(c) {
                if mark[u] != e && mark[u] != usize::MAX - e {
                    mark[u] = e;
                    implicit += 1;
                }
            }
        }
        out.push(Episode { clues: clues_per_episode, implicit });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{renormalized_laplacian, split_links, synthetic};
    use crate::numerics::finite_difference_check;

    #[test]
    fn kl_values() {
        let z = Matrix::zeros(2, 3);
        assert_eq!(kl_divergence(&z, &z).unwrap(), 0.0);
        let mut mu = Matrix::zeros(1, 4);
        mu.set(0, 0, 1.0);
        assert!((kl_divergence(&mu, &Matrix::zeros(1, 4)).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn symbol_counts() {
        let one = Episode { clues: 1, implicit: 0 };
        assert_eq!(embedding_symbol_count(Method::Isac, one), 1);
        assert_eq!(embedding_symbol_count(Method::NoInference, one), 1);
        let ep = Episode { clues: 10, implicit: 90 };
        let ours = embedding_symbol_count(Method::Isac, ep);
        let theirs = embedding_symbol_count(Method::Vgae, ep);
        assert_eq!((ours, theirs), (10, 100));
        assert!((reduction_ratio(ours, theirs) - 0.9).abs() < 1e-12);
        assert!((reduction_ratio(3 * ours, 3 * theirs) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn episodes_count_distinct_non_clue_neighbors() {
        let g = KnowledgeGraph::from_edges(4, [(0, 1), (0, 2), (1, 2), (2, 3)]).unwrap();
        let eps = sample_episodes(&g, 50, 2, 1).unwrap();
        for ep in eps {
            assert_eq!(ep.clues, 2);
            assert!(ep.implicit <= 2);
        }
        let all = sample_episodes(&g, 1, 4, 1).unwrap();
        assert_eq!(all[0].implicit, 0);
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
    }

    #[test]
    fn zero_epochs_is_initialization() {
        let g = synthetic::collaboration_graph(30, 60, 2).unwrap();
        let phi = renormalized_laplacian(&g);
        let split = split_links(&g, 0.3, 1).unwrap();
        let cfg = BaselineConfig { epochs: 0, hidden_dim: 4, embedding_dim: 3, ..Default::default() };
        let (m, losses) = gae_train(&g, &phi, &split, &cfg).unwrap();
        assert!(losses.is_empty());
        let mut rng = RngState::with_stream(cfg.seed, 0x6ae);
        let fresh = GaeModel::init(30, &cfg, &phi, &mut rng).unwrap();
        assert_eq!(m.encoder(), fresh.encoder());
    }

    #[test]
    fn checkpoints_round_trip_and_reject_mismatches() {
        let g = synthetic::collaboration_graph(30, 60, 2).unwrap();
        let phi = renormalized_laplacian(&g);
        let cfg = BaselineConfig { hidden_dim: 4, embedding_dim: 3, ..Default::default() };
        let mut rng = RngState::new(9);
        let gae = GaeModel::init(30, &cfg, &phi, &mut rng).unwrap();
        let back = GaeModel::from_checkpoint(&gae.to_checkpoint(), Features::Identity(30), &phi).unwrap();
        assert_eq!(back.embeddings(), gae.embeddings());
        let vgae = VgaeModel::init(30, &cfg, &phi, &mut rng).unwrap();
        let back = VgaeModel::from_checkpoint(&vgae.to_checkpoint(), Features::Identity(30), &phi).unwrap();
        assert_eq!(back.embeddings(), vgae.embeddings());
        assert!(GaeModel::from_checkpoint(&vgae.to_checkpoint(), Features::Identity(30), &phi).is_err());
        let small = renormalized_laplacian(&KnowledgeGraph::from_edges(3, [(0, 1)]).unwrap());
        assert!(GaeModel::from_checkpoint(&gae.to_checkpoint(), Features::Identity(3), &small).is_err());
    }

    #[test]
    fn gae_gradient_check() {
        let g = KnowledgeGraph::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (1, 3)]).unwrap();
        let phi = renormalized_laplacian(&g);
        let cfg = BaselineConfig { hidden_dim: 4, embedding_dim: 3, ..Default::default() };
        let mut rng = RngState::new(4);
        let m = GaeModel::init(5, &cfg, &phi, &mut rng).unwrap();
        let pos = [(0, 1), (2, 3)];
        let neg = [(0, 4), (1, 4)];
        let (_, grads) = m.loss_and_gradient(&phi, &pos, &neg).unwrap();
        let acts = m.encoder().activations().to_vec();
        let loss = |ws: &[Matrix]| {
            let enc = GcnParams::new(ws.to_vec(), acts.clone())?;
            Ok(GaeModel::new(enc, Features::Identity(5), &phi)?.loss_and_gradient(&phi, &pos, &neg)?.0)
        };
        let r = finite_difference_check(loss, m.encoder().weights(), &grads, 1e-5, 1000).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn vgae_gradient_check_includes_kl() {
        let g = KnowledgeGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let phi = renormalized_laplacian(&g);
        let cfg = BaselineConfig { hidden_dim: 3, embedding_dim: 2, ..Default::default() };
        let mut rng = RngState::new(6);
        let m = VgaeModel::init(4, &cfg, &phi, &mut rng).unwrap();
        let eps = standard_normal_matrix(4, 2, &mut rng);
        let pos = [(0, 1), (2, 3)];
        let neg = [(0, 3)];
        let (_, grads) = m.loss_and_gradient(&phi, &pos, &neg, &eps).unwrap();
        let loss = |ps: &[Matrix]| Ok(m.with_params(ps, &phi)?.loss_and_gradient(&phi, &pos, &neg, &eps)?.0);
        let r = finite_difference_check(loss, &m.params(), &grads, 1e-5, 1000).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn scores_symmetric_and_closed_form() {
        let l3 = 3f64.ln();
        let e = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![l3, 0.0]]);
        assert_eq!(baseline_score(&e, 0, 1).unwrap(), 0.5);
        assert!((baseline_score(&e, 0, 2).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(baseline_score(&e, 2, 1).unwrap(), baseline_score(&e, 1, 2).unwrap());
    }
}
