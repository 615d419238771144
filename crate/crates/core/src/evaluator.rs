//! Source-side discriminator: scores candidate links, evaluates the semantic
//! distance objective and ascends it by SGD.

use crate::checkpoint::Checkpoint;
use crate::error::{check_node, Error, Result};
use crate::gcn::{gcn_backward, gcn_forward, Features, GcnParams, GcnTrace};
use crate::graph::{Edge, Operator};
use crate::numerics::{axpy, dot, sgd_ascent_step, sigmoid, Matrix};

/// Probabilities are clamped to `[PROB_EPS, 1 − PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-12;

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// A scored pair with separate weights on its "true" (`log p`) and
/// "generated" (`log(1 − p)`) terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedPair {
    pub u: usize,
    pub v: usize,
    pub positive_weight: f64,
    pub negative_weight: f64,
}

/// Uniform per-term means: each positive weighs `1/|pos|`, each negative
/// `1/|neg|`.
pub fn mean_weighted(positives: &[Edge], negatives: &[Edge]) -> Vec<WeightedPair> {
    let wp = 1.0 / positives.len().max(1) as f64;
    let wn = 1.0 / negatives.len().max(1) as f64;
    positives
        .iter()
        .map(|&(u, v)| WeightedPair { u, v, positive_weight: wp, negative_weight: 0.0 })
        .chain(
            negatives
                .iter()
                .map(|&(u, v)| WeightedPair { u, v, positive_weight: 0.0, negative_weight: wn }),
        )
        .collect()
}

/// GCN evaluator with its current forward pass cached.
#[derive(Clone, Debug)]
pub struct EvaluatorModel {
    gcn: GcnParams,
    features: Features,
    trace: GcnTrace,
}

impl EvaluatorModel {
    pub fn new(gcn: GcnParams, features: Features, phi: &impl Operator) -> Result<Self> {
        let trace = gcn_forward(&features, phi, &gcn)?;
        Ok(EvaluatorModel { gcn, features, trace })
    }

    pub fn gcn(&self) -> &GcnParams {
        &self.gcn
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    /// The embedding table `θ_e`, one row per node.
    pub fn embeddings(&self) -> &Matrix {
        self.trace.embeddings()
    }

    pub fn node_count(&self) -> usize {
        self.embeddings().rows()
    }

    /// Recomputes the forward pass after a parameter change.
    pub fn refresh(&mut self, phi: &impl Operator) -> Result<()> {
        self.trace = gcn_forward(&self.features, phi, &self.gcn)?;
        Ok(())
    }

    #[inline]
    fn logit(&self, u: usize, v: usize) -> f64 {
        let e = self.embeddings();
        dot(e.row(u), e.row(v))
    }

    /// Probability that `u` and `v` are linked: `σ(θ_e(u)ᵀθ_e(v))`.
    pub fn score(&self, u: usize, v: usize) -> Result<f64> {
        let n = self.node_count();
        check_node(u, n)?;
        check_node(v, n)?;
        Ok(sigmoid(self.logit(u, v)))
    }

    /// Scores of every node against `v`.
    pub fn scores_against(&self, v: usize) -> Result<Vec<f64>> {
        check_node(v, self.node_count())?;
        let e = self.embeddings();
        let ev = e.row(v);
        Ok((0..e.rows()).map(|u| sigmoid(dot(e.row(u), ev))).collect())
    }

    /// Row `i` holds the scores of every node against `clues[i]`.
    pub fn scores_block(&self, clues: &[usize]) -> Result<Matrix> {
        let n = self.node_count();
        for &c in clues {
            check_node(c, n)?;
        }
        let e = self.embeddings();
        let mut s = e.select_rows(clues).matmul_t(e)?;
        s.map_inplace(sigmoid);
        Ok(s)
    }

    /// Semantic distance on a batch: mean of `log p` over positives plus mean
    /// of `log(1 − p)` over negatives. The evaluator maximizes this.
    pub fn loss(&self, positives: &[Edge], negatives: &[Edge]) -> Result<f64> {
        if positives.is_empty() {
            return Err(Error::Empty("positive pairs"));
        }
        if negatives.is_empty() {
            return Err(Error::Empty("negative pairs"));
        }
        self.weighted_loss(&mean_weighted(positives, negatives))
    }

    pub fn weighted_loss(&self, pairs: &[WeightedPair]) -> Result<f64> {
        pair_objective(self.embeddings(), pairs)
    }

    /// Ascent direction of [`EvaluatorModel::loss`] with respect to every GCN
    /// weight. A positive pair contributes `(1 − p)·∇(θ_e(u)ᵀθ_e(v))`, a
    /// negative pair `−p·∇(θ_e(u)ᵀθ_e(v))`.
    pub fn gradient(&self, phi: &impl Operator, positives: &[Edge], negatives: &[Edge]) -> Result<Vec<Matrix>> {
        if positives.is_empty() {
            return Err(Error::Empty("positive pairs"));
        }
        if negatives.is_empty() {
            return Err(Error::Empty("negative pairs"));
        }
        self.weighted_gradient(phi, &mean_weighted(positives, negatives))
    }

    pub fn weighted_gradient(&self, phi: &impl Operator, pairs: &[WeightedPair]) -> Result<Vec<Matrix>> {
        let upstream = self.embedding_gradient(pairs)?;
        gcn_backward(&self.features, &self.trace, phi, &self.gcn, &upstream)
    }

    /// `∂Γ/∂θ_e` for the embedding table itself.
    pub fn embedding_gradient(&self, pairs: &[WeightedPair]) -> Result<Matrix> {
        pair_embedding_gradient(self.embeddings(), pairs)
    }

    /// One ascent step `θ_e ← θ_e + lr·∇Γ_e`, then refreshes embeddings.
    pub fn update(&mut self, phi: &impl Operator, grads: &[Matrix], lr: f64) -> Result<()> {
        sgd_ascent_step(self.gcn.weights_mut(), grads, lr)?;
        self.refresh(phi)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("kind", "evaluator");
        ck.set_meta("nodes", &self.node_count().to_string());
        self.gcn.to_checkpoint("evaluator", &mut ck);
        ck
    }

    /// Restores a checkpoint; the node count must match `phi`.
    pub fn from_checkpoint(ck: &Checkpoint, features: Features, phi: &impl Operator) -> Result<Self> {
        let nodes: usize = ck.meta_parse("nodes")?;
        if nodes != phi.dim() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {nodes} nodes, graph has {}",
                phi.dim()
            )));
        }
        let gcn = GcnParams::from_checkpoint("evaluator", ck)?;
        EvaluatorModel::new(gcn, features, phi)
    }
}

/// `Σ w⁺·log p + w⁻·log(1 − p)` over pairs scored by inner products of
/// `emb` rows.
pub fn pair_objective(emb: &Matrix, pairs: &[WeightedPair]) -> Result<f64> {
    let n = emb.rows();
    let mut total = 0.0;
    for pair in pairs {
        check_node(pair.u, n)?;
        check_node(pair.v, n)?;
        let p = clamp_prob(sigmoid(dot(emb.row(pair.u), emb.row(pair.v))));
        total += pair.positive_weight * p.ln() + pair.negative_weight * (1.0 - p).ln();
    }
    Ok(total)
}

/// Gradient of [`pair_objective`] with respect to `emb`.
pub fn pair_embedding_gradient(emb: &Matrix, pairs: &[WeightedPair]) -> Result<Matrix> {
    let n = emb.rows();
    let mut grad = Matrix::zeros(n, emb.cols());
    for pair in pairs {
        check_node(pair.u, n)?;
        check_node(pair.v, n)?;
        let p = sigmoid(dot(emb.row(pair.u), emb.row(pair.v)));
        let c = pair.positive_weight * (1.0 - p) - pair.negative_weight * p;
        if c == 0.0 {
            continue;
        }
        // u == v lands both updates on one row, giving 2c·θ(u)
        axpy(c, emb.row(pair.v), grad.row_mut(pair.u));
        axpy(c, emb.row(pair.u), grad.row_mut(pair.v));
    }
    Ok(grad)
}
