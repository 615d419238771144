//! Destination-side generator: a free per-node representation table defining
//! the learned inference rule `π_d(u | v) ∝ exp(θ_d(u)ᵀθ_d(v))`.
//!
//! The decoder never sees the graph. It learns only from the evaluator's
//! scores of the terms it samples, through the likelihood-ratio gradient
//! `E[f(u)·∇ log π_d(u | v)]`.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;

use crate::checkpoint::Checkpoint;
use crate::error::{check_node, Error, Result};
use crate::evaluator::clamp_prob;
use crate::numerics::{axpy, dot, sample_unchecked, sgd_step, sigmoid, softmax, Matrix, RngState};

/// Which terms the rule may infer for a clue.
#[derive(Clone, Debug, PartialEq)]
pub enum CandidatePolicy {
    /// Every node except the clue itself.
    Full,
    /// Precomputed candidate lists, one per clue (e.g. k-hop neighborhoods).
    Restricted(Vec<Vec<usize>>),
}

/// Per-sample cost the decoder descends.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DecoderObjective {
    /// `log(1 − p)`, the generator term of the semantic distance.
    #[default]
    Saturating,
    /// `−log p`; keeps a useful signal when the evaluator is confident.
    NonSaturating,
}

impl DecoderObjective {
    #[inline]
    pub fn cost(self, p: f64) -> f64 {
        let p = clamp_prob(p);
        match self {
            DecoderObjective::Saturating => (1.0 - p).ln(),
            DecoderObjective::NonSaturating => -p.ln(),
        }
    }
}

impl std::str::FromStr for DecoderObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "saturating" => Ok(DecoderObjective::Saturating),
            "non-saturating" | "nonsaturating" => Ok(DecoderObjective::NonSaturating),
            other => Err(Error::InvalidArgument(format!("unknown decoder objective {other:?}"))),
        }
    }
}

impl std::fmt::Display for DecoderObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecoderObjective::Saturating => "saturating",
            DecoderObjective::NonSaturating => "non-saturating",
        })
    }
}

/// `π_d(· | clue)` over an explicit candidate list.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceDistribution {
    pub clue: usize,
    pub candidates: Vec<usize>,
    pub probs: Vec<f64>,
}

impl InferenceDistribution {
    pub fn prob_of(&self, u: usize) -> f64 {
        self.candidates.iter().position(|&c| c == u).map_or(0.0, |i| self.probs[i])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.candidates[sample_unchecked(&self.probs, rng)]
    }

    /// CSV rows `clue,candidate,prob`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for (&c, &p) in self.candidates.iter().zip(&self.probs) {
            writeln!(out, "{},{},{}", self.clue, c, p)?;
        }
        Ok(())
    }
}

/// One feedback record: clue, sampled implicit term, evaluator score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecoderSample {
    pub clue: usize,
    pub implicit: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderModel {
    table: Matrix,
    policy: CandidatePolicy,
}

impl DecoderModel {
    /// Table drawn uniformly from `[−0.1, 0.1]`.
    pub fn init(node_count: usize, dim: usize, rng: &mut RngState) -> Self {
        let table = Matrix::from_fn(node_count, dim, |_, _| rng.random_range(-0.1..=0.1));
        DecoderModel { table, policy: CandidatePolicy::Full }
    }

    pub fn from_table(table: Matrix, policy: CandidatePolicy) -> Result<Self> {
        if let CandidatePolicy::Restricted(lists) = &policy {
            if lists.len() != table.rows() {
                return Err(Error::Dimension("one candidate list per node required".into()));
            }
            for (v, list) in lists.iter().enumerate() {
                for &u in list {
                    check_node(u, table.rows())?;
                    if u == v {
                        return Err(Error::InvalidArgument(format!("node {v} lists itself")));
                    }
                }
            }
        }
        Ok(DecoderModel { table, policy })
    }

    pub fn with_policy(self, policy: CandidatePolicy) -> Result<Self> {
        Self::from_table(self.table, policy)
    }

    pub fn table(&self) -> &Matrix {
        &self.table
    }

    pub fn policy(&self) -> &CandidatePolicy {
        &self.policy
    }

    pub fn node_count(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn candidates(&self, clue: usize) -> Vec<usize> {
        match &self.policy {
            CandidatePolicy::Full => (0..self.node_count()).filter(|&u| u != clue).collect(),
            CandidatePolicy::Restricted(lists) => lists[clue].clone(),
        }
    }

    /// `σ(θ_d(u)ᵀθ_d(v))`, the decoder's own link score.
    pub fn score(&self, u: usize, v: usize) -> Result<f64> {
        check_node(u, self.node_count())?;
        check_node(v, self.node_count())?;
        Ok(sigmoid(dot(self.table.row(u), self.table.row(v))))
    }

    /// Graph softmax over the clue's candidates.
    pub fn inference_rule(&self, clue: usize) -> Result<InferenceDistribution> {
        check_node(clue, self.node_count())?;
        let tv = self.table.row(clue);
        let logits: Vec<f64> = (0..self.node_count()).map(|u| dot(self.table.row(u), tv)).collect();
        self.distribution_from_logits(clue, &logits)
    }

    /// Rules for many clues at once; logits come from one blocked product.
    pub fn inference_rules(&self, clues: &[usize]) -> Result<Vec<InferenceDistribution>> {
        let mut out = Vec::with_capacity(clues.len());
        for chunk in clues.chunks(BLOCK) {
            for &c in chunk {
                check_node(c, self.node_count())?;
            }
            let logits = self.table.select_rows(chunk).matmul_t(&self.table)?;
            for (i, &c) in chunk.iter().enumerate() {
                out.push(self.distribution_from_logits(c, logits.row(i))?);
            }
        }
        Ok(out)
    }

    /// `logits[u]` must hold `θ_d(u)ᵀθ_d(clue)` for every node `u`.
    fn distribution_from_logits(&self, clue: usize, logits: &[f64]) -> Result<InferenceDistribution> {
        let candidates = self.candidates(clue);
        if candidates.is_empty() {
            return Err(Error::Empty("candidate set"));
        }
        let picked: Vec<f64> = candidates.iter().map(|&u| logits[u]).collect();
        let probs = softmax(&picked)?;
        Ok(InferenceDistribution { clue, candidates, probs })
    }

    /// `k` independent draws from `π_d(· | clue)`.
    pub fn sample_implicit(&self, clue: usize, k: usize, rng: &mut RngState) -> Result<Vec<usize>> {
        if k == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        let dist = self.inference_rule(clue)?;
        Ok((0..k).map(|_| dist.sample(rng)).collect())
    }

    /// `k` highest-probability candidates, ties by ascending index.
    pub fn top_k(&self, clue: usize, k: usize) -> Result<Vec<usize>> {
        let dist = self.inference_rule(clue)?;
        let mut order: Vec<usize> = (0..dist.candidates.len()).collect();
        order.sort_by(|&a, &b| {
            dist.probs[b]
                .total_cmp(&dist.probs[a])
                .then(dist.candidates[a].cmp(&dist.candidates[b]))
        });
        Ok(order.into_iter().take(k).map(|i| dist.candidates[i]).collect())
    }

    /// Score-function estimate of the gradient of the decoder cost:
    /// `mean_batch[(cost(p) − baseline)·∇ log π_d(û | v)]`, a descent
    /// direction.
    pub fn gradient(
        &self,
        batch: &[DecoderSample],
        objective: DecoderObjective,
        baseline: f64,
    ) -> Result<Matrix> {
        if batch.is_empty() {
            return Err(Error::Empty("decoder batch"));
        }
        let n = self.node_count();
        let scale = 1.0 / batch.len() as f64;
        let mut groups: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        for s in batch {
            check_node(s.clue, n)?;
            check_node(s.implicit, n)?;
            let w = (objective.cost(s.score) - baseline) * scale;
            groups.entry(s.clue).or_default().push((s.implicit, w));
        }
        let clues: Vec<usize> = groups.keys().copied().collect();
        let mut grad = Matrix::zeros(n, self.dim());
        for chunk in clues.chunks(BLOCK) {
            let dists = self.inference_rules(chunk)?;
            let mut weights = Matrix::zeros(chunk.len(), n);
            for (i, dist) in dists.iter().enumerate() {
                let lw = sampled_logit_weights(dist, &groups[&dist.clue])?;
                scatter(weights.row_mut(i), &dist.candidates, &lw);
            }
            self.accumulate_logit_gradient(chunk, &weights, &mut grad)?;
        }
        Ok(grad)
    }

    /// Exact expectation `∇ E_{u∼π_d(·|v)}[cost(p(u|v))]` summed over `clues`,
    /// scaled by `1/|clues|`. `scores(block)` must return, for each clue of
    /// the block in order, the evaluator score of every node against it.
    pub fn expected_gradient<F>(&self, clues: &[usize], objective: DecoderObjective, mut scores: F) -> Result<Matrix>
    where
        F: FnMut(&[usize]) -> Result<Matrix>,
    {
        if clues.is_empty() {
            return Err(Error::Empty("decoder batch"));
        }
        let n = self.node_count();
        let scale = 1.0 / clues.len() as f64;
        let mut grad = Matrix::zeros(n, self.dim());
        for chunk in clues.chunks(BLOCK) {
            let dists = self.inference_rules(chunk)?;
            let s = scores(chunk)?;
            if s.shape() != (chunk.len(), n) {
                return Err(Error::Dimension(format!("score block is {:?}, expected {:?}", s.shape(), (chunk.len(), n))));
            }
            let mut weights = Matrix::zeros(chunk.len(), n);
            for (i, dist) in dists.iter().enumerate() {
                let costs: Vec<f64> = dist.candidates.iter().map(|&u| objective.cost(s.get(i, u))).collect();
                let mean: f64 = dist.probs.iter().zip(&costs).map(|(p, c)| p * c).sum();
                // ∂E/∂logit_c = π(c)·(cost(c) − E[cost])
                let lw: Vec<f64> = dist.probs.iter().zip(&costs).map(|(p, c)| scale * p * (c - mean)).collect();
                scatter(weights.row_mut(i), &dist.candidates, &lw);
            }
            self.accumulate_logit_gradient(chunk, &weights, &mut grad)?;
        }
        Ok(grad)
    }

    /// Chain rule from logit weights `A[i][u]` on `logit = θ(u)ᵀθ(clue_i)`
    /// to the table: clue rows get `A·θ`, every row gets `Aᵀ·θ_clues`.
    fn accumulate_logit_gradient(&self, clues: &[usize], weights: &Matrix, grad: &mut Matrix) -> Result<()> {
        let to_clues = weights.matmul(&self.table)?;
        for (i, &c) in clues.iter().enumerate() {
            axpy(1.0, to_clues.row(i), grad.row_mut(c));
        }
        let to_all = weights.t_matmul(&self.table.select_rows(clues))?;
        grad.add_scaled(1.0, &to_all)
    }

    /// One descent step `θ_d ← θ_d − lr·∇`.
    pub fn update(&mut self, grad: &Matrix, lr: f64) -> Result<()> {
        sgd_step(std::slice::from_mut(&mut self.table), std::slice::from_ref(grad), lr)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("kind", "decoder");
        ck.set_meta("nodes", &self.node_count().to_string());
        ck.push_tensor("decoder.table", self.table.clone());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, node_count: usize) -> Result<Self> {
        let table = ck.tensor("decoder.table")?.clone();
        if table.rows() != node_count {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} nodes, graph has {node_count}",
                table.rows()
            )));
        }
        Self::from_table(table, CandidatePolicy::Full)
    }
}

/// Clue rows per blocked product.
const BLOCK: usize = 256;

fn scatter(row: &mut [f64], candidates: &[usize], values: &[f64]) {
    for (&c, &v) in candidates.iter().zip(values) {
        row[c] = v;
    }
}

/// For sampled terms with weights `w_s`, `Σ_s w_s ∇ log π(û_s)` in logit
/// space is `w_s` on the sampled candidate minus `(Σ_s w_s)·π(c)` on all.
fn sampled_logit_weights(dist: &InferenceDistribution, samples: &[(usize, f64)]) -> Result<Vec<f64>> {
    let total: f64 = samples.iter().map(|&(_, w)| w).sum();
    let mut lw: Vec<f64> = dist.probs.iter().map(|p| -total * p).collect();
    for &(u, w) in samples {
        let i = dist
            .candidates
            .iter()
            .position(|&c| c == u)
            .ok_or_else(|| Error::InvalidArgument(format!("{u} is not a candidate for clue {}", dist.clue)))?;
        lw[i] += w;
    }
    Ok(lw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(rows: &[Vec<f64>]) -> DecoderModel {
        DecoderModel::from_table(Matrix::from_rows(rows), CandidatePolicy::Full).unwrap()
    }

    #[test]
    fn equal_rows_and_zero_table_are_uniform() {
        for m in [model(&vec![vec![0.3, -0.2]; 4]), model(&vec![vec![0.0; 3]; 5])] {
            let d = m.inference_rule(0).unwrap();
            let k = d.candidates.len() as f64;
            assert!(!d.candidates.contains(&0));
            assert!(d.probs.iter().all(|p| (p - 1.0 / k).abs() < 1e-12));
        }
    }

    #[test]
    fn closed_form_probabilities() {
        // clue row (1, 0); candidate logits 0, ln 2, ln 2
        let l2 = 2f64.ln();
        let m = model(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![l2, 0.0], vec![l2, 5.0]]);
        let d = m.inference_rule(0).unwrap();
        assert_eq!(d.candidates, vec![1, 2, 3]);
        for (p, e) in d.probs.iter().zip([0.2, 0.4, 0.4]) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn top_k_ordering_and_ties() {
        let m = model(&vec![vec![0.0; 2]; 5]);
        assert_eq!(m.top_k(2, 1).unwrap(), vec![0]);
        assert_eq!(m.top_k(2, 10).unwrap(), vec![0, 1, 3, 4]);
        let l = |p: f64| p.ln();
        let m = model(&[vec![1.0], vec![l(0.2)], vec![l(0.5)], vec![l(0.3)]]);
        assert_eq!(m.top_k(0, 2).unwrap(), vec![2, 3]);
    }

    #[test]
    fn peaked_distribution_samples_its_mode() {
        let m = model(&[vec![10.0], vec![10.0], vec![-10.0], vec![0.0]]);
        let mut rng = RngState::new(3);
        assert_eq!(m.sample_implicit(0, 20, &mut rng).unwrap(), vec![1; 20]);
        assert!(m.sample_implicit(0, 0, &mut rng).is_err());
    }

    #[test]
    fn empty_batch_and_zero_lr() {
        let mut m = model(&vec![vec![0.1, 0.2]; 3]);
        assert!(matches!(m.gradient(&[], DecoderObjective::Saturating, 0.0), Err(Error::Empty(_))));
        let before = m.clone();
        let g = Matrix::filled(3, 2, 1.0);
        m.update(&g, 0.0).unwrap();
        assert_eq!(m, before);
        m.update(&Matrix::zeros(3, 2), 0.1).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn restricted_candidates() {
        let t = Matrix::filled(4, 2, 0.1);
        let m = DecoderModel::from_table(t.clone(), CandidatePolicy::Restricted(vec![vec![1], vec![0, 2], vec![1, 3], vec![2]])).unwrap();
        assert_eq!(m.inference_rule(1).unwrap().candidates, vec![0, 2]);
        assert!(DecoderModel::from_table(t.clone(), CandidatePolicy::Restricted(vec![vec![0]; 4])).is_err());
        let empty = DecoderModel::from_table(t, CandidatePolicy::Restricted(vec![vec![]; 4])).unwrap();
        assert!(matches!(empty.inference_rule(0), Err(Error::Empty(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = RngState::new(2);
        let m = DecoderModel::init(6, 3, &mut rng);
        assert!(m.table().data().iter().all(|x| x.abs() <= 0.1));
        let back = DecoderModel::from_checkpoint(&m.to_checkpoint(), 6).unwrap();
        assert_eq!(back, m);
        assert!(DecoderModel::from_checkpoint(&m.to_checkpoint(), 7).is_err());
    }

    #[test]
    fn distribution_csv() {
        let m = model(&vec![vec![0.0]; 3]);
        let mut buf = Vec::new();
        m.inference_rule(1).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("1,0,0.5"));
    }
}
