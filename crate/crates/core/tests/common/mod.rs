//! Property checks shared by the proptest suite and the acceptance run.
//! Each returns `Err` with a description of the first violation.
#![allow(dead_code)]

use isac_core::channel::{hard_decode, ChannelConfig};
use isac_core::decoder::{CandidatePolicy, DecoderModel, DecoderObjective, InferenceDistribution};
use isac_core::experiments::accuracy_eval;
use isac_core::gcn::{Activation, Features, GcnParams};
use isac_core::graph::{Operator, SparseMatrix};
use isac_core::numerics::softmax;
use isac_core::receiver::map_decode;
use isac_core::{EvaluatorModel, KnowledgeGraph, LinkSplit, Matrix, RngState};
use rand::Rng;

pub type Check = Result<(), String>;

/// Random simple graph on `n` nodes, each pair an edge with probability `p`.
pub fn random_graph(n: usize, p: f64, rng: &mut RngState) -> KnowledgeGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    KnowledgeGraph::from_edges(n, edges).expect("valid edges")
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut RngState) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..=scale))
}

/// `Φ·D̃^{1/2}𝟙 = D̃^{1/2}𝟙`, `Φ = Φᵀ` and spectral radius at most one.
pub fn phi_eigen_identity(g: &KnowledgeGraph) -> Check {
    let n = g.node_count();
    let phi = SparseMatrix::renormalized_laplacian(g);
    let root = Matrix::from_fn(n, 1, |u, _| ((g.degree(u) + 1) as f64).sqrt());
    let image = phi.apply(&root).map_err(|e| e.to_string())?;
    let err = image.max_abs_diff(&root).map_err(|e| e.to_string())?;
    if err > 1e-12 * (n as f64) {
        return Err(format!("eigen-identity residual {err}"));
    }
    let dense = phi.to_dense();
    let asym = dense.max_abs_diff(&dense.transpose()).map_err(|e| e.to_string())?;
    if asym > 1e-12 {
        return Err(format!("asymmetry {asym}"));
    }
    // Φ is symmetric, so power iteration on Φ² bounds |λ|max from below and converges to it
    let mut x = Matrix::from_fn(n, 1, |u, _| 1.0 + (u % 3) as f64);
    let mut radius = 0.0;
    for _ in 0..500 {
        let y = phi.apply(&phi.apply(&x).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let norm = y.frobenius_norm();
        if norm == 0.0 {
            break;
        }
        radius = (norm / x.frobenius_norm()).sqrt();
        x = y.scale(1.0 / norm);
    }
    if radius > 1.0 + 1e-9 {
        return Err(format!("spectral radius {radius}"));
    }
    Ok(())
}

pub fn softmax_shift_invariance(logits: &[f64], shift: f64) -> Check {
    let a = softmax(logits).map_err(|e| e.to_string())?;
    let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
    let b = softmax(&shifted).map_err(|e| e.to_string())?;
    let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    if diff > 1e-12 {
        return Err(format!("shift {shift} moved softmax by {diff}"));
    }
    Ok(())
}

/// Evaluator and decoder scores are exactly symmetric on a random instance.
pub fn score_symmetry(g: &KnowledgeGraph, seed: u64) -> Check {
    let n = g.node_count();
    let phi = SparseMatrix::renormalized_laplacian(g);
    let mut rng = RngState::new(seed);
    let gcn = GcnParams::init(&[n, 4, 3], &[Activation::Sigmoid; 2], &mut rng).map_err(|e| e.to_string())?;
    let ev = EvaluatorModel::new(gcn, Features::Identity(n), &phi).map_err(|e| e.to_string())?;
    let dec = DecoderModel::init(n, 3, &mut rng);
    for u in 0..n {
        for v in 0..n {
            let (a, b) = (ev.score(u, v).map_err(|e| e.to_string())?, ev.score(v, u).map_err(|e| e.to_string())?);
            if a.to_bits() != b.to_bits() {
                return Err(format!("evaluator score({u},{v}) = {a} but score({v},{u}) = {b}"));
            }
            let (a, b) = (dec.score(u, v).map_err(|e| e.to_string())?, dec.score(v, u).map_err(|e| e.to_string())?);
            if a.to_bits() != b.to_bits() {
                return Err(format!("decoder score({u},{v}) = {a} but score({v},{u}) = {b}"));
            }
        }
    }
    Ok(())
}

/// `∇ log π_d(u|v)` for a free table with logits `d_u·d_v` over `u ≠ v`.
pub fn log_prob_gradient(table: &Matrix, clue: usize, u: usize) -> Matrix {
    let (n, k) = table.shape();
    let logits: Vec<f64> = (0..n).filter(|&w| w != clue).map(|w| dot(table.row(w), table.row(clue))).collect();
    let probs = softmax(&logits).expect("non-empty");
    let cands: Vec<usize> = (0..n).filter(|&w| w != clue).collect();
    let mut g = Matrix::zeros(n, k);
    for (&w, &p) in cands.iter().zip(&probs) {
        let coef = f64::from(u8::from(w == u)) - p;
        for j in 0..k {
            g.set(w, j, g.get(w, j) + coef * table.get(clue, j));
            g.set(clue, j, g.get(clue, j) + coef * table.get(w, j));
        }
    }
    g
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `E_{u∼π_d(·|v)}[∇ log π_d(u|v)] = 0`, by enumeration with an independent
/// gradient and through the library's expected gradient under constant
/// evaluator scores.
pub fn score_function_zero_mean(table: &Matrix, clue: usize, constant_score: f64) -> Check {
    let n = table.rows();
    let dec = DecoderModel::from_table(table.clone(), CandidatePolicy::Full).map_err(|e| e.to_string())?;
    let dist = dec.inference_rule(clue).map_err(|e| e.to_string())?;
    let mut mean = Matrix::zeros(n, table.cols());
    for (&u, &p) in dist.candidates.iter().zip(&dist.probs) {
        mean.add_scaled(p, &log_prob_gradient(table, clue, u)).map_err(|e| e.to_string())?;
    }
    if mean.max_abs() > 1e-10 {
        return Err(format!("enumerated score mean {}", mean.max_abs()));
    }
    let scores = Matrix::filled(n, n, constant_score);
    let g = dec
        .expected_gradient(&[clue], DecoderObjective::Saturating, |block| Ok(scores.select_rows(block)))
        .map_err(|e| e.to_string())?;
    if g.max_abs() > 1e-10 {
        return Err(format!("expected gradient under constant scores {}", g.max_abs()));
    }
    Ok(())
}

/// Inference rule unchanged under `θ_d ↦ θ_d·Q` for orthogonal `Q`.
pub fn decoder_rotation_invariance(table: &Matrix, angle: f64, clue: usize) -> Check {
    let k = table.cols();
    let mut q = Matrix::identity(k);
    if k >= 2 {
        let (s, c) = angle.sin_cos();
        q.set(0, 0, c);
        q.set(0, 1, -s);
        q.set(1, 0, s);
        q.set(1, 1, c);
    }
    let rotated = table.matmul(&q).map_err(|e| e.to_string())?;
    let a = DecoderModel::from_table(table.clone(), CandidatePolicy::Full).map_err(|e| e.to_string())?;
    let b = DecoderModel::from_table(rotated, CandidatePolicy::Full).map_err(|e| e.to_string())?;
    let (pa, pb) = (a.inference_rule(clue).map_err(|e| e.to_string())?, b.inference_rule(clue).map_err(|e| e.to_string())?);
    let diff = pa.probs.iter().zip(&pb.probs).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    if diff > 1e-9 {
        return Err(format!("rotation changed probabilities by {diff}"));
    }
    Ok(())
}

pub fn kl_non_negative(mu: &Matrix, logvar: &Matrix) -> Check {
    let kl = isac_core::baselines::kl_divergence(mu, logvar).map_err(|e| e.to_string())?;
    if !(kl >= 0.0) {
        return Err(format!("KL {kl}"));
    }
    let zeros = Matrix::zeros(mu.rows(), mu.cols());
    let at_prior = isac_core::baselines::kl_divergence(&zeros, &zeros).map_err(|e| e.to_string())?;
    if at_prior != 0.0 {
        return Err(format!("KL at the prior is {at_prior}"));
    }
    if mu.max_abs() > 1e-3 || logvar.max_abs() > 1e-3 {
        if kl <= 0.0 {
            return Err("KL vanished away from the prior".into());
        }
    }
    Ok(())
}

/// With equal weight on every index in `0..n`, MAP decoding returns the
/// bitwise hard decision whenever that decision is a valid index.
pub fn map_uniform_matches_hard(y: &[f64], n: usize, snr_db: f64) -> Check {
    let cfg = ChannelConfig::awgn(snr_db).map_err(|e| e.to_string())?;
    let bits = y.len();
    let mut raw = 0usize;
    for &yi in y {
        raw = (raw << 1) | usize::from(yi > 0.0);
    }
    debug_assert_eq!(bits, isac_core::channel::bits_per_index(n));
    if raw >= n {
        return Ok(());
    }
    let prior = InferenceDistribution { clue: usize::MAX, candidates: (0..n).collect(), probs: vec![1.0 / n as f64; n] };
    let map = map_decode(y, &prior, &cfg).map_err(|e| e.to_string())?;
    let hard = hard_decode(y, &cfg, n).map_err(|e| e.to_string())?;
    if map != hard {
        return Err(format!("MAP {map} but hard decision {hard} for y = {y:?}"));
    }
    Ok(())
}

/// Accuracy unchanged by `s ↦ ½ + a(s − ½)` for `a ∈ [0.01, 1]`. Scores
/// must be exactly ½ or at least `1e-9` away from it, so the map cannot
/// round them onto the threshold.
pub fn accuracy_affine_invariance(pos: &[f64], neg: &[f64], a: f64) -> Check {
    let split = LinkSplit {
        expert_edges: Vec::new(),
        test_positives: (0..pos.len()).map(|i| (i, i + 1)).collect(),
        test_negatives: (0..neg.len()).map(|i| (i, i + 2)).collect(),
        expert_fraction: 0.5,
    };
    let score = |u: usize, v: usize| if v == u + 1 { pos[u] } else { neg[u] };
    let base = accuracy_eval(|u, v| Ok(score(u, v)), &split).map_err(|e| e.to_string())?;
    let moved = accuracy_eval(|u, v| Ok(0.5 + a * (score(u, v) - 0.5)), &split).map_err(|e| e.to_string())?;
    if base != moved {
        return Err(format!("accuracy {base} became {moved} under scale {a}"));
    }
    Ok(())
}
