//! Gradient oracle suites on enumerable toy instances, shared by the CLI
//! `gradcheck` command and the test suites.

use std::io::Write;

use rand::Rng;

use crate::baselines::{standard_normal_matrix, BaselineConfig, GaeModel, VgaeModel};
use crate::decoder::{CandidatePolicy, DecoderModel, DecoderObjective, DecoderSample};
use crate::error::Result;
use crate::evaluator::EvaluatorModel;
use crate::gcn::{Activation, FeatureMode, Features, GcnParams};
use crate::graph::{renormalized_laplacian, Edge, KnowledgeGraph};
use crate::numerics::{finite_difference_check, Matrix, RngState};

/// Tolerance for analytic gradients against central differences.
pub const FD_TOLERANCE: f64 = 1e-4;
/// Tolerance for the Monte-Carlo decoder estimator against enumeration.
pub const MC_TOLERANCE: f64 = 0.02;
pub const MC_SAMPLES: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub suite: &'static str,
    pub error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.error < self.tolerance
    }
}

pub fn write_gradcheck_csv<W: Write>(reports: &[GradCheckReport], mut out: W) -> Result<()> {
    writeln!(out, "suite,error,tolerance,passed")?;
    for r in reports {
        writeln!(out, "{},{},{},{}", r.suite, r.error, r.tolerance, r.passed())?;
    }
    Ok(())
}

/// Six-node toy: a triangle and a path joined by one bridge.
pub fn toy_graph() -> KnowledgeGraph {
    KnowledgeGraph::from_edges(6, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5)]).expect("valid toy")
}

const TOY_POS: [Edge; 3] = [(0, 1), (2, 3), (4, 5)];
const TOY_NEG: [Edge; 3] = [(0, 5), (1, 4), (1, 3)];

/// Runs every suite with initial weights drawn from `seed`.
pub fn gradient_suites(seed: u64) -> Result<Vec<GradCheckReport>> {
    Ok(vec![
        evaluator_suite(seed)?,
        decoder_exact_suite(seed)?,
        decoder_monte_carlo_suite(seed)?,
        gae_suite(seed)?,
        vgae_suite(seed)?,
    ])
}

pub fn evaluator_suite(seed: u64) -> Result<GradCheckReport> {
    let g = toy_graph();
    let phi = renormalized_laplacian(&g);
    let mut rng = RngState::with_stream(seed, 0xd1a0);
    let gcn = GcnParams::init(&[6, 4, 3], &[Activation::Sigmoid; 2], &mut rng)?;
    let model = EvaluatorModel::new(gcn, Features::Identity(6), &phi)?;
    let grads = model.gradient(&phi, &TOY_POS, &TOY_NEG)?;
    let acts = model.gcn().activations().to_vec();
    let loss = |ws: &[Matrix]| {
        let gcn = GcnParams::new(ws.to_vec(), acts.clone())?;
        EvaluatorModel::new(gcn, Features::Identity(6), &phi)?.loss(&TOY_POS, &TOY_NEG)
    };
    let r = finite_difference_check(loss, model.gcn().weights(), &grads, 1e-5, 1000)?;
    Ok(GradCheckReport { suite: "evaluator", error: r.max_rel_error, tolerance: FD_TOLERANCE })
}

fn toy_decoder(seed: u64) -> DecoderModel {
    let mut rng = RngState::with_stream(seed, 0xd1a1);
    let table = Matrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..=1.0));
    DecoderModel::from_table(table, CandidatePolicy::Full).expect("full policy")
}

/// Fixed evaluator-like scores in `(0.05, 0.95)`, row `v` against clue `v`.
fn toy_scores(seed: u64) -> Matrix {
    let mut rng = RngState::with_stream(seed, 0xd1a2);
    Matrix::from_fn(6, 6, |_, _| rng.random_range(0.05..0.95))
}

/// `mean_v E_{u∼π_d(·|v)}[cost(s_v(u))]` by enumeration.
fn expected_cost(decoder: &DecoderModel, clues: &[usize], scores: &Matrix, objective: DecoderObjective) -> Result<f64> {
    let mut total = 0.0;
    for &v in clues {
        let dist = decoder.inference_rule(v)?;
        total += dist.candidates.iter().zip(&dist.probs).map(|(&u, &p)| p * objective.cost(scores.get(v, u))).sum::<f64>();
    }
    Ok(total / clues.len() as f64)
}

pub fn decoder_exact_suite(seed: u64) -> Result<GradCheckReport> {
    let decoder = toy_decoder(seed);
    let scores = toy_scores(seed);
    let clues: Vec<usize> = (0..6).collect();
    let mut error: f64 = 0.0;
    for objective in [DecoderObjective::Saturating, DecoderObjective::NonSaturating] {
        let grad = decoder.expected_gradient(&clues, objective, |block| Ok(scores.select_rows(block)))?;
        let loss = |p: &[Matrix]| {
            let d = DecoderModel::from_table(p[0].clone(), CandidatePolicy::Full)?;
            expected_cost(&d, &clues, &scores, objective)
        };
        let r = finite_difference_check(loss, std::slice::from_ref(decoder.table()), &[grad], 1e-5, 1000)?;
        error = error.max(r.max_rel_error);
    }
    Ok(GradCheckReport { suite: "decoder_exact", error, tolerance: FD_TOLERANCE })
}

/// Relative error `‖ĝ − g‖ / ‖g‖` of the score-function estimator over
/// [`MC_SAMPLES`] draws for one clue, against the enumerated gradient.
pub fn decoder_monte_carlo_suite(seed: u64) -> Result<GradCheckReport> {
    let decoder = toy_decoder(seed);
    let scores = toy_scores(seed);
    let objective = DecoderObjective::Saturating;
    let clue = 2;
    let exact = decoder.expected_gradient(&[clue], objective, |block| Ok(scores.select_rows(block)))?;
    let baseline = expected_cost(&decoder, &[clue], &scores, objective)?;
    let dist = decoder.inference_rule(clue)?;
    let mut rng = RngState::with_stream(seed, 0xd1a3);
    let batch: Vec<DecoderSample> = (0..MC_SAMPLES)
        .map(|_| {
            let u = dist.sample(&mut rng);
            DecoderSample { clue, implicit: u, score: scores.get(clue, u) }
        })
        .collect();
    let estimate = decoder.gradient(&batch, objective, baseline)?;
    let error = estimate.sub(&exact)?.frobenius_norm() / exact.frobenius_norm();
    Ok(GradCheckReport { suite: "decoder_monte_carlo", error, tolerance: MC_TOLERANCE })
}

fn baseline_cfg(seed: u64) -> BaselineConfig {
    BaselineConfig {
        epochs: 0,
        lr: 0.01,
        hidden_dim: 4,
        embedding_dim: 3,
        features: FeatureMode::Identity,
        seed,
    }
}

pub fn gae_suite(seed: u64) -> Result<GradCheckReport> {
    let g = toy_graph();
    let phi = renormalized_laplacian(&g);
    let mut rng = RngState::with_stream(seed, 0xd1a4);
    let model = GaeModel::init(6, &baseline_cfg(seed), &phi, &mut rng)?;
    let (_, grads) = model.loss_and_gradient(&phi, &TOY_POS, &TOY_NEG)?;
    let acts = model.encoder().activations().to_vec();
    let loss = |ws: &[Matrix]| {
        let enc = GcnParams::new(ws.to_vec(), acts.clone())?;
        Ok(GaeModel::new(enc, Features::Identity(6), &phi)?.loss_and_gradient(&phi, &TOY_POS, &TOY_NEG)?.0)
    };
    let r = finite_difference_check(loss, model.encoder().weights(), &grads, 1e-5, 1000)?;
    Ok(GradCheckReport { suite: "gae", error: r.max_rel_error, tolerance: FD_TOLERANCE })
}

pub fn vgae_suite(seed: u64) -> Result<GradCheckReport> {
    let g = toy_graph();
    let phi = renormalized_laplacian(&g);
    let mut rng = RngState::with_stream(seed, 0xd1a5);
    let model = VgaeModel::init(6, &baseline_cfg(seed), &phi, &mut rng)?;
    let eps = standard_normal_matrix(6, 3, &mut rng);
    let (_, grads) = model.loss_and_gradient(&phi, &TOY_POS, &TOY_NEG, &eps)?;
    let loss = |ps: &[Matrix]| Ok(model.with_params(ps, &phi)?.loss_and_gradient(&phi, &TOY_POS, &TOY_NEG, &eps)?.0);
    let r = finite_difference_check(loss, &model.params(), &grads, 1e-5, 1000)?;
    Ok(GradCheckReport { suite: "vgae", error: r.max_rel_error, tolerance: FD_TOLERANCE })
}
