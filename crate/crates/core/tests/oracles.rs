mod common;

use isac_core::channel::{bits_per_index, encode_index, hard_decode, transmit, ChannelConfig};
use isac_core::decoder::{CandidatePolicy, DecoderModel, DecoderObjective, InferenceDistribution};
use isac_core::diagnostics::{decoder_exact_suite, decoder_monte_carlo_suite, MC_SAMPLES};
use isac_core::experiments::{reference_value, DatasetSource, DatasetSpec};
use isac_core::graph::{renormalized_laplacian, split_links};
use isac_core::receiver::{db_improvement, ser_experiment, PriorSource, UniformPrior};
use isac_core::{KnowledgeGraph, Matrix, Result, RngState};
use statrs::distribution::{ContinuousCDF, Normal};

fn q_function(x: f64) -> f64 {
    1.0 - Normal::new(0.0, 1.0).unwrap().cdf(x)
}

#[test]
fn phi_hand_computed_cases() {
    let two = KnowledgeGraph::from_edges(2, [(0, 1)]).unwrap();
    let phi = renormalized_laplacian(&two);
    assert!(phi.max_abs_diff(&Matrix::filled(2, 2, 0.5)).unwrap() < 1e-15);
    let lone = KnowledgeGraph::from_edges(1, []).unwrap();
    assert_eq!(renormalized_laplacian(&lone), Matrix::identity(1));
}

#[test]
fn bit_error_rate_follows_q_function() {
    // 20-bit blocks, 50 000 of them: 10⁶ bits per SNR point
    let n = 1 << 20;
    let blocks = 50_000;
    for snr_db in [0.0, 2.0, 4.0, 6.0] {
        let cfg = ChannelConfig::awgn(snr_db).unwrap();
        let mut rng = RngState::new(snr_db as u64 + 100);
        let mut errors = 0usize;
        for b in 0..blocks {
            let idx = (b * 7919) % n;
            let block = encode_index(idx, n).unwrap();
            let y = transmit(&block, &cfg, &mut rng);
            errors += y.iter().zip(&block.symbols).filter(|(r, x)| r.signum() != x.signum()).count();
        }
        let bits = (blocks * 20) as f64;
        let p = q_function((2.0 * cfg.snr_linear()).sqrt());
        let sigma = (bits * p * (1.0 - p)).sqrt();
        assert!((errors as f64 - bits * p).abs() <= 3.0 * sigma, "{snr_db} dB: {errors} errors, expected {}", bits * p);
    }
}

#[test]
fn noise_variance_convention() {
    let cfg = ChannelConfig::new(2.0, 0.0).unwrap();
    assert!((cfg.noise_variance() - 2.0).abs() < 1e-15);
    let cfg = ChannelConfig::awgn(10.0).unwrap();
    assert!((cfg.noise_variance() - 0.05).abs() < 1e-15);
}

#[test]
fn infinite_snr_round_trip() {
    let cfg = ChannelConfig::noiseless();
    let mut rng = RngState::new(0);
    for n in [2, 3, 5, 64, 100, 5242] {
        for idx in (0..n).step_by((n / 50).max(1)) {
            let y = transmit(&encode_index(idx, n).unwrap(), &cfg, &mut rng);
            assert_eq!(hard_decode(&y, &cfg, n).unwrap(), idx);
        }
    }
    assert_eq!(bits_per_index(5242), 13);
    assert_eq!(bits_per_index(2995), 12);
}

/// Independent `∇ E_{u∼π_d(·|v)}[cost(s_v(u))] = Σ_u π(u|v)·cost·∇ log π(u|v)`.
#[test]
fn expected_decoder_gradient_matches_enumeration() {
    let mut rng = RngState::new(5);
    let table = common::random_matrix(6, 3, 1.0, &mut rng);
    let scores = Matrix::from_fn(6, 6, |i, j| 0.1 + 0.8 * ((i * 7 + j * 3) % 10) as f64 / 10.0);
    let dec = DecoderModel::from_table(table.clone(), CandidatePolicy::Full).unwrap();
    let clues = [0, 3, 5];
    for objective in [DecoderObjective::Saturating, DecoderObjective::NonSaturating] {
        let lib = dec.expected_gradient(&clues, objective, |b| Ok(scores.select_rows(b))).unwrap();
        let mut oracle = Matrix::zeros(6, 3);
        for &v in &clues {
            let dist = dec.inference_rule(v).unwrap();
            for (&u, &p) in dist.candidates.iter().zip(&dist.probs) {
                let w = p * objective.cost(scores.get(v, u)) / clues.len() as f64;
                oracle.add_scaled(w, &common::log_prob_gradient(&table, v, u)).unwrap();
            }
        }
        assert!(lib.max_abs_diff(&oracle).unwrap() < 1e-12, "{objective:?}");
    }
}

#[test]
fn decoder_estimators_agree_with_enumeration() {
    assert_eq!(MC_SAMPLES, 100_000);
    let exact = decoder_exact_suite(0).unwrap();
    assert!(exact.error < 1e-4, "{exact:?}");
    let mc = decoder_monte_carlo_suite(0).unwrap();
    assert!(mc.error < 0.02, "{mc:?}");
}

/// Point mass on the transmitted index.
struct OraclePrior {
    partner: Vec<usize>,
}

impl PriorSource for OraclePrior {
    fn prior(&self, clue: usize) -> Result<InferenceDistribution> {
        Ok(InferenceDistribution { clue, candidates: vec![self.partner[clue]], probs: vec![1.0] })
    }
}

#[test]
fn oracle_prior_never_errs_and_uniform_prior_does() {
    // perfect matching: every clue has exactly one partner
    let n = 64;
    let edges: Vec<(usize, usize)> = (0..n / 2).map(|i| (2 * i, 2 * i + 1)).collect();
    let oracle = OraclePrior { partner: (0..n).map(|u| u ^ 1).collect() };
    let uniform = UniformPrior { node_count: n };
    let pts = ser_experiment(&[("oracle", &oracle), ("uniform", &uniform)], n, &edges, &[0.0, 4.0], 5000, 1.0, 3).unwrap();
    for p in &pts {
        if p.method == "oracle" {
            assert_eq!(p.errors, 0);
        } else {
            assert!(p.ser > 0.0);
        }
    }
}

#[test]
fn db_improvement_examples() {
    assert!((db_improvement(0.1, 0.01).unwrap() - 10.0).abs() < 1e-12);
    assert_eq!(db_improvement(0.3, 0.3).unwrap(), 0.0);
    assert_eq!(db_improvement(0.3, 0.0).unwrap(), f64::INFINITY);
    assert!(db_improvement(0.0, 0.1).is_err());
}

#[test]
fn surrogate_sizes_and_expert_count() {
    let g = DatasetSpec { name: "grqc".into(), source: DatasetSource::Synthetic { nodes: 5242, edges: 14496, seed: 7 } }
        .load()
        .unwrap();
    assert_eq!((g.node_count(), g.edge_count()), (5242, 14496));
    let split = split_links(&g, 0.05, 0).unwrap();
    assert_eq!(split.expert_edges.len(), 725);
    assert_eq!(split.test_positives.len(), 14496 - 725);
    assert_eq!(split.test_negatives.len(), split.test_positives.len());
}

#[test]
fn published_reference_values() {
    let at = |d: &str, m: &str, metric: &str, x: Option<f64>| reference_value(d, m, metric, x).unwrap();
    assert_eq!(at("grqc", "isac", "accuracy", None), 0.8601);
    assert_eq!(at("grqc", "vgae", "accuracy", None), 0.8061);
    assert_eq!(at("grqc", "gae", "accuracy", None), 0.7779);
    assert_eq!(at("grqc", "isac", "db_gain_vs_no-inference", Some(2.0)), 19.69);
    assert_eq!(at("grqc", "isac", "symbol_reduction_vs_vgae", Some(5.0)), 0.8428);
    assert_eq!(at("cora", "isac", "symbol_reduction_vs_gae", Some(5.0)), 0.8501);
}
