//! Semantic-aided symbol recovery: MAP decoding of a channel-corrupted term
//! index using the learned inference rule as the prior, and the SER sweep
//! built on it.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{bits_per_index, encode_index, log_likelihood_ratios, ChannelConfig};
use crate::decoder::{DecoderModel, InferenceDistribution};
use crate::error::{Error, Result};
use crate::graph::Edge;
use crate::numerics::RngState;

/// Symbol-error-rate measurement at one SNR.
#[derive(Clone, Debug, PartialEq)]
pub struct SerPoint {
    pub method: String,
    pub snr_db: f64,
    pub trials: usize,
    pub errors: usize,
    pub ser: f64,
}

/// Anything that can supply a prior over implicit terms for a clue.
pub trait PriorSource {
    fn prior(&self, clue: usize) -> Result<InferenceDistribution>;
}

impl PriorSource for DecoderModel {
    fn prior(&self, clue: usize) -> Result<InferenceDistribution> {
        self.inference_rule(clue)
    }
}

/// Equal weight on every node except the clue: decoding without inference.
#[derive(Clone, Copy, Debug)]
pub struct UniformPrior {
    pub node_count: usize,
}

impl PriorSource for UniformPrior {
    fn prior(&self, clue: usize) -> Result<InferenceDistribution> {
        let candidates: Vec<usize> = (0..self.node_count).filter(|&u| u != clue).collect();
        if candidates.is_empty() {
            return Err(Error::Empty("candidate set"));
        }
        let p = 1.0 / candidates.len() as f64;
        Ok(InferenceDistribution { clue, probs: vec![p; candidates.len()], candidates })
    }
}

/// Candidates with their log-prior, ready for repeated decoding.
struct PreparedPrior {
    entries: Vec<(usize, f64)>,
}

impl PreparedPrior {
    fn new(prior: &InferenceDistribution, bits: usize) -> Result<Self> {
        let mut entries = Vec::with_capacity(prior.candidates.len());
        for (&u, &p) in prior.candidates.iter().zip(&prior.probs) {
            if u >> bits != 0 {
                return Err(Error::InvalidArgument(format!("candidate {u} needs more than {bits} bits")));
            }
            if p > 0.0 {
                entries.push((u, p.ln()));
            }
        }
        if entries.is_empty() {
            return Err(Error::Empty("prior support"));
        }
        entries.sort_unstable_by_key(|e| e.0);
        Ok(PreparedPrior { entries })
    }

    /// argmax over candidates of `Σ_{i: bit_i(u)=1} LLR_i + ln prior(u)`,
    /// the MAP rule once the bit-0 likelihoods (common to all) are dropped.
    fn decode(&self, llr: &[f64]) -> usize {
        let bits = llr.len();
        if llr.iter().any(|l| l.is_infinite()) {
            return self.decode_noiseless(llr);
        }
        // split LLR sums over high and low halves into lookup tables
        let lo_bits = bits / 2;
        let hi_bits = bits - lo_bits;
        let table = |width: usize, offset: usize| -> Vec<f64> {
            let mut t = vec![0.0; 1 << width];
            for pattern in 1..(1usize << width) {
                let low = pattern.trailing_zeros() as usize;
                // bit `low` of the pattern is symbol index bits-1-(offset+low)
                t[pattern] = t[pattern & (pattern - 1)] + llr[bits - 1 - (offset + low)];
            }
            t
        };
        let t_lo = table(lo_bits, 0);
        let t_hi = table(hi_bits, lo_bits);
        let mask = (1usize << lo_bits) - 1;
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for &(u, lp) in &self.entries {
            let m = t_hi[u >> lo_bits] + t_lo[u & mask] + lp;
            if m > best.0 {
                best = (m, u);
            }
        }
        best.1
    }

    /// Infinite SNR: fewest sign disagreements first, then the prior.
    fn decode_noiseless(&self, llr: &[f64]) -> usize {
        let bits = llr.len();
        let mut best = (usize::MAX, f64::NEG_INFINITY, usize::MAX);
        for &(u, lp) in &self.entries {
            let mismatches = (0..bits)
                .filter(|&i| {
                    let bit = (u >> (bits - 1 - i)) & 1 == 1;
                    (bit && llr[i] < 0.0) || (!bit && llr[i] > 0.0)
                })
                .count();
            if mismatches < best.0 || (mismatches == best.0 && lp > best.1) {
                best = (mismatches, lp, u);
            }
        }
        best.2
    }
}

/// MAP estimate of the transmitted index from received symbols `y` and a
/// prior over candidate indices. Ties resolve to the smallest index.
pub fn map_decode(y: &[f64], prior: &InferenceDistribution, cfg: &ChannelConfig) -> Result<usize> {
    if y.is_empty() {
        return Err(Error::Empty("received block"));
    }
    if prior.candidates.len() != prior.probs.len() {
        return Err(Error::Dimension("prior candidates and probabilities differ".into()));
    }
    let prepared = PreparedPrior::new(prior, y.len())?;
    Ok(prepared.decode(&log_likelihood_ratios(y, cfg)))
}

struct Trial {
    clue: usize,
    target: usize,
}

/// SER of MAP decoding under each prior source, on identical trials.
///
/// Each trial draws a test edge and an orientation: one endpoint is the clue
/// (assumed received correctly), the other is sent through the channel. The
/// same trials and the same standard-normal noise draws (scaled per SNR) are
/// reused for every source and every SNR point.
pub fn ser_experiment(
    sources: &[(&str, &dyn PriorSource)],
    node_count: usize,
    test_edges: &[Edge],
    snrs_db: &[f64],
    trials: usize,
    gain: f64,
    seed: u64,
) -> Result<Vec<SerPoint>> {
    if test_edges.is_empty() {
        return Err(Error::Empty("test edges"));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let configs = snrs_db
        .iter()
        .map(|&s| ChannelConfig::new(gain, s))
        .collect::<Result<Vec<_>>>()?;
    let bits = bits_per_index(node_count);

    let mut pick = RngState::with_stream(seed, 0);
    let mut noise_rng = RngState::with_stream(seed, 1);
    let mut trial_list = Vec::with_capacity(trials);
    let mut noise = Vec::with_capacity(trials * bits);
    for _ in 0..trials {
        let (a, b) = test_edges[pick.random_range(0..test_edges.len())];
        let (clue, target) = if pick.random_bool(0.5) { (a, b) } else { (b, a) };
        trial_list.push(Trial { clue, target });
        for _ in 0..bits {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            noise.push(z);
        }
    }
    let mut by_clue: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (t, trial) in trial_list.iter().enumerate() {
        by_clue.entry(trial.clue).or_default().push(t);
    }

    let mut points = Vec::new();
    for &(name, source) in sources {
        let mut errors = vec![0usize; configs.len()];
        let mut y = vec![0.0; bits];
        for (&clue, members) in &by_clue {
            let prepared = PreparedPrior::new(&source.prior(clue)?, bits)?;
            for &t in members {
                let target = trial_list[t].target;
                let x = encode_index(target, node_count)?.symbols;
                let z = &noise[t * bits..(t + 1) * bits];
                for (s, cfg) in configs.iter().enumerate() {
                    let sigma = cfg.noise_std();
                    for i in 0..bits {
                        y[i] = cfg.gain * x[i] + sigma * z[i];
                    }
                    let decoded = prepared.decode(&log_likelihood_ratios(&y, cfg));
                    if decoded != target {
                        errors[s] += 1;
                    }
                }
            }
        }
        for (s, cfg) in configs.iter().enumerate() {
            points.push(SerPoint {
                method: name.to_string(),
                snr_db: cfg.snr_db,
                trials,
                errors: errors[s],
                ser: errors[s] as f64 / trials as f64,
            });
        }
    }
    Ok(points)
}

/// `10·log₁₀(ser_ref / ser_new)`; `+∞` when the new method made no errors.
pub fn db_improvement(ser_ref: f64, ser_new: f64) -> Result<f64> {
    if !(ser_ref > 0.0 && ser_ref <= 1.0) {
        return Err(Error::InvalidArgument(format!("reference SER {ser_ref} outside (0, 1]")));
    }
    if !(0.0..=1.0).contains(&ser_new) {
        return Err(Error::InvalidArgument(format!("SER {ser_new} outside [0, 1]")));
    }
    if ser_new == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (ser_ref / ser_new).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{hard_decode, transmit};

    fn dist(clue: usize, pairs: &[(usize, f64)]) -> InferenceDistribution {
        InferenceDistribution {
            clue,
            candidates: pairs.iter().map(|p| p.0).collect(),
            probs: pairs.iter().map(|p| p.1).collect(),
        }
    }

    #[test]
    fn prior_breaks_channel_ties() {
        // n = 4, y exactly between 01 and 11 in the first symbol
        let cfg = ChannelConfig::awgn(3.0).unwrap();
        let y = [0.0, 1.0];
        let p = dist(2, &[(1, 0.9), (3, 0.1)]);
        assert_eq!(map_decode(&y, &p, &cfg).unwrap(), 1);
        let p = dist(2, &[(1, 0.1), (3, 0.9)]);
        assert_eq!(map_decode(&y, &p, &cfg).unwrap(), 3);
        let p = dist(2, &[(3, 0.5), (1, 0.5)]);
        assert_eq!(map_decode(&y, &p, &cfg).unwrap(), 1, "exact tie goes to the lower index");
    }

    #[test]
    fn uniform_prior_matches_hard_decisions() {
        let n = 16;
        let cfg = ChannelConfig::awgn(1.0).unwrap();
        let prior = UniformPrior { node_count: n + 1 }.prior(n).unwrap();
        let mut rng = RngState::new(8);
        for t in 0..500 {
            let idx = t % n;
            let y = transmit(&encode_index(idx, n).unwrap(), &cfg, &mut rng);
            assert_eq!(map_decode(&y, &prior, &cfg).unwrap(), hard_decode(&y, &cfg, n).unwrap());
        }
    }

    #[test]
    fn high_snr_ignores_a_wrong_prior() {
        let n = 8;
        let cfg = ChannelConfig::awgn(40.0).unwrap();
        let mut rng = RngState::new(4);
        let prior = dist(0, &[(1, 0.001), (2, 0.001), (3, 0.001), (4, 0.001), (5, 0.993), (6, 0.002), (7, 0.001)]);
        for idx in 1..n {
            let y = transmit(&encode_index(idx, n).unwrap(), &cfg, &mut rng);
            assert_eq!(map_decode(&y, &prior, &cfg).unwrap(), idx);
        }
        let y = transmit(&encode_index(3, n).unwrap(), &ChannelConfig::noiseless(), &mut rng);
        assert_eq!(map_decode(&y, &prior, &ChannelConfig::noiseless()).unwrap(), 3);
    }

    #[test]
    fn db_improvement_values() {
        assert_eq!(db_improvement(0.3, 0.3).unwrap(), 0.0);
        assert!((db_improvement(0.1, 0.001).unwrap() - 20.0).abs() < 1e-12);
        let a = db_improvement(0.2, 0.05).unwrap();
        let b = db_improvement(0.05, 0.2).unwrap();
        assert!((a + b).abs() < 1e-12);
        assert_eq!(db_improvement(0.2, 0.0).unwrap(), f64::INFINITY);
        assert!(db_improvement(0.0, 0.1).is_err());
    }

    #[test]
    fn ser_experiment_is_deterministic_and_paired() {
        let edges = [(0, 1), (2, 3), (4, 5), (1, 6)];
        let uni = UniformPrior { node_count: 8 };
        let sources: [(&str, &dyn PriorSource); 1] = [("uniform", &uni)];
        let a = ser_experiment(&sources, 8, &edges, &[0.0, 6.0], 2000, 1.0, 3).unwrap();
        let b = ser_experiment(&sources, 8, &edges, &[0.0, 6.0], 2000, 1.0, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert!(a[1].errors <= a[0].errors);
        assert!(ser_experiment(&sources, 8, &[], &[0.0], 10, 1.0, 3).is_err());
    }
}
