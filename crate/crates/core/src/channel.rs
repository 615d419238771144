//! Scalar-gain AWGN channel carrying term indices as antipodal bit symbols.
//!
//! An index is sent as its big-endian binary expansion over
//! `⌈log₂ n⌉` symbols, bit `b` mapped to `2b − 1`. The receiver sees
//! `y = H·x + N` with `N ~ 𝒩(0, σ²)`, `σ² = H²/(2·SNR)`, SNR being the
//! per-symbol `E_s/N₀` with `E_s = H²`.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::RngState;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelConfig {
    pub gain: f64,
    /// `f64::INFINITY` means a noiseless channel.
    pub snr_db: f64,
}

impl ChannelConfig {
    pub fn new(gain: f64, snr_db: f64) -> Result<Self> {
        if gain == 0.0 || !gain.is_finite() {
            return Err(Error::InvalidArgument(format!("channel gain {gain}")));
        }
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!("snr {snr_db} dB")));
        }
        Ok(ChannelConfig { gain, snr_db })
    }

    pub fn awgn(snr_db: f64) -> Result<Self> {
        Self::new(1.0, snr_db)
    }

    pub fn noiseless() -> Self {
        ChannelConfig { gain: 1.0, snr_db: f64::INFINITY }
    }

    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    pub fn noise_variance(&self) -> f64 {
        if self.snr_db == f64::INFINITY {
            0.0
        } else {
            self.gain * self.gain / (2.0 * self.snr_linear())
        }
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_variance().sqrt()
    }
}

/// Symbols needed to carry any index below `n` (at least one).
pub fn bits_per_index(n: usize) -> usize {
    if n <= 2 {
        1
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

/// Antipodal transmit block for one index.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolBlock {
    pub index: usize,
    pub symbols: Vec<f64>,
}

pub fn encode_index(index: usize, n: usize) -> Result<SymbolBlock> {
    if index >= n {
        return Err(Error::NodeOutOfRange { node: index, n });
    }
    let bits = bits_per_index(n);
    let symbols = (0..bits)
        .map(|i| if (index >> (bits - 1 - i)) & 1 == 1 { 1.0 } else { -1.0 })
        .collect();
    Ok(SymbolBlock { index, symbols })
}

/// `y = H·x + N`.
pub fn transmit(block: &SymbolBlock, cfg: &ChannelConfig, rng: &mut RngState) -> Vec<f64> {
    let sigma = cfg.noise_std();
    if sigma == 0.0 {
        return block.symbols.iter().map(|x| cfg.gain * x).collect();
    }
    let noise = Normal::new(0.0, sigma).expect("finite positive sigma");
    block.symbols.iter().map(|x| cfg.gain * x + noise.sample(rng)).collect()
}

/// Bitwise sign decisions. When the decided value is not a valid index, set
/// bits are cleared, least reliable (smallest `|y|`) first, until it is.
pub fn hard_decode(y: &[f64], cfg: &ChannelConfig, n: usize) -> Result<usize> {
    let bits = bits_per_index(n);
    if y.len() != bits {
        return Err(Error::Dimension(format!("{} received symbols, expected {bits}", y.len())));
    }
    let mut value = 0usize;
    for &yi in y {
        value = (value << 1) | usize::from(yi / cfg.gain > 0.0);
    }
    if value >= n {
        let mut order: Vec<usize> = (0..bits).collect();
        order.sort_by(|&a, &b| y[a].abs().total_cmp(&y[b].abs()).then(b.cmp(&a)));
        for i in order {
            let mask = 1 << (bits - 1 - i);
            if value & mask != 0 {
                value &= !mask;
                if value < n {
                    break;
                }
            }
        }
    }
    Ok(value)
}

/// Per-symbol `(ln p(y|bit 0), ln p(y|bit 1))` under the Gaussian model.
pub fn bit_log_likelihoods(y: &[f64], cfg: &ChannelConfig) -> Vec<(f64, f64)> {
    let var = cfg.noise_variance();
    let h = cfg.gain;
    if var == 0.0 {
        return y
            .iter()
            .map(|&yi| {
                let s = yi / h;
                if s > 0.0 {
                    (f64::NEG_INFINITY, 0.0)
                } else if s < 0.0 {
                    (0.0, f64::NEG_INFINITY)
                } else {
                    (0.0, 0.0)
                }
            })
            .collect();
    }
    let norm = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
    y.iter()
        .map(|&yi| {
            let l0 = norm - (yi + h) * (yi + h) / (2.0 * var);
            let l1 = norm - (yi - h) * (yi - h) / (2.0 * var);
            (l0, l1)
        })
        .collect()
}

/// `ln p(y|1) − ln p(y|0) = 2H·y/σ²`.
pub fn log_likelihood_ratios(y: &[f64], cfg: &ChannelConfig) -> Vec<f64> {
    let var = cfg.noise_variance();
    y.iter()
        .map(|&yi| {
            if var == 0.0 {
                let s = yi / cfg.gain;
                if s > 0.0 {
                    f64::INFINITY
                } else if s < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    0.0
                }
            } else {
                2.0 * cfg.gain * yi / var
            }
        })
        .collect()
}
