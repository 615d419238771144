use rand::Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Logistic function, stable for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_matrix(m: &Matrix) -> Matrix {
    m.map(sigmoid)
}

/// `ln σ(x)` without forming σ(x).
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Log-sum-exp stabilized softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Empty("softmax logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("softmax logits".into()));
    }
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    Ok(out)
}

/// `ln softmax(logits)`.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Empty("softmax logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("softmax logits".into()));
    }
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    Ok(logits.iter().map(|&l| l - lse).collect())
}

/// Draws an index with probability `p[i]` by inverse-CDF sampling.
pub fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> Result<usize> {
    if p.is_empty() {
        return Err(Error::Empty("categorical distribution"));
    }
    let mut total = 0.0;
    for &pi in p {
        if pi < 0.0 || !pi.is_finite() {
            return Err(Error::InvalidArgument(format!("probability {pi} is not a valid weight")));
        }
        total += pi;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("probabilities sum to {total}, expected 1")));
    }
    Ok(sample_unchecked(p, rng))
}

/// Inverse-CDF draw for a vector already known to be a distribution.
pub(crate) fn sample_unchecked<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            acc += pi;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    // rounding left u beyond the accumulated mass
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;

    #[test]
    fn sigmoid_basics() {
        assert_eq!(sigmoid(0.0), 0.5);
        for x in [-30.0, -2.5, 0.1, 7.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
        assert!((sigmoid(100.0) - 1.0).abs() < 1e-12);
        assert!(sigmoid(-1000.0) >= 0.0 && sigmoid(1000.0) <= 1.0);
        assert!(sigmoid(-1000.0).is_finite() && sigmoid(1000.0).is_finite());
    }

    #[test]
    fn log_sigmoid_matches_direct_form() {
        for x in [-20.0, -1.0, 0.0, 0.5, 15.0] {
            assert!((log_sigmoid(x) - sigmoid(x).ln()).abs() < 1e-12);
        }
        assert!(log_sigmoid(-800.0).is_finite());
    }

    #[test]
    fn softmax_closed_forms() {
        let p = softmax(&[0.0, 3f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-12 && (p[1] - 0.75).abs() < 1e-12);
        let u = softmax(&[2.0; 5]).unwrap();
        assert!(u.iter().all(|&x| (x - 0.2).abs() < 1e-15));
        assert!(matches!(softmax(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax(&[1000.0, 999.0, -1000.0]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|x| x.is_finite()));
        let lp = log_softmax(&[1000.0, 999.0]).unwrap();
        assert!((lp[0].exp() + lp[1].exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_distribution_always_hits() {
        let mut rng = RngState::new(1);
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn fair_coin_frequency() {
        let mut rng = RngState::new(42);
        let n = 100_000;
        let ones = (0..n).filter(|_| sample_categorical(&[0.5, 0.5], &mut rng).unwrap() == 1).count();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn draws_are_reproducible() {
        let p = [0.1, 0.2, 0.3, 0.4];
        let mut a = RngState::new(9);
        let mut b = RngState::new(9);
        let xs: Vec<_> = (0..50).map(|_| sample_categorical(&p, &mut a).unwrap()).collect();
        let ys: Vec<_> = (0..50).map(|_| sample_categorical(&p, &mut b).unwrap()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn rejects_bad_weights() {
        let mut rng = RngState::new(0);
        assert!(sample_categorical(&[1.5, -0.5], &mut rng).is_err());
        assert!(sample_categorical(&[0.2, 0.2], &mut rng).is_err());
    }
}
