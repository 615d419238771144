use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Outcome of a finite-difference comparison.
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub coords_checked: usize,
}

/// Compares `analytic` against central differences of `loss` at `params`.
///
/// The relative error of a coordinate is `|a − n| / max(|n|, floor)` where the
/// floor is `1e-3 · max|n|` over all checked coordinates, so coordinates whose
/// true gradient is negligible are judged on an absolute scale. When the
/// parameters hold more than `max_coords` entries an evenly strided subset is
/// checked (never fewer than 200 coordinates).
pub fn finite_difference_check<F>(
    mut loss: F,
    params: &[Matrix],
    analytic: &[Matrix],
    h: f64,
    max_coords: usize,
) -> Result<GradCheck>
where
    F: FnMut(&[Matrix]) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::InvalidArgument(format!("step {h} outside [1e-7, 1e-3]")));
    }
    if params.len() != analytic.len() {
        return Err(Error::Dimension("parameter and gradient counts differ".into()));
    }
    for (p, a) in params.iter().zip(analytic) {
        p.check_same_shape(a, "finite_difference_check")?;
    }

    let total: usize = params.iter().map(|p| p.data().len()).sum();
    let budget = max_coords.max(200);
    let stride = if total > budget { total.div_ceil(budget) } else { 1 };

    let mut work: Vec<Matrix> = params.to_vec();
    let mut pairs = Vec::new();
    let mut flat = 0usize;
    for t in 0..params.len() {
        for k in 0..params[t].data().len() {
            if flat % stride == 0 {
                let orig = params[t].data()[k];
                work[t].data_mut()[k] = orig + h;
                let up = finite(loss(&work)?)?;
                work[t].data_mut()[k] = orig - h;
                let down = finite(loss(&work)?)?;
                work[t].data_mut()[k] = orig;
                pairs.push(((up - down) / (2.0 * h), analytic[t].data()[k]));
            }
            flat += 1;
        }
    }

    let scale = pairs.iter().fold(0.0f64, |m, (n, _)| m.max(n.abs()));
    let floor = (1e-3 * scale).max(1e-10);
    let max_rel_error =
        pairs.iter().map(|(n, a)| (a - n).abs() / n.abs().max(floor)).fold(0.0, f64::max);
    Ok(GradCheck { max_rel_error, coords_checked: pairs.len() })
}

fn finite(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite("loss during finite differencing".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_sq_norm(ps: &[Matrix]) -> Result<f64> {
        Ok(ps.iter().map(|p| p.data().iter().map(|x| x * x).sum::<f64>()).sum::<f64>() / 2.0)
    }

    #[test]
    fn quadratic_is_exact() {
        let p = vec![Matrix::from_fn(3, 4, |i, j| i as f64 - 0.5 * j as f64 + 0.25)];
        let r = finite_difference_check(half_sq_norm, &p, &p, 1e-5, 1000).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        assert_eq!(r.coords_checked, 12);
    }

    #[test]
    fn doubled_gradient_is_caught() {
        let p = vec![Matrix::from_fn(2, 3, |i, j| 1.0 + i as f64 + j as f64)];
        let wrong = vec![p[0].scale(2.0)];
        let r = finite_difference_check(half_sq_norm, &p, &wrong, 1e-5, 1000).unwrap();
        assert!((r.max_rel_error - 1.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn subsamples_large_parameter_sets() {
        let p = vec![Matrix::filled(50, 50, 0.5)];
        let r = finite_difference_check(half_sq_norm, &p, &p, 1e-5, 300).unwrap();
        assert!(r.coords_checked >= 200 && r.coords_checked <= 300);
    }

    #[test]
    fn rejects_bad_step_and_nan_loss() {
        let p = vec![Matrix::zeros(1, 1)];
        assert!(finite_difference_check(half_sq_norm, &p, &p, 0.1, 10).is_err());
        let nan = |_: &[Matrix]| Ok(f64::NAN);
        assert!(matches!(
            finite_difference_check(nan, &p, &p, 1e-5, 10),
            Err(Error::NonFinite(_))
        ));
    }
}
