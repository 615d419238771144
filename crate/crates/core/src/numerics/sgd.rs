use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Plain stochastic-gradient descent: `θ ← θ − lr·∇` for every tensor.
///
/// Ascent on an objective is expressed by passing the negated gradient, or by
/// calling [`sgd_ascent_step`].
pub fn sgd_step(params: &mut [Matrix], grads: &[Matrix], lr: f64) -> Result<()> {
    apply(params, grads, -lr, lr)
}

/// `θ ← θ + lr·∇`.
pub fn sgd_ascent_step(params: &mut [Matrix], grads: &[Matrix], lr: f64) -> Result<()> {
    apply(params, grads, lr, lr)
}

fn apply(params: &mut [Matrix], grads: &[Matrix], alpha: f64, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate {lr}")));
    }
    if params.len() != grads.len() {
        return Err(Error::Dimension(format!(
            "{} parameter tensors but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        p.check_same_shape(g, "sgd")?;
    }
    for (p, g) in params.iter_mut().zip(grads) {
        p.add_scaled(alpha, g)?;
    }
    Ok(())
}

/// Adam on an ascent objective with the usual moment decays `0.9`/`0.999`.
/// Produces the step tensors; [`AdamAscent::direction`] output is added
/// to the parameters as is.
#[derive(Clone, Debug)]
pub struct AdamAscent {
    lr: f64,
    t: i32,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamAscent {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(params: &[Matrix], lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {lr}")));
        }
        let zeros: Vec<Matrix> = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Ok(AdamAscent { lr, t: 0, first: zeros.clone(), second: zeros })
    }

    pub fn direction(&mut self, grads: &[Matrix]) -> Result<Vec<Matrix>> {
        if grads.len() != self.first.len() {
            return Err(Error::Dimension(format!("{} moments but {} gradients", self.first.len(), grads.len())));
        }
        for (m, g) in self.first.iter().zip(grads) {
            m.check_same_shape(g, "adam")?;
        }
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let mut steps = Vec::with_capacity(grads.len());
        for ((m, v), g) in self.first.iter_mut().zip(self.second.iter_mut()).zip(grads) {
            let mut step = Matrix::zeros(g.rows(), g.cols());
            for (((s, m), v), &g) in step.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(g.data()) {
                *m = Self::B1 * *m + (1.0 - Self::B1) * g;
                *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
                *s = self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            }
            steps.push(step);
        }
        Ok(steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![Matrix::filled(2, 2, 3.0)];
        sgd_step(&mut p, &[Matrix::zeros(2, 2)], 0.1).unwrap();
        assert_eq!(p[0], Matrix::filled(2, 2, 3.0));
    }

    #[test]
    fn single_step_arithmetic() {
        let mut p = vec![Matrix::filled(1, 1, 1.0)];
        sgd_step(&mut p, &[Matrix::filled(1, 1, 2.0)], 0.1).unwrap();
        assert!((p[0].get(0, 0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn half_steps_compose() {
        let g = [Matrix::from_rows(&[vec![0.3, -1.2]])];
        let mut a = vec![Matrix::from_rows(&[vec![1.0, 2.0]])];
        let mut b = a.clone();
        sgd_step(&mut a, &g, 0.05).unwrap();
        sgd_step(&mut a, &g, 0.05).unwrap();
        sgd_step(&mut b, &g, 0.1).unwrap();
        assert!(a[0].max_abs_diff(&b[0]).unwrap() < 1e-15);
    }

    #[test]
    fn shape_mismatch_leaves_params_untouched() {
        let mut p = vec![Matrix::zeros(2, 2), Matrix::zeros(1, 3)];
        let g = [Matrix::filled(2, 2, 1.0), Matrix::zeros(3, 1)];
        assert!(sgd_step(&mut p, &g, 0.1).is_err());
        assert_eq!(p[0], Matrix::zeros(2, 2));
        assert!(sgd_step(&mut p, &g[..1], 0.1).is_err());
    }

    #[test]
    fn adam_first_step_has_magnitude_lr() {
        let p = [Matrix::zeros(1, 3)];
        let mut adam = AdamAscent::new(&p, 0.01).unwrap();
        let s = adam.direction(&[Matrix::from_rows(&[vec![5.0, -0.001, 0.0]])]).unwrap();
        assert!((s[0].get(0, 0) - 0.01).abs() < 1e-9);
        assert!((s[0].get(0, 1) + 0.01).abs() < 1e-6);
        assert_eq!(s[0].get(0, 2), 0.0);
        assert!(adam.direction(&[Matrix::zeros(2, 2)]).is_err());
    }
}
