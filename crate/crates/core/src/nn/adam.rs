use super::params::Parameters;
use super::Array;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Moment accumulators for Adam, aligned with a parameter set's visiting order.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Vec<Array>,
    second: Vec<Array>,
}

impl AdamState {
    pub fn new<P: Parameters + ?Sized>(params: &P) -> Self {
        let mut first = Vec::new();
        params.visit("", &mut |_, a| first.push(Array::zeros(a.shape())));
        Self {
            step: 0,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
            second: first.clone(),
            first,
        }
    }

    /// One bias-corrected Adam step. Parameters are left untouched when any
    /// gradient is non-finite.
    pub fn update<P, G>(&mut self, params: &mut P, grads: &G, lr: f64) -> Result<()>
    where
        P: Parameters + ?Sized,
        G: Parameters + ?Sized,
    {
        let mut grad_arrays: Vec<(String, Array)> = Vec::new();
        grads.visit("", &mut |name, a| grad_arrays.push((name.to_string(), a.clone())));
        if grad_arrays.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "{} gradient arrays for {} moment buffers",
                grad_arrays.len(),
                self.first.len()
            )));
        }
        for ((name, g), m) in grad_arrays.iter().zip(&self.first) {
            if g.shape() != m.shape() {
                return Err(Error::Shape(format!("gradient `{name}` has shape {:?}", g.shape())));
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        let mut shape_error = None;
        let mut idx = 0;
        params.visit_mut("", &mut |name, p| {
            if idx < self.first.len() && p.shape() != self.first[idx].shape() && shape_error.is_none() {
                shape_error = Some(name.to_string());
            }
            idx += 1;
        });
        if let Some(name) = shape_error {
            return Err(Error::Shape(format!("parameter `{name}` does not match optimizer state")));
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let mut idx = 0;
        let first = &mut self.first;
        let second = &mut self.second;
        params.visit_mut("", &mut |_, p| {
            let g = grad_arrays[idx].1.data();
            let m = first[idx].data_mut();
            let v = second[idx].data_mut();
            for (k, w) in p.data_mut().iter_mut().enumerate() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            idx += 1;
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::join;

    #[derive(Debug, Clone)]
    struct Scalar(Array);

    impl Scalar {
        fn new(v: f64) -> Self {
            Scalar(Array::from_vec(&[1], vec![v]).unwrap())
        }
        fn value(&self) -> f64 {
            self.0.data()[0]
        }
    }

    impl Parameters for Scalar {
        fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Array)) {
            f(&join(prefix, "x"), &self.0)
        }
        fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Array)) {
            f(&join(prefix, "x"), &mut self.0)
        }
    }

    #[test]
    fn first_step_is_about_lr_times_sign() {
        for &g in &[0.37, -2.5, 1e-3] {
            let mut p = Scalar::new(1.0);
            let mut s = AdamState::new(&p);
            s.update(&mut p, &Scalar::new(g), 0.01).unwrap();
            let delta = p.value() - 1.0;
            let exact = -0.01 * g / (g.abs() + EPSILON);
            assert!((delta - exact).abs() < 1e-15, "{delta} vs {exact}");
            assert!((delta + 0.01 * g.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Scalar::new(0.25);
        let mut s = AdamState::new(&p);
        for _ in 0..5 {
            s.update(&mut p, &Scalar::new(0.0), 0.1).unwrap();
        }
        assert_eq!(p.value(), 0.25);
        assert_eq!(s.step, 5);
    }

    #[test]
    fn two_steps_on_quadratic_match_scalar_reference() {
        // f(x) = 1.5 (x - 2)^2, gradient 3 (x - 2).
        let lr = 0.05;
        let mut p = Scalar::new(-1.0);
        let mut s = AdamState::new(&p);
        for _ in 0..2 {
            let g = 3.0 * (p.value() - 2.0);
            s.update(&mut p, &Scalar::new(g), lr).unwrap();
        }

        let (mut x, mut m, mut v) = (-1.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            let g = 3.0 * (x - 2.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= lr * mh / (vh.sqrt() + 1e-8);
        }
        assert_eq!(p.value(), x);
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut p = Scalar::new(1.0);
        let mut s = AdamState::new(&p);
        let err = s.update(&mut p, &Scalar::new(f64::NAN), 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(_)));
        assert_eq!(p.value(), 1.0);
        assert_eq!(s.step, 0);
    }
}
