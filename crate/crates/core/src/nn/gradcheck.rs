use rayon::prelude::*;

use super::params::Parameters;

/// Analytic gradients whose magnitude is below this are compared in
/// absolute rather than relative terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradFailure {
    pub parameter: String,
    pub offset: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub tolerance: f64,
    pub max_relative_error: f64,
    /// Coordinates whose relative error exceeded the tolerance.
    pub failures: Vec<GradFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `analytic` against central finite differences of `loss` at
/// `params`, coordinate by coordinate.
pub fn grad_check<P, G, F>(params: &P, analytic: &G, loss: F, h: f64, tolerance: f64) -> GradCheckReport
where
    P: Parameters + Clone + Send + Sync,
    G: Parameters + ?Sized,
    F: Fn(&P) -> f64 + Sync,
{
    let analytic = analytic.flat();
    let n = params.param_count();
    assert_eq!(analytic.len(), n, "gradient layout does not match parameters");

    let chunk = n.div_ceil(rayon::current_num_threads().max(1) * 4).max(1);
    let numeric: Vec<f64> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(chunk)
        .flat_map_iter(|idx| {
            let mut local = params.clone();
            idx.iter()
                .map(|&i| {
                    let orig = local.get_flat(i);
                    local.set_flat(i, orig + h);
                    let up = loss(&local);
                    local.set_flat(i, orig - h);
                    let down = loss(&local);
                    local.set_flat(i, orig);
                    (up - down) / (2.0 * h)
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let mut max_relative_error: f64 = 0.0;
    let mut failures = Vec::new();
    for (i, (&a, &num)) in analytic.iter().zip(&numeric).enumerate() {
        let rel = relative_error(a, num);
        max_relative_error = max_relative_error.max(rel);
        if rel > tolerance || !rel.is_finite() {
            let (parameter, offset) = params.locate(i).unwrap_or_default();
            failures.push(GradFailure {
                parameter,
                offset,
                analytic: a,
                numeric: num,
                relative_error: rel,
            });
        }
    }
    GradCheckReport {
        checked: n,
        tolerance,
        max_relative_error,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Array, Linear, Mlp};

    fn linear_model() -> (Mlp, Array) {
        let l = Linear {
            weight: Array::from_vec(&[2, 3], vec![0.5, -1.0, 2.0, 0.3, 0.7, -0.2]).unwrap(),
            bias: Array::from_vec(&[2], vec![0.1, -0.4]).unwrap(),
        };
        let mlp = Mlp::from_layers(vec![l], Activation::Identity, Activation::Identity).unwrap();
        (mlp, Array::from_rows(&[[1.0, 2.0, -0.5], [0.3, -0.6, 0.9]]).unwrap())
    }

    fn linear_loss(m: &Mlp, x: &Array) -> f64 {
        // Linear in the parameters: sum of outputs weighted by fixed coefficients.
        let y = m.infer(x).unwrap();
        y.data().iter().zip([1.0, -2.0, 0.5, 3.0]).map(|(a, c)| a * c).sum()
    }

    fn linear_grads(m: &Mlp, x: &Array) -> Mlp {
        let (_, cache) = m.forward(x).unwrap();
        let dy = Array::from_rows(&[[1.0, -2.0], [0.5, 3.0]]).unwrap();
        m.backward(&cache, &dy).unwrap().1
    }

    #[test]
    fn linear_model_is_exact() {
        let (m, x) = linear_model();
        let g = linear_grads(&m, &x);
        let r = grad_check(&m, &g, |p| linear_loss(p, &x), 1e-5, 1e-8);
        assert!(r.passed(), "{r:?}");
        assert!(r.max_relative_error < 1e-8);
        assert_eq!(r.checked, 8);
    }

    #[test]
    fn corrupted_coordinate_is_flagged() {
        let (m, x) = linear_model();
        let mut g = linear_grads(&m, &x);
        g.layers[0].weight.data_mut()[4] += 0.5;
        let r = grad_check(&m, &g, |p| linear_loss(p, &x), 1e-5, 1e-4);
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].parameter, "layer0.weight");
        assert_eq!(r.failures[0].offset, 4);
    }
}
