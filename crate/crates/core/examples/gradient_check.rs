//! Checks the analytic gradient of the edge classifier loss against
//! central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsetrack::graph::EDGE_FEATURE_DIM;
use sparsetrack::mpn::{MpnConfig, MpnInput, MpnModel};
use sparsetrack::nn::{grad_check, Array};

fn main() -> sparsetrack::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = MpnConfig::default();
    let model = MpnModel::new(cfg, &mut rng)?;
    let mut rand = |r: usize, c: usize| Array::from_vec(&[r, c], (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect());
    let edges: Vec<(usize, usize)> = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).collect();
    let input = MpnInput {
        track_features: rand(3, cfg.feature_dim)?,
        det_features: rand(3, cfg.feature_dim)?,
        edge_features: rand(edges.len(), EDGE_FEATURE_DIM)?,
        edges,
    };
    let labels: Vec<bool> = (0..9).map(|k| k % 4 == 0).collect();
    let (loss, grads, _, _) = model.loss_and_grad(&input, &labels, 2.0)?;
    let report = grad_check(&model, &grads, |m| m.loss(&input, &labels, 2.0).expect("loss"), 1e-5, 1e-4);
    println!(
        "loss {loss:.6}; {} parameters, max relative error {:.2e}, {} above tolerance",
        report.checked,
        report.max_relative_error,
        report.failures.len()
    );
    Ok(())
}
