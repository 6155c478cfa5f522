//! Follows one trajectory feature through a partial occlusion under each
//! integration rule and prints its distance to the true identity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sparsetrack::integration::{integrate_average, integrate_iou_guided};
use sparsetrack::types::{feature_distance, normalized};

fn main() -> sparsetrack::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    let unit = |rng: &mut ChaCha8Rng| normalized(&(0..32).map(|_| n.sample(rng)).collect::<Vec<_>>()).expect("nonzero");
    let target = unit(&mut rng);
    let occluder = unit(&mut rng);

    let (mut avg, mut iou) = (target.clone(), target.clone());
    println!("{:>5} {:>7} {:>8} {:>8} {:>8}", "frame", "overlap", "none", "average", "iou");
    for t in 1..=12 {
        // Overlap with the occluder rises to 0.8 and falls back.
        let overlap = (0.8 - 0.2 * (t as f64 - 6.0).abs()).max(0.0);
        let seen: Vec<f64> = target.iter().zip(&occluder).map(|(a, b)| (1.0 - overlap) * a + overlap * b).collect();
        let seen = normalized(&seen).expect("nonzero");
        avg = integrate_average(&avg, &seen);
        iou = integrate_iou_guided(&iou, &seen, overlap);
        println!(
            "{t:>5} {overlap:>7.2} {:>8.3} {:>8.3} {:>8.3}",
            feature_distance(&seen, &target)?,
            feature_distance(&avg, &target)?,
            feature_distance(&iou, &target)?
        );
    }
    Ok(())
}
