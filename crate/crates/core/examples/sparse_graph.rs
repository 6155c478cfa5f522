//! Builds the association graph of one frame densely and with both ratio
//! tests, showing how many candidate edges survive.
//!
//! `cargo run --release --example sparse_graph -- [frame]`

use sparsetrack::graph::{build_graph, GraphConfig, RatioVariant, TrackNode};
use sparsetrack::synth::{generate, preset};

fn main() -> sparsetrack::Result<()> {
    let frame: u32 = std::env::args().nth(1).map(|s| s.parse().expect("frame")).unwrap_or(100);
    let scene = generate(&preset("crowded", 1)?)?;
    // Trajectories taken from the ground truth of the previous frame.
    let tracks: Vec<TrackNode> = scene.ground_truth[frame as usize - 2]
        .iter()
        .map(|o| TrackNode {
            id: o.id,
            reference_box: o.bbox,
            last_frame: frame - 1,
            feature: o.feature.clone(),
        })
        .collect();
    let detections = scene.sequence.frame(frame).to_vec();
    println!("frame {frame}: {} trajectories, {} detections", tracks.len(), detections.len());
    for (variant, alpha) in [(RatioVariant::None, 0.3), (RatioVariant::Iou, 0.1), (RatioVariant::App, 0.3)] {
        let cfg = GraphConfig {
            ratio_variant: variant,
            alpha,
            fps: scene.sequence.fps,
            ..GraphConfig::default()
        };
        if let Some((graph, stats)) = build_graph(frame, tracks.clone(), detections.clone(), &cfg)? {
            let correct = graph
                .edges
                .iter()
                .filter(|e| graph.detections[e.detection].gt_id == Some(graph.tracks[e.track].id))
                .count();
            println!(
                "{:>5} alpha {alpha:.1}: {:>4} candidates -> {:>4} edges ({correct} true)",
                variant.to_string(),
                stats.candidates,
                stats.kept
            );
        }
    }
    Ok(())
}
