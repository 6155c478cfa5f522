//! Generates a preset scene and writes it as MOT-format files.
//!
//! `cargo run --release --example synthetic_scene -- [preset] [seed] [out_dir]`

use std::path::PathBuf;

use sparsetrack::io::{format_features, format_mot, sequence_rows, write_files_atomically};
use sparsetrack::synth::{generate, preset, PRESETS};

fn main() -> sparsetrack::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "crossing".into());
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(1);
    let out = args.next().map(PathBuf::from);

    let scene = generate(&preset(&name, seed)?)?;
    let gt = scene.gt_rows();
    let detections: usize = scene.sequence.frames.iter().map(Vec::len).sum();
    let true_dets = scene.sequence.frames.iter().flatten().filter(|d| d.gt_id.is_some()).count();
    println!("presets: {}", PRESETS.join(", "));
    println!(
        "{name} seed {seed}: {} frames, {} gt boxes, {detections} detections ({} clutter)",
        scene.sequence.len(),
        gt.len(),
        detections - true_dets
    );
    println!("detection recall {:.3}", true_dets as f64 / gt.len() as f64);

    if let Some(dir) = out {
        let (rows, features) = sequence_rows(&scene.sequence);
        write_files_atomically(&[
            (dir.join("det.txt"), format_mot(&rows)),
            (dir.join("features.txt"), format_features(&features)),
            (dir.join("gt.txt"), format_mot(&gt)),
        ])?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
