//! Scores a MOT-format hypothesis file against ground truth.
//!
//! `cargo run --release --example evaluate_files -- gt.txt hyp.txt`
//! Without arguments a synthetic scene is scored against a degraded copy
//! of its own ground truth.

use std::path::PathBuf;

use sparsetrack::io::{read_mot, MotRow};
use sparsetrack::metrics::evaluate;
use sparsetrack::synth::{generate, preset};

fn main() -> sparsetrack::Result<()> {
    let args: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    let (gt, hyp) = match args.as_slice() {
        [gt, hyp] => (read_mot(gt)?, read_mot(hyp)?),
        _ => {
            let gt = generate(&preset("easy", 1)?)?.gt_rows();
            // Drop every tenth row and relabel target 1 halfway through.
            let hyp: Vec<MotRow> = gt
                .iter()
                .enumerate()
                .filter(|(k, _)| k % 10 != 0)
                .map(|(_, r)| MotRow {
                    id: if r.id == 1 && r.frame > 30 { 99 } else { r.id },
                    ..*r
                })
                .collect();
            (gt, hyp)
        }
    };
    let e = evaluate("sequence", &gt, &hyp);
    println!("{}", serde_json::to_string_pretty(&e).expect("serializable"));
    Ok(())
}
