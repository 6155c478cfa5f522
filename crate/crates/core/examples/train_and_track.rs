//! Trains the edge classifier on crossing scenes and compares it with the
//! IoU baseline on held-out seeds.
//!
//! `cargo run --release --example train_and_track -- [integration] [epochs]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparsetrack::graph::{GraphConfig, RatioVariant};
use sparsetrack::integration::IntegrationMode;
use sparsetrack::io::MotRow;
use sparsetrack::metrics::{aggregate, evaluate};
use sparsetrack::motion::KalmanFilter;
use sparsetrack::mpn::{train, AssociationModel, MpnConfig, TrainConfig, TrainProgress};
use sparsetrack::synth::{generate, preset};
use sparsetrack::tracker::{run_sequence, ForecastMode, IouScorer, Scorer, TrackerConfig};

fn main() -> sparsetrack::Result<()> {
    let mut args = std::env::args().skip(1);
    let mode: IntegrationMode = args.next().map(|s| s.parse()).transpose()?.unwrap_or(IntegrationMode::IouGuided);
    let epochs: u32 = args.next().map(|s| s.parse().expect("epochs")).unwrap_or(25);

    let data = (100..108)
        .map(|s| Ok(generate(&preset("crossing", s)?)?.sequence))
        .collect::<sparsetrack::Result<Vec<_>>>()?;
    let test = (1..=10).map(|s| generate(&preset("crossing", s)?)).collect::<sparsetrack::Result<Vec<_>>>()?;
    let graph = GraphConfig {
        ratio_variant: RatioVariant::None,
        ..GraphConfig::default()
    };
    let tracker = TrackerConfig {
        forecast: ForecastMode::Off,
        ..TrackerConfig::default()
    };

    let mut model = AssociationModel::new(MpnConfig::default(), mode, &mut ChaCha8Rng::seed_from_u64(0))?;
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    for s in train(&mut model, &data, &graph, &cfg, &KalmanFilter::default(), &mut TrainProgress::default())? {
        println!("epoch {:>2} lr {:.0e} loss {:.4} accuracy {:.4}", s.epoch, s.learning_rate, s.loss, s.accuracy);
    }

    let baseline = IouScorer { integration: mode };
    for (name, scorer) in [("iou baseline", &baseline as &dyn Scorer), ("trained", &model)] {
        let mut evals = Vec::new();
        for scene in &test {
            let r = run_sequence(&scene.sequence, scorer, &tracker, &graph, None)?;
            let hyp: Vec<MotRow> = r.rows.iter().map(MotRow::from).collect();
            evals.push(evaluate(&scene.config.name, &scene.gt_rows(), &hyp));
        }
        let all = aggregate("all", &evals);
        println!("{name:>12} ({mode}): IDF1 {:.3} MOTA {:.3} IDS {}", all.idf1, all.mota, all.ids);
    }
    Ok(())
}
