//! Command-line interface.
//!
//! Every command takes `--out DIR`, writes its results there together with
//! `effective-config.toml`, and refuses to replace existing files unless
//! `--force` is given. Outputs appear atomically or not at all.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{RunConfig, EFFECTIVE_CONFIG_FILE};
use crate::error::{Error, Result};
use crate::graph::RatioVariant;
use crate::integration::IntegrationMode;
use crate::io::{
    assemble_sequence, format_features, format_mot, load_sequence_dir, read_features, read_mot, read_seqinfo,
    sequence_rows, write_files_atomically, MotRow, DETECTIONS_FILE, FEATURES_FILE, GROUND_TRUTH_FILE, SEQINFO_FILE,
};
use crate::metrics::{aggregate, evaluate, ratio_analysis, Evaluation, RatioAnalysisConfig};
use crate::motion::KalmanFilter;
use crate::mpn::{train, AssociationModel, EpochStats, TrainProgress};
use crate::synth::{generate, preset};
use crate::tracker::{run_sequence, sparsity_analysis, ForecastMode, IouScorer, Scorer};
use crate::types::Sequence;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.tsv";
pub const TRACKS_FILE: &str = "tracks.txt";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const REPORT_JSON_FILE: &str = "report.json";

#[derive(Debug, Parser)]
#[command(name = "sparsetrack", version, about = "Online multi-object tracking with sparse association graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic sequence (detections, features, ground truth).
    Synth(SynthArgs),
    /// Train the association model on labelled sequences.
    Train(TrainArgs),
    /// Track one sequence.
    Track(TrackArgs),
    /// Score a track file against ground truth.
    Eval(EvalArgs),
    /// Count true, false and inconclusive ratio-test decisions.
    Ratio(RatioArgs),
    /// Edge counts and association time for dense and ratio-filtered graphs.
    Sparsity(SparsityArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created when missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Replace existing output files.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelFlags {
    /// Ratio-test threshold.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Edge score threshold for matching.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Candidate trajectories per detection.
    #[arg(long)]
    pub k: Option<usize>,
    /// Ratio-test variant: none, iou or app.
    #[arg(long)]
    pub ratio: Option<RatioVariant>,
    /// Feature integration: none, lstm, average or iou.
    #[arg(long)]
    pub integration: Option<IntegrationMode>,
    /// Message passing rounds.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Disable forecasting of lost trajectories.
    #[arg(long)]
    pub no_forecast: bool,
    /// Forecasting mode: off, unconstrained or constrained.
    #[arg(long, conflicts_with = "no_forecast")]
    pub forecast: Option<ForecastMode>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Scene preset; overrides a `[scene]` section.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Sequence directories with ground truth.
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub epochs: Option<u32>,
    /// Checkpoint to continue training from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Detection file.
    #[arg(long)]
    pub det: PathBuf,
    /// Feature file.
    #[arg(long)]
    pub features: PathBuf,
    /// Sequence description; defaults to `seqinfo.toml` next to the detections.
    #[arg(long)]
    pub seqinfo: Option<PathBuf>,
    /// Trained model; without it edges are scored by IoU.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Ground-truth files, one per sequence.
    #[arg(long, required = true, num_args = 1..)]
    pub gt: Vec<PathBuf>,
    /// Track files, in the same order as `--gt`.
    #[arg(long, required = true, num_args = 1..)]
    pub hyp: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RatioArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Sequence directories with ground truth.
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Comma-separated thresholds.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.2, 0.3, 0.4, 0.5, 0.6])]
    pub alphas: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct SparsityArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Sequence directories.
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Trained model for every setting, or three models for the dense,
    /// IoU-ratio and appearance-ratio graphs in that order. Without it a
    /// seeded, untrained model is timed.
    #[arg(long, num_args = 1..=3)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub iou_alpha: f64,
    #[arg(long, default_value_t = 0.3)]
    pub app_alpha: f64,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    use clap::error::ErrorKind;
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli.command),
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            Ok(())
        }
        Err(e) => Err(Error::InvalidArgument(
            e.to_string().trim_start_matches("error: ").trim_end().to_string(),
        )),
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Track(a) => cmd_track(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Ratio(a) => cmd_ratio(&a),
        Command::Sparsity(a) => cmd_sparsity(&a),
    }
}

fn base_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    cfg.propagate_seed();
    Ok(cfg)
}

fn apply_model_flags(cfg: &mut RunConfig, f: &ModelFlags) {
    if let Some(v) = f.ratio {
        cfg.graph.ratio_variant = v;
        if f.alpha.is_none() {
            cfg.graph.alpha = v.default_alpha();
        }
    }
    if let Some(a) = f.alpha {
        cfg.graph.alpha = a;
    }
    if let Some(t) = f.tau {
        cfg.tracker.tau = t;
    }
    if let Some(k) = f.k {
        cfg.graph.k_neighbors = k;
    }
    if let Some(m) = f.integration {
        cfg.integration = m;
    }
    if let Some(l) = f.layers {
        cfg.mpn.layers = l;
    }
    if let Some(m) = f.forecast {
        cfg.tracker.forecast = m;
    }
    if f.no_forecast {
        cfg.tracker.forecast = ForecastMode::Off;
    }
}

/// Fails when any target exists and `force` is unset; creates `dir`.
fn prepare_out(dir: &Path, names: &[&str], force: bool) -> Result<Vec<PathBuf>> {
    let paths: Vec<PathBuf> = names.iter().map(|n| dir.join(n)).collect();
    if !force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(Error::WouldOverwrite(p.clone()));
        }
    }
    fs::create_dir_all(dir)?;
    Ok(paths)
}

fn echo(cfg: &RunConfig, header: &str) -> Result<String> {
    Ok(format!("# {header}\n{}", cfg.to_toml()?))
}

fn load_sequences(dirs: &[PathBuf], with_gt: bool) -> Result<Vec<Sequence>> {
    let mut seqs = dirs
        .iter()
        .map(|d| load_sequence_dir(d, with_gt))
        .collect::<Result<Vec<_>>>()?;
    seqs.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(seqs)
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    let seed = cfg.require_seed()?;
    if let Some(name) = &a.preset {
        cfg.scene = Some(preset(name, seed)?);
    }
    let scene_cfg = cfg
        .scene
        .clone()
        .ok_or_else(|| Error::Config("no scene: pass --preset or add a [scene] section".into()))?;
    cfg.validate()?;
    let scene = generate(&scene_cfg)?;
    let (det, features) = sequence_rows(&scene.sequence);
    let seqinfo = toml::to_string(&scene_cfg.seqinfo()).map_err(|e| Error::Config(e.to_string()))?;
    let names = [DETECTIONS_FILE, FEATURES_FILE, GROUND_TRUTH_FILE, SEQINFO_FILE, EFFECTIVE_CONFIG_FILE];
    let paths = prepare_out(&a.common.out, &names, a.common.force)?;
    let contents = [
        format_mot(&det),
        format_features(&features),
        format_mot(&scene.gt_rows()),
        seqinfo,
        echo(&cfg, "synth")?,
    ];
    write_files_atomically(&paths.into_iter().zip(contents).collect::<Vec<_>>())?;
    println!(
        "wrote {} detections and {} ground-truth boxes over {} frames to {}",
        det.len(),
        scene.gt_rows().len(),
        scene_cfg.frames,
        a.common.out.display()
    );
    Ok(())
}

/// Tab-separated loss table with a header row.
pub fn format_loss_table(stats: &[EpochStats]) -> String {
    let mut s = String::from("epoch\tlearning_rate\tloss\taccuracy\tgraphs\n");
    for e in stats {
        let _ = writeln!(s, "{}\t{}\t{:.6}\t{:.4}\t{}", e.epoch, e.learning_rate, e.loss, e.accuracy, e.graphs);
    }
    s
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    cfg.require_seed()?;
    apply_model_flags(&mut cfg, &a.model);
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    let (mut model, mut progress) = match &a.resume {
        Some(p) => {
            let (m, prog) = AssociationModel::load(p)?;
            cfg.mpn = m.mpn.config;
            cfg.integration = m.integration;
            (m, prog)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
            (AssociationModel::new(cfg.mpn, cfg.integration, &mut rng)?, TrainProgress::default())
        }
    };
    cfg.validate()?;
    let paths = prepare_out(&a.common.out, &[CHECKPOINT_FILE, LOSS_FILE, EFFECTIVE_CONFIG_FILE], a.common.force)?;
    let seqs = load_sequences(&a.data, true)?;
    let kf = KalmanFilter::new(cfg.tracker.noise);
    let stats = if cfg.train.epochs == 0 {
        Vec::new()
    } else {
        train(&mut model, &seqs, &cfg.graph, &cfg.train, &kf, &mut progress)?
    };
    let table = format_loss_table(&stats);
    print!("{table}");
    let mut ckpt = Vec::new();
    model.write(&mut ckpt, progress)?;
    write_files_atomically(&[
        (paths[0].clone(), ckpt),
        (paths[1].clone(), table.into_bytes()),
        (paths[2].clone(), echo(&cfg, "train")?.into_bytes()),
    ])?;
    Ok(())
}

pub fn cmd_track(a: &TrackArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    let model = match &a.checkpoint {
        Some(p) => {
            let (m, _) = AssociationModel::load(p)?;
            cfg.mpn = m.mpn.config;
            cfg.integration = m.integration;
            Some(m)
        }
        None => None,
    };
    apply_model_flags(&mut cfg, &a.model);
    cfg.validate()?;
    let seqinfo_path = match &a.seqinfo {
        Some(p) => p.clone(),
        None => a.det.parent().unwrap_or(Path::new(".")).join(SEQINFO_FILE),
    };
    let info = read_seqinfo(&seqinfo_path)?;
    let seq = assemble_sequence(&info, &read_mot(&a.det)?, &read_features(&a.features)?, None)?;
    let rows = track_sequence(&seq, model, &cfg)?;
    let paths = prepare_out(&a.common.out, &[TRACKS_FILE, EFFECTIVE_CONFIG_FILE], a.common.force)?;
    write_files_atomically(&[
        (paths[0].clone(), format_mot(&rows)),
        (paths[1].clone(), echo(&cfg, "track")?),
    ])?;
    println!("wrote {} rows for {} frames to {}", rows.len(), seq.len(), paths[0].display());
    Ok(())
}

/// Tracks `seq` with `model`, or with IoU scores when `model` is `None`.
/// The model's integration mode is replaced by `cfg.integration`.
pub fn track_sequence(seq: &Sequence, model: Option<AssociationModel>, cfg: &RunConfig) -> Result<Vec<MotRow>> {
    let scorer: Box<dyn Scorer> = match model {
        Some(mut m) => {
            if cfg.integration == IntegrationMode::Lstm && m.integration != IntegrationMode::Lstm {
                return Err(Error::Config("lstm integration needs a checkpoint trained with it".into()));
            }
            m.integration = cfg.integration;
            Box::new(m)
        }
        None => Box::new(IouScorer {
            integration: cfg.integration,
        }),
    };
    let result = run_sequence(seq, scorer.as_ref(), &cfg.tracker, &cfg.graph, None)?;
    Ok(result.rows.iter().map(MotRow::from).collect())
}

/// Text and JSON reports of per-sequence scores and their pooled total.
pub fn format_evaluations(evals: &[Evaluation]) -> (String, String) {
    let mut all = evals.to_vec();
    all.push(aggregate("OVERALL", evals));
    let mut text = format!(
        "{:<24} {:>8} {:>8} {:>7} {:>7} {:>6} {:>7}\n",
        "sequence", "MOTA", "IDF1", "FP", "FN", "IDS", "GT"
    );
    for e in &all {
        let _ = writeln!(
            text,
            "{:<24} {:>8.4} {:>8.4} {:>7} {:>7} {:>6} {:>7}",
            e.name, e.mota, e.idf1, e.fp, e.fn_, e.ids, e.gt
        );
    }
    let json = serde_json::to_string_pretty(&all).unwrap_or_default();
    (text, json)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let cfg = base_config(&a.common)?;
    if a.gt.len() != a.hyp.len() {
        return Err(Error::InvalidArgument("--gt and --hyp need the same number of files".into()));
    }
    let mut evals = Vec::new();
    for (g, h) in a.gt.iter().zip(&a.hyp) {
        let name = h
            .parent()
            .and_then(Path::file_name)
            .or(h.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        evals.push(evaluate(&name, &read_mot(g)?, &read_mot(h)?));
    }
    let (text, json) = format_evaluations(&evals);
    print!("{text}");
    let paths = prepare_out(&a.common.out, &[REPORT_TEXT_FILE, REPORT_JSON_FILE, EFFECTIVE_CONFIG_FILE], a.common.force)?;
    write_files_atomically(&[
        (paths[0].clone(), text),
        (paths[1].clone(), json),
        (paths[2].clone(), echo(&cfg, "eval")?),
    ])
}

pub fn cmd_ratio(a: &RatioArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    apply_model_flags(&mut cfg, &a.model);
    cfg.validate()?;
    if a.alphas.is_empty() || a.alphas.iter().any(|x| !(*x > 0.0 && *x < 1.0)) {
        return Err(Error::InvalidArgument("alphas must lie in (0, 1)".into()));
    }
    let seqs = load_sequences(&a.data, true)?;
    if !seqs.iter().all(Sequence::is_labelled) {
        return Err(Error::MissingLabels);
    }
    let rcfg = RatioAnalysisConfig {
        k_neighbors: cfg.graph.k_neighbors,
        window: cfg.train.frames_per_graph,
        integration: cfg.integration,
        kf: KalmanFilter::new(cfg.tracker.noise),
    };
    let report = ratio_analysis(&seqs, cfg.graph.ratio_variant, &a.alphas, &rcfg)?;
    let text = report.to_string();
    print!("{text}");
    let json = serde_json::to_string_pretty(&report).unwrap_or_default();
    let paths = prepare_out(&a.common.out, &[REPORT_TEXT_FILE, REPORT_JSON_FILE, EFFECTIVE_CONFIG_FILE], a.common.force)?;
    write_files_atomically(&[
        (paths[0].clone(), text),
        (paths[1].clone(), json),
        (paths[2].clone(), echo(&cfg, "ratio")?),
    ])
}

pub fn cmd_sparsity(a: &SparsityArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    let models: Vec<AssociationModel> = match a.checkpoint.len() {
        0 => {
            let seed = cfg.require_seed()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            vec![AssociationModel::new(cfg.mpn, cfg.integration, &mut rng)?]
        }
        1 | 3 => a
            .checkpoint
            .iter()
            .map(|p| AssociationModel::load(p).map(|m| m.0))
            .collect::<Result<_>>()?,
        n => return Err(Error::InvalidArgument(format!("expected 1 or 3 checkpoints, got {n}"))),
    };
    cfg.mpn = models[0].mpn.config;
    cfg.integration = models[0].integration;
    apply_model_flags(&mut cfg, &a.model);
    cfg.validate()?;
    let seqs = load_sequences(&a.data, false)?;
    let settings = [
        (RatioVariant::None, cfg.graph.alpha),
        (RatioVariant::Iou, a.iou_alpha),
        (RatioVariant::App, a.app_alpha),
    ];
    let mut rows = Vec::with_capacity(settings.len());
    for (k, setting) in settings.iter().enumerate() {
        let model = &models[k.min(models.len() - 1)];
        rows.extend(sparsity_analysis(&seqs, model, &cfg.tracker, &cfg.graph, &[*setting])?);
    }
    let mut text = format!(
        "{:<8} {:>6} {:>12} {:>12} {:>9} {:>10}\n",
        "ratio", "alpha", "edges_before", "edges_after", "removed", "ms_per_step"
    );
    for r in &rows {
        let _ = writeln!(
            text,
            "{:<8} {:>6.2} {:>12.1} {:>12.1} {:>8.1}% {:>10.3}",
            r.variant.to_string(),
            r.alpha,
            r.candidates,
            r.kept,
            100.0 * r.removed_fraction(),
            r.time_ms
        );
    }
    print!("{text}");
    let json = serde_json::to_string_pretty(&rows).unwrap_or_default();
    let paths = prepare_out(&a.common.out, &[REPORT_TEXT_FILE, REPORT_JSON_FILE, EFFECTIVE_CONFIG_FILE], a.common.force)?;
    write_files_atomically(&[
        (paths[0].clone(), text),
        (paths[1].clone(), json),
        (paths[2].clone(), echo(&cfg, "sparsity")?),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(out: &Path, preset: &str, seed: u64, force: bool) -> Result<()> {
        let mut args = vec![
            "sparsetrack".to_string(),
            "synth".into(),
            "--preset".into(),
            preset.into(),
            "--seed".into(),
            seed.to_string(),
            "--out".into(),
            out.display().to_string(),
        ];
        if force {
            args.push("--force".into());
        }
        run(args)
    }

    #[test]
    fn synth_writes_files_and_refuses_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a/b");
        synth(&out, "crossing", 7, false).unwrap();
        for f in [DETECTIONS_FILE, FEATURES_FILE, GROUND_TRUTH_FILE, EFFECTIVE_CONFIG_FILE] {
            assert!(out.join(f).exists(), "{f}");
        }
        let before = fs::read(out.join(DETECTIONS_FILE)).unwrap();
        assert!(matches!(synth(&out, "easy", 8, false), Err(Error::WouldOverwrite(_))));
        assert_eq!(fs::read(out.join(DETECTIONS_FILE)).unwrap(), before);
        synth(&out, "easy", 8, true).unwrap();
        assert_ne!(fs::read(out.join(DETECTIONS_FILE)).unwrap(), before);
    }

    #[test]
    fn help_succeeds_and_usage_errors_fail() {
        run(["sparsetrack", "--help"]).unwrap();
        run(["sparsetrack", "track", "--help"]).unwrap();
        let err = run(["sparsetrack", "track", "--bogus"]).unwrap_err();
        assert!(matches!(&err, Error::InvalidArgument(m) if m.contains("--bogus")), "{err}");
    }

    #[test]
    fn seed_is_mandatory_for_synth() {
        let dir = tempfile::tempdir().unwrap();
        let err = run(["sparsetrack", "synth", "--preset", "easy", "--out", dir.path().to_str().unwrap()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn echoed_config_reproduces_the_scene() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        synth(&a, "crowded", 3, false).unwrap();
        let cfg = a.join(EFFECTIVE_CONFIG_FILE);
        run(["sparsetrack", "synth", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]).unwrap();
        for f in [DETECTIONS_FILE, FEATURES_FILE, GROUND_TRUTH_FILE] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        }
    }

    #[test]
    fn eval_of_ground_truth_is_perfect() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d");
        synth(&data, "easy", 1, false).unwrap();
        let gt = data.join(GROUND_TRUTH_FILE);
        let out = dir.path().join("e");
        run(["sparsetrack", "eval", "--gt", gt.to_str().unwrap(), "--hyp", gt.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .unwrap();
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(REPORT_JSON_FILE)).unwrap()).unwrap();
        assert_eq!(json[0]["mota"], 1.0);
        assert_eq!(json[0]["idf1"], 1.0);
    }

    #[test]
    fn zero_epochs_writes_initial_weights_and_empty_table() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d");
        synth(&data, "easy", 2, false).unwrap();
        let out = dir.path().join("m");
        run([
            "sparsetrack", "train", "--data", data.to_str().unwrap(), "--epochs", "0", "--seed", "5", "--out",
            out.to_str().unwrap(),
        ])
        .unwrap();
        let table = fs::read_to_string(out.join(LOSS_FILE)).unwrap();
        assert_eq!(table.lines().count(), 1);
        let (m, p) = AssociationModel::load(&out.join(CHECKPOINT_FILE)).unwrap();
        let fresh = AssociationModel::new(m.mpn.config, m.integration, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(p.step, 0);
        assert_eq!(crate::nn::Parameters::flat(&m), crate::nn::Parameters::flat(&fresh));
    }

    #[test]
    fn flags_override_config() {
        let mut cfg = RunConfig::default();
        let flags = ModelFlags {
            ratio: Some(RatioVariant::Iou),
            tau: Some(0.7),
            no_forecast: true,
            ..ModelFlags::default()
        };
        apply_model_flags(&mut cfg, &flags);
        assert_eq!(cfg.graph.alpha, RatioVariant::Iou.default_alpha());
        assert_eq!(cfg.tracker.tau, 0.7);
        assert_eq!(cfg.tracker.forecast, ForecastMode::Off);
    }

    #[test]
    fn missing_input_fails_without_output() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("t");
        let err = run([
            "sparsetrack", "track", "--det", "/nonexistent/det.txt", "--features", "/nonexistent/f.txt", "--out",
            out.to_str().unwrap(),
        ]);
        assert!(err.is_err());
        assert!(!out.join(TRACKS_FILE).exists());
    }
}
