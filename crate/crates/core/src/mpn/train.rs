use std::collections::BTreeMap;

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AssociationModel, MpnInput};
use crate::error::{Error, Result};
use crate::graph::{build_graph, GraphConfig, TrackNode};
use crate::integration::{integrate_average, integrate_iou_guided, renormalize, IntegrationMode};
use crate::motion::KalmanFilter;
use crate::nn::{sigmoid, AdamState, LstmCache, LstmParams, LstmState, Parameters};
use crate::types::{max_overlap, BoundingBox, Detection, Sequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_graphs: usize,
    /// Window length: the target frame plus the history its trajectories
    /// are built from.
    pub frames_per_graph: usize,
    /// Frames per second the windows are sampled at.
    pub sample_fps: f64,
    pub epochs: u32,
    pub learning_rate: f64,
    pub lr_decay_every: u32,
    pub lr_decay_factor: f64,
    /// Fixed positive-class weight; the per-batch negative/positive edge
    /// ratio when unset.
    pub positive_weight: Option<f64>,
    /// Probability of removing each detection node.
    pub node_dropout: f64,
    /// Box shift standard deviation as a fraction of box height.
    pub box_jitter: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_graphs: 8,
            frames_per_graph: 15,
            sample_fps: 6.0,
            epochs: 25,
            learning_rate: 1e-3,
            lr_decay_every: 7,
            lr_decay_factor: 0.1,
            positive_weight: None,
            node_dropout: 0.05,
            box_jitter: 0.02,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.batch_graphs == 0 || self.frames_per_graph < 2 || self.lr_decay_every == 0 {
            return bad("batch_graphs, lr_decay_every must be positive and frames_per_graph at least 2");
        }
        if !(self.learning_rate > 0.0 && self.sample_fps > 0.0 && self.lr_decay_factor > 0.0) {
            return bad("learning_rate, sample_fps and lr_decay_factor must be positive");
        }
        if !(0.0..1.0).contains(&self.node_dropout) || self.box_jitter < 0.0 {
            return bad("node_dropout must lie in [0, 1) and box_jitter be non-negative");
        }
        if matches!(self.positive_weight, Some(w) if w <= 0.0) {
            return bad("positive_weight must be positive");
        }
        Ok(())
    }

    /// Learning rate during 0-based `epoch`.
    pub fn learning_rate_at(&self, epoch: u32) -> f64 {
        self.learning_rate * self.lr_decay_factor.powi((epoch / self.lr_decay_every) as i32)
    }
}

/// Optimizer steps and epochs completed so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrainProgress {
    pub step: u64,
    pub epochs: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: u32,
    pub learning_rate: f64,
    /// Mean weighted cross-entropy per edge.
    pub loss: f64,
    /// Fraction of edges classified correctly at probability 0.5.
    pub accuracy: f64,
    pub graphs: usize,
}

/// Recorded LSTM integration of one trajectory, for backpropagating into
/// the LSTM weights.
#[derive(Debug, Clone)]
pub struct LstmTape {
    caches: Vec<LstmCache>,
    hidden: Vec<f64>,
    feature: Vec<f64>,
}

impl LstmTape {
    /// Gradient of the renormalized hidden output w.r.t. the raw output.
    fn hidden_grad(&self, d_feature: &[f64]) -> Vec<f64> {
        let n = self.hidden.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !n.is_finite() || n < 1e-12 {
            return vec![0.0; d_feature.len()];
        }
        if (n - 1.0).abs() <= 1e-12 {
            return d_feature.to_vec();
        }
        let proj: f64 = self.feature.iter().zip(d_feature).map(|(f, g)| f * g).sum();
        d_feature.iter().zip(&self.feature).map(|(g, f)| (g - f * proj) / n).collect()
    }

    fn backward(&self, params: &LstmParams, d_feature: &[f64], grads: &mut LstmParams) -> Result<()> {
        let mut dh = self.hidden_grad(d_feature);
        let mut dc = vec![0.0; dh.len()];
        for cache in self.caches.iter().rev() {
            let (_, dh_prev, dc_prev) = params.backward_into(cache, &dh, &dc, grads)?;
            dh = dh_prev;
            dc = dc_prev;
        }
        Ok(())
    }
}

/// One training graph with edge labels.
#[derive(Debug, Clone)]
pub struct LabeledGraph {
    pub input: MpnInput,
    pub labels: Vec<bool>,
    /// Per trajectory node, present in LSTM integration mode.
    pub tapes: Vec<Option<LstmTape>>,
}

impl LabeledGraph {
    pub fn new(input: MpnInput, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != input.edges.len() {
            return Err(Error::DimensionMismatch {
                expected: input.edges.len(),
                actual: labels.len(),
            });
        }
        let tapes = vec![None; input.track_features.rows()];
        Ok(Self { input, labels, tapes })
    }

    fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Produces training graphs on demand so that graphs whose inputs depend on
/// trainable weights are built with the current weights.
pub trait GraphSource: Sync {
    /// Number of graph slots in an epoch.
    fn len(&self) -> usize;

    /// Builds the graph for slot `item`; `None` when the slot yields no edges.
    fn build(&self, model: &AssociationModel, epoch: u32, item: usize) -> Result<Option<LabeledGraph>>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A fixed list of graphs.
pub struct FixedGraphs(pub Vec<LabeledGraph>);

impl GraphSource for FixedGraphs {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn build(&self, _: &AssociationModel, _: u32, item: usize) -> Result<Option<LabeledGraph>> {
        Ok(self.0.get(item).cloned())
    }
}

struct GraphGrad {
    loss: f64,
    correct: usize,
    edges: usize,
    grads: AssociationModel,
}

fn graph_gradient(model: &AssociationModel, g: &LabeledGraph, positive_weight: f64) -> Result<GraphGrad> {
    let (loss, mpn_grads, input_grads, fwd) = model.mpn.loss_and_grad(&g.input, &g.labels, positive_weight)?;
    let correct = fwd
        .logits
        .iter()
        .zip(&g.labels)
        .filter(|(&z, &y)| (sigmoid(z) >= 0.5) == y)
        .count();
    let mut grads = model.zeros_like();
    grads.mpn = mpn_grads;
    if let Some(params) = model.lstm() {
        let dim = g.input.track_features.cols();
        for (i, tape) in g.tapes.iter().enumerate() {
            let Some(tape) = tape else { continue };
            let mut df = input_grads.track_features.row(i).to_vec();
            for (k, &(t, j)) in g.input.edges.iter().enumerate() {
                if t != i {
                    continue;
                }
                let dist = g.input.edge_features.row(k)[5];
                let g_dist = input_grads.edge_features.row(k)[5];
                if dist > 1e-12 && g_dist != 0.0 {
                    let det = g.input.det_features.row(j);
                    for c in 0..dim {
                        df[c] += g_dist * (tape.feature[c] - det[c]) / dist;
                    }
                }
            }
            tape.backward(params, &df, &mut grads.lstm)?;
        }
    }
    Ok(GraphGrad {
        loss,
        correct,
        edges: g.labels.len(),
        grads,
    })
}

fn add_into(acc: &mut AssociationModel, g: &AssociationModel) {
    let mut parts = Vec::new();
    g.visit("", &mut |_, a| parts.push(a.clone()));
    let mut k = 0;
    acc.visit_mut("", &mut |_, a| {
        // Layouts are identical by construction.
        let _ = a.add_assign(&parts[k]);
        k += 1;
    });
}

/// Mini-batch Adam over the graphs of `source`, continuing from `progress`.
/// Returns per-epoch statistics.
pub fn fit(
    model: &mut AssociationModel,
    source: &dyn GraphSource,
    cfg: &TrainConfig,
    progress: &mut TrainProgress,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    let mut adam = AdamState::new(model);
    adam.step = progress.step;
    let mut stats = Vec::new();
    for _ in 0..cfg.epochs {
        let epoch = progress.epochs;
        let lr = cfg.learning_rate_at(epoch);
        let mut order: Vec<usize> = (0..source.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ (u64::from(epoch) << 32)));
        let (mut loss, mut correct, mut edges, mut graphs) = (0.0, 0, 0, 0);
        for batch in order.chunks(cfg.batch_graphs) {
            let built: Vec<LabeledGraph> = {
                let m: &AssociationModel = model;
                batch
                    .par_iter()
                    .map(|&item| source.build(m, epoch, item))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .flatten()
                    .collect()
            };
            if built.is_empty() {
                continue;
            }
            let n_edges: usize = built.iter().map(|g| g.labels.len()).sum();
            let pos: usize = built.iter().map(LabeledGraph::positives).sum();
            let neg = n_edges - pos;
            let w = cfg
                .positive_weight
                .unwrap_or(if pos > 0 && neg > 0 { neg as f64 / pos as f64 } else { 1.0 });
            let m: &AssociationModel = model;
            let parts: Vec<GraphGrad> = built
                .par_iter()
                .map(|g| graph_gradient(m, g, w))
                .collect::<Result<Vec<_>>>()?;
            let mut total = model.zeros_like();
            for p in &parts {
                add_into(&mut total, &p.grads);
                loss += p.loss;
                correct += p.correct;
                edges += p.edges;
            }
            graphs += parts.len();
            let scale = 1.0 / n_edges as f64;
            total.visit_mut("", &mut |_, a| a.scale(scale));
            adam.update(model, &total, lr)?;
        }
        progress.epochs += 1;
        progress.step = adam.step;
        let s = EpochStats {
            epoch: progress.epochs,
            learning_rate: lr,
            loss: if edges > 0 { loss / edges as f64 } else { 0.0 },
            accuracy: if edges > 0 { correct as f64 / edges as f64 } else { 0.0 },
            graphs,
        };
        info!(
            "epoch {} lr {:.1e} loss {:.4} acc {:.3} graphs {}",
            s.epoch, s.learning_rate, s.loss, s.accuracy, s.graphs
        );
        stats.push(s);
    }
    Ok(stats)
}

/// Builds trajectory nodes from labelled history: one trajectory per
/// identity, its motion filtered and its feature integrated along its own
/// detections, then predicted forward to `target_frame`. History frames must
/// be in increasing order. Tapes are recorded in LSTM mode.
pub fn teacher_forced_tracks(
    history: &[(u32, Vec<Detection>)],
    target_frame: u32,
    mode: IntegrationMode,
    lstm: Option<&LstmParams>,
    kf: &KalmanFilter,
) -> Result<Vec<(TrackNode, Option<LstmTape>)>> {
    let mut by_id: BTreeMap<u64, Vec<(usize, usize)>> = BTreeMap::new();
    for (h, (_, dets)) in history.iter().enumerate() {
        for (k, d) in dets.iter().enumerate() {
            if let Some(id) = d.gt_id {
                by_id.entry(id).or_default().push((h, k));
            }
        }
    }
    let lstm_params = match mode {
        IntegrationMode::Lstm => {
            Some(lstm.ok_or_else(|| Error::InvalidArgument("LSTM integration needs LSTM weights".into()))?)
        }
        _ => None,
    };
    let mut out = Vec::with_capacity(by_id.len());
    for (id, obs) in by_id {
        let mut state = None;
        let mut last_frame = 0;
        let mut feature: Vec<f64> = Vec::new();
        let mut lstm_state = lstm_params.map(|p| LstmState::zeros(p.hidden_dim()));
        let mut caches = Vec::new();
        let mut hidden = Vec::new();
        for (h, k) in obs {
            let (frame, dets) = &history[h];
            let det = &dets[k];
            state = Some(match state {
                None => kf.initiate(&det.bbox),
                Some(mut s) => {
                    for _ in last_frame..*frame {
                        s = kf.predict(&s);
                    }
                    kf.update(&s, &det.bbox)?
                }
            });
            let first = feature.is_empty();
            feature = match (mode, lstm_params) {
                (IntegrationMode::Lstm, Some(p)) => {
                    let s = lstm_state.take().expect("state present in LSTM mode");
                    let (out, next, cache) = p.step(&s, &det.feature)?;
                    caches.push(cache);
                    hidden = out.clone();
                    lstm_state = Some(next);
                    renormalize(out, &det.feature)
                }
                _ if first => det.feature.clone(),
                (IntegrationMode::Average, _) => integrate_average(&feature, &det.feature),
                (IntegrationMode::IouGuided, _) => {
                    let others = dets.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, d)| d);
                    integrate_iou_guided(&feature, &det.feature, max_overlap(det, others))
                }
                _ => det.feature.clone(),
            };
            last_frame = *frame;
        }
        let mut s = state.expect("every identity has an observation");
        for _ in last_frame..target_frame {
            s = kf.predict(&s);
        }
        let tape = lstm_params.map(|_| LstmTape {
            caches,
            hidden,
            feature: feature.clone(),
        });
        out.push((
            TrackNode {
                id,
                reference_box: s.to_box(),
                last_frame,
                feature,
            },
            tape,
        ));
    }
    Ok(out)
}

/// Training windows cut from labelled sequences.
struct TeacherForced<'a> {
    sequences: &'a [Sequence],
    graph: GraphConfig,
    cfg: &'a TrainConfig,
    kf: KalmanFilter,
    /// `(sequence, target frame, stride)`
    items: Vec<(usize, u32, u32)>,
}

impl<'a> TeacherForced<'a> {
    fn new(sequences: &'a [Sequence], graph: GraphConfig, cfg: &'a TrainConfig, kf: KalmanFilter) -> Self {
        let mut items = Vec::new();
        for (s, seq) in sequences.iter().enumerate() {
            let stride = (seq.fps / cfg.sample_fps).round().max(1.0) as u32;
            for t in (1 + stride)..=seq.len() as u32 {
                items.push((s, t, stride));
            }
        }
        Self {
            sequences,
            graph,
            cfg,
            kf,
            items,
        }
    }

    fn augment(&self, dets: &[Detection], jitter: bool, rng: &mut ChaCha8Rng) -> Vec<Detection> {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut out = Vec::with_capacity(dets.len());
        for d in dets {
            if self.cfg.node_dropout > 0.0 && rng.random::<f64>() < self.cfg.node_dropout {
                continue;
            }
            let mut d = d.clone();
            if jitter && self.cfg.box_jitter > 0.0 {
                let s = self.cfg.box_jitter * d.bbox.h;
                let (cx, cy) = d.bbox.center();
                let w = d.bbox.w * (1.0 + self.cfg.box_jitter * normal.sample(rng)).max(0.5);
                let h = d.bbox.h * (1.0 + self.cfg.box_jitter * normal.sample(rng)).max(0.5);
                if let Ok(b) = BoundingBox::from_center(cx + s * normal.sample(rng), cy + s * normal.sample(rng), w, h) {
                    d.bbox = b;
                }
            }
            out.push(d);
        }
        out
    }
}

impl GraphSource for TeacherForced<'_> {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn build(&self, model: &AssociationModel, epoch: u32, item: usize) -> Result<Option<LabeledGraph>> {
        let (s, t, stride) = self.items[item];
        let seq = &self.sequences[s];
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ (u64::from(epoch) << 40) ^ (item as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let span = (self.cfg.frames_per_graph as u32 - 1) * stride;
        let first = t.saturating_sub(span).max(1);
        let history: Vec<(u32, Vec<Detection>)> = (first..=t - stride)
            .rev()
            .step_by(stride as usize)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .map(|f| (f, self.augment(seq.frame(f), false, &mut rng)))
            .collect();
        let tracks = teacher_forced_tracks(&history, t, model.integration, model.lstm(), &self.kf)?;
        let dets = self.augment(seq.frame(t), true, &mut rng);
        let (nodes, tapes): (Vec<TrackNode>, Vec<Option<LstmTape>>) = tracks.into_iter().unzip();
        let graph = GraphConfig {
            fps: seq.fps / f64::from(stride),
            ..self.graph
        };
        let Some((g, _)) = build_graph(t, nodes, dets, &graph)? else {
            return Ok(None);
        };
        let labels = g
            .edges
            .iter()
            .map(|e| g.detections[e.detection].gt_id == Some(g.tracks[e.track].id))
            .collect();
        // Tapes follow the kept trajectory order, which build_graph preserves.
        let input = MpnInput::from_graph(&g)?;
        Ok(Some(LabeledGraph { input, labels, tapes }))
    }
}

/// Trains `model` on labelled sequences with teacher-forced trajectories.
pub fn train(
    model: &mut AssociationModel,
    sequences: &[Sequence],
    graph: &GraphConfig,
    cfg: &TrainConfig,
    kf: &KalmanFilter,
    progress: &mut TrainProgress,
) -> Result<Vec<EpochStats>> {
    if sequences.is_empty() || !sequences.iter().all(Sequence::is_labelled) {
        return Err(Error::MissingLabels);
    }
    graph.validate()?;
    let source = TeacherForced::new(sequences, *graph, cfg, *kf);
    fit(model, &source, cfg, progress)
}
