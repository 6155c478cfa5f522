//! Online tracking loop: per-frame graph scoring, ranked greedy matching,
//! trajectory lifecycle and forecasting of lost trajectories.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_matching;
use crate::error::{Error, Result};
use crate::graph::{build_graph, AssocGraph, GraphConfig, GraphStats, RatioVariant, TrackNode};
use crate::integration::{initial_feature, update_trajectory_feature, IntegrationMode};
use crate::motion::{
    forecast_lost, AppearanceSource, Forecast, ForecastGates, ForecastVerifier, FrameContext, KalmanFilter, NoiseModel,
    VerifierKind,
};
use crate::mpn::{AssociationModel, MpnInput};
use crate::nn::LstmParams;
use crate::types::{iou, BoundingBox, Detection, Sequence, TrackStatus, Trajectory};

/// What happens to lost trajectories between re-detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastMode {
    /// No forecast boxes are produced.
    Off,
    /// Motion forecasts continue until the trajectory is pruned.
    Unconstrained,
    /// Forecasts stop at the first failed gate.
    #[default]
    Constrained,
}

impl fmt::Display for ForecastMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForecastMode::Off => "off",
            ForecastMode::Unconstrained => "unconstrained",
            ForecastMode::Constrained => "constrained",
        })
    }
}

impl FromStr for ForecastMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(ForecastMode::Off),
            "unconstrained" => Ok(ForecastMode::Unconstrained),
            "constrained" => Ok(ForecastMode::Constrained),
            other => Err(Error::InvalidArgument(format!("unknown forecast mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchingMode {
    /// Ranked greedy scan over thresholded edges.
    #[default]
    Greedy,
    /// Maximum total score assignment over thresholded edges.
    Hungarian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Edge score threshold.
    pub tau: f64,
    pub lost_frame_limit: u32,
    /// Observations a trajectory needs before it may become lost; younger
    /// trajectories are deleted at their first miss.
    pub min_hits: usize,
    /// Minimum detection confidence for starting a trajectory.
    pub spawn_confidence: f64,
    pub forecast: ForecastMode,
    /// Whether forecast boxes are written to the output.
    pub emit_forecasts: bool,
    pub min_visible_fraction: f64,
    pub theta_app: f64,
    pub verifier: VerifierKind,
    pub matching: MatchingMode,
    pub noise: NoiseModel,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        let gates = ForecastGates::default();
        Self {
            tau: 0.5,
            lost_frame_limit: 80,
            min_hits: 2,
            spawn_confidence: 0.4,
            forecast: ForecastMode::Constrained,
            emit_forecasts: true,
            min_visible_fraction: gates.min_visible_fraction,
            theta_app: gates.theta_app,
            verifier: VerifierKind::Default,
            matching: MatchingMode::Greedy,
            noise: NoiseModel::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidArgument(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.min_visible_fraction) || self.theta_app < 0.0 {
            return Err(Error::InvalidArgument("invalid forecasting gate thresholds".into()));
        }
        Ok(())
    }

    pub fn gates(&self) -> ForecastGates {
        ForecastGates {
            min_visible_fraction: self.min_visible_fraction,
            theta_app: self.theta_app,
        }
    }
}

/// Produces one association probability per graph edge.
pub trait Scorer: Sync {
    fn score(&self, graph: &AssocGraph) -> Result<Vec<f64>>;
    fn integration(&self) -> IntegrationMode;
    fn lstm(&self) -> Option<&LstmParams> {
        None
    }
}

impl Scorer for AssociationModel {
    fn score(&self, graph: &AssocGraph) -> Result<Vec<f64>> {
        self.mpn.predict(&MpnInput::from_graph(graph)?)
    }

    fn integration(&self) -> IntegrationMode {
        self.integration
    }

    fn lstm(&self) -> Option<&LstmParams> {
        AssociationModel::lstm(self)
    }
}

/// Scores each edge by the IoU between predicted and detected box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IouScorer {
    pub integration: IntegrationMode,
}

impl Scorer for IouScorer {
    fn score(&self, graph: &AssocGraph) -> Result<Vec<f64>> {
        Ok(graph
            .edges
            .iter()
            .map(|e| iou(&graph.tracks[e.track].reference_box, &graph.detections[e.detection].bbox))
            .collect())
    }

    fn integration(&self) -> IntegrationMode {
        self.integration
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredEdge {
    pub track: usize,
    /// Identity of the trajectory, used for tie-breaking.
    pub track_id: u64,
    pub detection: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchResult {
    /// `(track, detection)` sorted by track.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

impl MatchResult {
    fn from_matches(mut matches: Vec<(usize, usize)>, n_tracks: usize, n_dets: usize) -> Self {
        matches.sort_unstable();
        let mut t_used = vec![false; n_tracks];
        let mut d_used = vec![false; n_dets];
        for &(t, d) in &matches {
            t_used[t] = true;
            d_used[d] = true;
        }
        Self {
            matches,
            unmatched_tracks: (0..n_tracks).filter(|&t| !t_used[t]).collect(),
            unmatched_detections: (0..n_dets).filter(|&d| !d_used[d]).collect(),
        }
    }
}

/// Drops edges below `tau`, ranks the rest by score (ties: lower trajectory
/// id, then lower detection index) and accepts each edge whose endpoints are
/// both still free.
pub fn greedy_match(edges: &[ScoredEdge], n_tracks: usize, n_dets: usize, tau: f64) -> MatchResult {
    let mut ranked: Vec<&ScoredEdge> = edges.iter().filter(|e| e.score >= tau).collect();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.track_id.cmp(&b.track_id))
            .then(a.detection.cmp(&b.detection))
    });
    let mut t_used = vec![false; n_tracks];
    let mut d_used = vec![false; n_dets];
    let mut matches = Vec::new();
    for e in ranked {
        if !t_used[e.track] && !d_used[e.detection] {
            t_used[e.track] = true;
            d_used[e.detection] = true;
            matches.push((e.track, e.detection));
        }
    }
    MatchResult::from_matches(matches, n_tracks, n_dets)
}

/// Maximum total score one-to-one assignment over edges scoring at least `tau`.
pub fn hungarian_match(edges: &[ScoredEdge], n_tracks: usize, n_dets: usize, tau: f64) -> MatchResult {
    let mut w = vec![vec![f64::NEG_INFINITY; n_dets]; n_tracks];
    for e in edges {
        w[e.track][e.detection] = e.score;
    }
    MatchResult::from_matches(max_weight_matching(&w, tau), n_tracks, n_dets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Observed,
    Forecast,
}

/// One tracked box in the output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRow {
    pub frame: u32,
    pub id: u64,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub kind: RowKind,
}

/// Per-frame association statistics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub graph: GraphStats,
    /// Graph construction, scoring and matching time.
    pub association_time: Duration,
}

/// Appearance at a box taken from the detections of the current frame.
struct FrameDetections<'a>(&'a [Detection]);

impl AppearanceSource for FrameDetections<'_> {
    fn appearance_at(&self, _: u32, bbox: &BoundingBox) -> Option<Vec<f64>> {
        self.0
            .iter()
            .map(|d| (iou(bbox, &d.bbox), d))
            .filter(|(o, _)| *o >= 0.5)
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, d)| d.feature.clone())
    }
}

/// Tracking state for one sequence.
pub struct Tracker<'a> {
    config: TrackerConfig,
    graph: GraphConfig,
    scorer: &'a dyn Scorer,
    kf: KalmanFilter,
    verifier: Box<dyn ForecastVerifier>,
    width: f64,
    height: f64,
    tracks: Vec<Trajectory>,
    next_id: u64,
    frame: u32,
}

impl<'a> Tracker<'a> {
    pub fn new(
        config: TrackerConfig,
        graph: GraphConfig,
        scorer: &'a dyn Scorer,
        width: f64,
        height: f64,
    ) -> Result<Self> {
        config.validate()?;
        graph.validate()?;
        Ok(Self {
            kf: KalmanFilter::new(config.noise),
            verifier: config.verifier.build(),
            config,
            graph,
            scorer,
            width,
            height,
            tracks: Vec::new(),
            next_id: 1,
            frame: 0,
        })
    }

    /// Replaces the verifier used by constrained forecasting.
    pub fn with_verifier(mut self, verifier: Box<dyn ForecastVerifier>) -> Self {
        self.verifier = verifier;
        self
    }

    /// Trajectories currently kept, active and lost.
    pub fn trajectories(&self) -> &[Trajectory] {
        &self.tracks
    }

    /// Processes the detections of `frame`. When `appearance` is `None` the
    /// forecasting appearance gate reads features from this frame's
    /// detections.
    pub fn step(
        &mut self,
        frame: u32,
        detections: &[Detection],
        appearance: Option<&dyn AppearanceSource>,
    ) -> Result<(Vec<TrackRow>, StepStats)> {
        if frame <= self.frame || frame == 0 {
            return Err(Error::OutOfOrderFrame {
                last: self.frame,
                got: frame,
            });
        }
        if let Some(d) = detections.iter().find(|d| d.frame != frame) {
            return Err(Error::InvalidArgument(format!("detection of frame {} passed for frame {frame}", d.frame)));
        }
        if self.frame > 0 {
            for t in &mut self.tracks {
                for _ in self.frame..frame {
                    t.motion = self.kf.predict(&t.motion);
                }
            }
        }
        self.frame = frame;

        let started = Instant::now();
        let nodes: Vec<TrackNode> = self.tracks.iter().map(TrackNode::from_trajectory).collect();
        let (result, graph_stats) = match build_graph(frame, nodes, detections.to_vec(), &self.graph)? {
            None => (MatchResult::from_matches(Vec::new(), self.tracks.len(), detections.len()), GraphStats::default()),
            Some((g, stats)) => {
                let scores = self.scorer.score(&g)?;
                let edges: Vec<ScoredEdge> = g
                    .edges
                    .iter()
                    .zip(&scores)
                    .map(|(e, &score)| ScoredEdge {
                        track: e.track,
                        track_id: g.tracks[e.track].id,
                        detection: e.detection,
                        score,
                    })
                    .collect();
                let r = match self.config.matching {
                    MatchingMode::Greedy => greedy_match(&edges, self.tracks.len(), detections.len(), self.config.tau),
                    MatchingMode::Hungarian => {
                        hungarian_match(&edges, self.tracks.len(), detections.len(), self.config.tau)
                    }
                };
                (r, stats)
            }
        };
        let stats = StepStats {
            graph: graph_stats,
            association_time: started.elapsed(),
        };

        let mode = self.scorer.integration();
        let lstm = self.scorer.lstm();
        let mut rows = Vec::new();
        for &(t, d) in &result.matches {
            let det = &detections[d];
            let traj = &mut self.tracks[t];
            traj.motion = self.kf.update(&traj.motion, &det.bbox)?;
            update_trajectory_feature(traj, detections, d, mode, lstm)?;
            traj.last_box = det.bbox;
            traj.last_seen_frame = frame;
            traj.status = TrackStatus::Active;
            traj.forecast_stopped = false;
            traj.history.push((frame, det.bbox));
            rows.push(TrackRow {
                frame,
                id: traj.id,
                bbox: det.bbox,
                confidence: det.confidence,
                kind: RowKind::Observed,
            });
        }

        let fallback = FrameDetections(detections);
        let ctx = FrameContext {
            frame,
            image_width: self.width,
            image_height: self.height,
            appearance: Some(appearance.unwrap_or(&fallback)),
        };
        let gates = self.config.gates();
        let mut pruned = vec![false; self.tracks.len()];
        for &t in &result.unmatched_tracks {
            let traj = &mut self.tracks[t];
            let lost = frame - traj.last_seen_frame;
            traj.status = TrackStatus::Lost { frames_lost: lost };
            if lost > self.config.lost_frame_limit || traj.history.len() < self.config.min_hits {
                pruned[t] = true;
                continue;
            }
            if traj.forecast_stopped {
                continue;
            }
            let forecast = match self.config.forecast {
                ForecastMode::Off => None,
                ForecastMode::Unconstrained => Some(traj.motion.to_box()),
                ForecastMode::Constrained => match forecast_lost(traj, &ctx, self.verifier.as_ref(), &gates) {
                    Forecast::Continue(b) => Some(b),
                    Forecast::Stop(reason) => {
                        log::debug!("track {} frame {frame}: forecasting stopped ({reason})", traj.id);
                        traj.forecast_stopped = true;
                        None
                    }
                },
            };
            if let Some(b) = forecast {
                if self.config.emit_forecasts && b.visible_fraction(self.width, self.height) > 0.0 {
                    rows.push(TrackRow {
                        frame,
                        id: traj.id,
                        bbox: b,
                        confidence: 0.0,
                        kind: RowKind::Forecast,
                    });
                }
            }
        }
        let mut k = 0;
        self.tracks.retain(|_| {
            k += 1;
            !pruned[k - 1]
        });

        for &d in &result.unmatched_detections {
            let det = &detections[d];
            if det.confidence < self.config.spawn_confidence {
                continue;
            }
            let (feature, lstm_state) = initial_feature(mode, &det.feature, lstm)?;
            let id = self.next_id;
            self.next_id += 1;
            self.tracks.push(Trajectory {
                id,
                integrated_feature: feature,
                lstm_state,
                last_box: det.bbox,
                last_seen_frame: frame,
                status: TrackStatus::Active,
                motion: self.kf.initiate(&det.bbox),
                history: vec![(frame, det.bbox)],
                forecast_stopped: false,
            });
            rows.push(TrackRow {
                frame,
                id,
                bbox: det.bbox,
                confidence: det.confidence,
                kind: RowKind::Observed,
            });
        }
        rows.sort_by_key(|r| r.id);
        Ok((rows, stats))
    }
}

/// Output rows and per-frame statistics of a whole sequence.
#[derive(Debug, Clone, Default)]
pub struct SequenceResult {
    pub rows: Vec<TrackRow>,
    pub stats: Vec<StepStats>,
}

/// Tracks every frame of `seq` in order.
pub fn run_sequence(
    seq: &Sequence,
    scorer: &dyn Scorer,
    config: &TrackerConfig,
    graph: &GraphConfig,
    appearance: Option<&dyn AppearanceSource>,
) -> Result<SequenceResult> {
    let graph = GraphConfig { fps: seq.fps, ..*graph };
    let mut tracker = Tracker::new(config.clone(), graph, scorer, seq.width, seq.height)?;
    let mut out = SequenceResult::default();
    for (i, dets) in seq.frames.iter().enumerate() {
        let (rows, stats) = tracker.step(i as u32 + 1, dets, appearance)?;
        out.rows.extend(rows);
        out.stats.push(stats);
    }
    Ok(out)
}

/// Mean per-step graph size and association time for one ratio setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SparsityRow {
    pub variant: RatioVariant,
    pub alpha: f64,
    /// Frames with at least one candidate edge.
    pub steps: usize,
    pub candidates: f64,
    pub kept: f64,
    pub time_ms: f64,
}

impl SparsityRow {
    /// Fraction of candidate edges removed by the ratio test.
    pub fn removed_fraction(&self) -> f64 {
        if self.candidates > 0.0 {
            1.0 - self.kept / self.candidates
        } else {
            0.0
        }
    }
}

/// Tracks every sequence once per `(variant, alpha)` setting and reports
/// edge counts and association time per step.
pub fn sparsity_analysis(
    sequences: &[Sequence],
    scorer: &dyn Scorer,
    config: &TrackerConfig,
    graph: &GraphConfig,
    settings: &[(RatioVariant, f64)],
) -> Result<Vec<SparsityRow>> {
    settings
        .iter()
        .map(|&(variant, alpha)| {
            let g = GraphConfig {
                ratio_variant: variant,
                alpha,
                ..*graph
            };
            let (mut steps, mut cand, mut kept, mut time) = (0usize, 0usize, 0usize, 0.0f64);
            for seq in sequences {
                for s in run_sequence(seq, scorer, config, &g, None)?.stats {
                    if s.graph.candidates > 0 {
                        steps += 1;
                        cand += s.graph.candidates;
                        kept += s.graph.kept;
                        time += s.association_time.as_secs_f64();
                    }
                }
            }
            let n = steps.max(1) as f64;
            Ok(SparsityRow {
                variant,
                alpha,
                steps,
                candidates: cand as f64 / n,
                kept: kept as f64 / n,
                time_ms: 1e3 * time / n,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn e(track: usize, detection: usize, score: f64) -> ScoredEdge {
        ScoredEdge {
            track,
            track_id: track as u64 + 1,
            detection,
            score,
        }
    }

    #[test]
    fn greedy_examples() {
        let r = greedy_match(&[e(0, 0, 0.9)], 1, 1, 0.5);
        assert_eq!(r.matches, vec![(0, 0)]);
        let r = greedy_match(&[e(0, 0, 0.9), e(0, 1, 0.8), e(1, 1, 0.7)], 2, 2, 0.5);
        assert_eq!(r.matches, vec![(0, 0), (1, 1)]);
        let r = greedy_match(&[e(0, 0, 0.3), e(1, 1, 0.2)], 2, 2, 0.5);
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched_tracks, vec![0, 1]);
        assert_eq!(r.unmatched_detections, vec![0, 1]);
    }

    #[test]
    fn greedy_ties_prefer_lower_id_then_detection() {
        let edges = [
            ScoredEdge { track: 0, track_id: 9, detection: 0, score: 0.8 },
            ScoredEdge { track: 1, track_id: 4, detection: 0, score: 0.8 },
            ScoredEdge { track: 1, track_id: 4, detection: 1, score: 0.8 },
        ];
        let r = greedy_match(&edges, 2, 2, 0.5);
        assert_eq!(r.matches, vec![(1, 0)]);
    }

    #[test]
    fn hungarian_can_beat_greedy_total() {
        let edges = [e(0, 0, 0.9), e(0, 1, 0.85), e(1, 0, 0.8)];
        assert_eq!(greedy_match(&edges, 2, 2, 0.5).matches, vec![(0, 0)]);
        assert_eq!(hungarian_match(&edges, 2, 2, 0.5).matches, vec![(0, 1), (1, 0)]);
    }

    fn det(frame: u32, x: f64, conf: f64) -> Detection {
        Detection::new(frame, BoundingBox::new(x, 100.0, 30.0, 60.0).unwrap(), conf, vec![1.0, 0.0]).unwrap()
    }

    fn tracker(scorer: &IouScorer, config: TrackerConfig) -> Tracker<'_> {
        Tracker::new(config, GraphConfig::default(), scorer, 640.0, 480.0).unwrap()
    }

    #[test]
    fn first_frame_spawns_and_low_confidence_is_ignored() {
        let s = IouScorer { integration: IntegrationMode::None };
        let mut t = tracker(&s, TrackerConfig::default());
        let (rows, _) = t.step(1, &[det(1, 10.0, 0.9), det(1, 200.0, 0.8), det(1, 400.0, 0.1)], None).unwrap();
        assert_eq!(rows.iter().map(|r| r.id).collect::<Vec<_>>(), vec![1, 2]);
        assert!(matches!(t.step(1, &[], None), Err(Error::OutOfOrderFrame { last: 1, got: 1 })));
    }

    #[test]
    fn stationary_detection_keeps_one_identity() {
        let s = IouScorer { integration: IntegrationMode::None };
        let mut t = tracker(&s, TrackerConfig::default());
        for f in 1..=20 {
            let (rows, _) = t.step(f, &[det(f, 100.0, 1.0)], None).unwrap();
            assert_eq!(rows.len(), 1);
            assert_eq!(rows[0].id, 1);
        }
    }

    #[test]
    fn empty_frame_moves_trajectories_to_lost_and_prunes() {
        let s = IouScorer { integration: IntegrationMode::None };
        let config = TrackerConfig {
            lost_frame_limit: 3,
            min_hits: 1,
            forecast: ForecastMode::Off,
            ..TrackerConfig::default()
        };
        let mut t = tracker(&s, config);
        t.step(1, &[det(1, 100.0, 1.0)], None).unwrap();
        for f in 2..=4 {
            let (rows, _) = t.step(f, &[], None).unwrap();
            assert!(rows.is_empty());
            assert_eq!(t.trajectories()[0].status, TrackStatus::Lost { frames_lost: f - 1 });
        }
        t.step(5, &[], None).unwrap();
        assert!(t.trajectories().is_empty());
        // Identities are not reused.
        let (rows, _) = t.step(6, &[det(6, 100.0, 1.0)], None).unwrap();
        assert_eq!(rows[0].id, 2);
    }

    #[test]
    fn unconfirmed_trajectories_are_deleted_at_first_miss() {
        let s = IouScorer { integration: IntegrationMode::None };
        let mut t = tracker(&s, TrackerConfig::default());
        t.step(1, &[det(1, 100.0, 1.0), det(1, 400.0, 1.0)], None).unwrap();
        t.step(2, &[det(2, 100.0, 1.0)], None).unwrap();
        assert_eq!(t.trajectories().len(), 1);
        t.step(3, &[], None).unwrap();
        assert_eq!(t.trajectories()[0].status, TrackStatus::Lost { frames_lost: 1 });
    }

    #[test]
    fn forecasts_are_emitted_until_pruned() {
        let s = IouScorer { integration: IntegrationMode::None };
        let config = TrackerConfig {
            lost_frame_limit: 2,
            min_hits: 1,
            forecast: ForecastMode::Unconstrained,
            ..TrackerConfig::default()
        };
        let mut t = tracker(&s, config);
        t.step(1, &[det(1, 100.0, 1.0)], None).unwrap();
        let (rows, _) = t.step(2, &[], None).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].kind, RowKind::Forecast);
        assert_eq!(t.step(3, &[], None).unwrap().0.len(), 1);
        assert!(t.step(4, &[], None).unwrap().0.is_empty());
    }

    #[test]
    fn empty_sequence_gives_empty_output() {
        let seq = Sequence {
            name: "empty".into(),
            fps: 30.0,
            width: 640.0,
            height: 480.0,
            frames: vec![],
        };
        let s = IouScorer { integration: IntegrationMode::None };
        let out = run_sequence(&seq, &s, &TrackerConfig::default(), &GraphConfig::default(), None).unwrap();
        assert!(out.rows.is_empty());
    }

    fn random_edges() -> impl Strategy<Value = (Vec<ScoredEdge>, usize, usize)> {
        (1usize..6, 1usize..6).prop_flat_map(|(nt, nd)| {
            prop::collection::vec((0..nt, 0..nd, 0.0f64..1.0), 0..(nt * nd + 1)).prop_map(move |raw| {
                let mut seen = BTreeSet::new();
                let edges = raw
                    .into_iter()
                    .filter(|&(t, d, _)| seen.insert((t, d)))
                    .map(|(t, d, s)| e(t, d, (s * 20.0).round() / 20.0))
                    .collect();
                (edges, nt, nd)
            })
        })
    }

    proptest! {
        #[test]
        fn matching_invariants((edges, nt, nd) in random_edges(), tau in 0.05f64..0.95, seed in any::<u64>()) {
            let r = greedy_match(&edges, nt, nd, tau);
            let ts: BTreeSet<_> = r.matches.iter().map(|m| m.0).collect();
            let ds: BTreeSet<_> = r.matches.iter().map(|m| m.1).collect();
            prop_assert_eq!(ts.len(), r.matches.len());
            prop_assert_eq!(ds.len(), r.matches.len());
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = edges.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(&greedy_match(&shuffled, nt, nd, tau), &r);
            let higher = greedy_match(&edges, nt, nd, (tau + 0.1).min(0.99));
            prop_assert!(higher.matches.len() <= r.matches.len());
        }
    }
}
