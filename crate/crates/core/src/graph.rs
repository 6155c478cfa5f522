//! Per-frame bipartite association graph: candidate edges, the distance
//! ratio test and initial edge features.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{feature_distance, iou, BoundingBox, Detection, Trajectory};

/// Length of the initial edge feature vector.
pub const EDGE_FEATURE_DIM: usize = 6;

/// Distance used by the ratio test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioVariant {
    /// No filtering; the dense K-nearest graph.
    None,
    /// `1 - IoU` between the trajectory's predicted box and the detection.
    Iou,
    /// Euclidean distance between appearance features.
    App,
}

impl RatioVariant {
    pub const ALL: [RatioVariant; 3] = [RatioVariant::None, RatioVariant::Iou, RatioVariant::App];

    /// Default ratio parameter for the variant.
    pub fn default_alpha(self) -> f64 {
        match self {
            RatioVariant::Iou => 0.1,
            RatioVariant::App | RatioVariant::None => 0.3,
        }
    }

    pub fn distance(self, track: &TrackNode, det: &Detection) -> Result<f64> {
        match self {
            RatioVariant::Iou | RatioVariant::None => Ok(1.0 - iou(&track.reference_box, &det.bbox)),
            RatioVariant::App => feature_distance(&track.feature, &det.feature),
        }
    }
}

impl fmt::Display for RatioVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RatioVariant::None => "none",
            RatioVariant::Iou => "iou",
            RatioVariant::App => "app",
        })
    }
}

impl FromStr for RatioVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(RatioVariant::None),
            "iou" => Ok(RatioVariant::Iou),
            "app" => Ok(RatioVariant::App),
            other => Err(Error::InvalidArgument(format!("unknown ratio variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    pub k_neighbors: usize,
    pub ratio_variant: RatioVariant,
    pub alpha: f64,
    pub fps: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 20,
            ratio_variant: RatioVariant::App,
            alpha: RatioVariant::App.default_alpha(),
            fps: 30.0,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::InvalidArgument("k_neighbors must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {}", self.fps)));
        }
        Ok(())
    }
}

/// Trajectory side of the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackNode {
    pub id: u64,
    /// Box expected in the graph's frame (the motion prediction).
    pub reference_box: BoundingBox,
    pub last_frame: u32,
    pub feature: Vec<f64>,
}

impl TrackNode {
    /// Node for a trajectory whose motion state is already advanced to the
    /// graph's frame.
    pub fn from_trajectory(t: &Trajectory) -> Self {
        Self {
            id: t.id,
            reference_box: t.motion.to_box(),
            last_frame: t.last_seen_frame,
            feature: t.integrated_feature.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub track: usize,
    pub detection: usize,
    pub feature: [f64; EDGE_FEATURE_DIM],
}

/// Directed bipartite graph from trajectories to detections of one frame.
/// Edges are kept sorted by `(track, detection)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssocGraph {
    pub frame: u32,
    pub tracks: Vec<TrackNode>,
    pub detections: Vec<Detection>,
    pub edges: Vec<Edge>,
}

impl AssocGraph {
    pub fn new(frame: u32, tracks: Vec<TrackNode>, detections: Vec<Detection>, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self {
            frame,
            tracks,
            detections,
            edges: pairs
                .iter()
                .map(|&(track, detection)| Edge {
                    track,
                    detection,
                    feature: [0.0; EDGE_FEATURE_DIM],
                })
                .collect(),
        };
        g.edges.sort_by_key(|e| (e.track, e.detection));
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            if e.track >= self.tracks.len() || e.detection >= self.detections.len() {
                return Err(Error::Shape(format!("edge ({}, {}) out of range", e.track, e.detection)));
            }
            if !seen.insert((e.track, e.detection)) {
                return Err(Error::Shape(format!("duplicate edge ({}, {})", e.track, e.detection)));
            }
        }
        Ok(())
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.track, e.detection)).collect()
    }

    /// Indices of edges leaving trajectory `i`.
    pub fn track_edges(&self, i: usize) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| self.edges[e].track == i).collect()
    }

    /// Indices of edges entering detection `j`.
    pub fn detection_edges(&self, j: usize) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| self.edges[e].detection == j).collect()
    }
}

/// For each detection, the `k` trajectories with the nearest box centers
/// (ties to the lower trajectory id). Sorted by `(track, detection)`.
pub fn candidate_edges(tracks: &[TrackNode], detections: &[Detection], k: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (j, d) in detections.iter().enumerate() {
        let mut order: Vec<(f64, u64, usize)> = tracks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.reference_box.center_distance(&d.bbox), t.id, i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        pairs.extend(order.into_iter().take(k).map(|(_, _, i)| (i, j)));
    }
    pairs.sort_unstable();
    pairs
}

/// Outcome of the ratio test for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioDecision {
    /// Only one candidate; the ratio is undefined.
    Single,
    /// The candidate at this index is decisively the nearest.
    Conclusive(usize),
    Inconclusive,
}

/// Ratio test over one trajectory's candidate distances. The first minimum
/// wins when several candidates share it, which is then inconclusive.
pub fn ratio_decision(distances: &[f64], alpha: f64) -> RatioDecision {
    if distances.len() < 2 {
        return RatioDecision::Single;
    }
    let mut best = 0;
    for (i, d) in distances.iter().enumerate() {
        if d < &distances[best] {
            best = i;
        }
    }
    let second = distances
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    if distances[best] < alpha * second {
        RatioDecision::Conclusive(best)
    } else {
        RatioDecision::Inconclusive
    }
}

/// Keeps only the nearest edge of every trajectory whose ratio test is
/// conclusive. `RatioVariant::None` returns the graph unchanged.
pub fn ratio_test_filter(graph: AssocGraph, variant: RatioVariant, alpha: f64) -> Result<AssocGraph> {
    if variant == RatioVariant::None {
        return Ok(graph);
    }
    let mut keep = vec![true; graph.edges.len()];
    let mut start = 0;
    while start < graph.edges.len() {
        let track = graph.edges[start].track;
        let end = start + graph.edges[start..].iter().take_while(|e| e.track == track).count();
        let distances = graph.edges[start..end]
            .iter()
            .map(|e| variant.distance(&graph.tracks[track], &graph.detections[e.detection]))
            .collect::<Result<Vec<_>>>()?;
        if let RatioDecision::Conclusive(best) = ratio_decision(&distances, alpha) {
            for (off, k) in keep[start..end].iter_mut().enumerate() {
                *k = off == best;
            }
        }
        start = end;
    }
    let mut g = graph;
    let mut flags = keep.into_iter();
    g.edges.retain(|_| flags.next().unwrap_or(true));
    Ok(g)
}

/// Initial edge feature: relative center offsets scaled by mean height, log
/// height and width ratios, time gap in seconds, appearance distance.
pub fn edge_feature(track: &TrackNode, det: &Detection, fps: f64) -> Result<[f64; EDGE_FEATURE_DIM]> {
    let t = &track.reference_box;
    let d = &det.bbox;
    let (xt, yt) = t.center();
    let (xd, yd) = d.center();
    let scale = 2.0 / (t.h + d.h);
    let gap = f64::from(det.frame.saturating_sub(track.last_frame).max(1));
    Ok([
        (xd - xt) * scale,
        (yd - yt) * scale,
        (d.h / t.h).ln(),
        (d.w / t.w).ln(),
        gap / fps,
        feature_distance(&track.feature, &det.feature)?,
    ])
}

pub fn init_edge_features(mut graph: AssocGraph, fps: f64) -> Result<AssocGraph> {
    for e in &mut graph.edges {
        e.feature = edge_feature(&graph.tracks[e.track], &graph.detections[e.detection], fps)?;
    }
    Ok(graph)
}

/// Edge counts around the ratio test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GraphStats {
    pub candidates: usize,
    pub kept: usize,
}

/// Candidate edges, ratio test and edge features in sequence. `None` when
/// either side is empty.
pub fn build_graph(
    frame: u32,
    tracks: Vec<TrackNode>,
    detections: Vec<Detection>,
    config: &GraphConfig,
) -> Result<Option<(AssocGraph, GraphStats)>> {
    config.validate()?;
    if tracks.is_empty() || detections.is_empty() {
        return Ok(None);
    }
    let pairs = candidate_edges(&tracks, &detections, config.k_neighbors);
    let candidates = pairs.len();
    let g = AssocGraph::new(frame, tracks, detections, &pairs)?;
    let g = ratio_test_filter(g, config.ratio_variant, config.alpha)?;
    let g = init_edge_features(g, config.fps)?;
    let kept = g.edges.len();
    Ok(Some((g, GraphStats { candidates, kept })))
}
