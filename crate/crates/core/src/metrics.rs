//! CLEAR-MOT and IDF1 evaluation, and the ratio-test outcome analysis.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::assignment::max_weight_matching;
use crate::error::Result;
use crate::graph::{candidate_edges, ratio_decision, RatioDecision, RatioVariant};
use crate::integration::IntegrationMode;
use crate::io::MotRow;
use crate::motion::KalmanFilter;
use crate::mpn::teacher_forced_tracks;
use crate::types::{iou, Detection, Sequence};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

fn by_frame(rows: &[MotRow]) -> BTreeMap<u32, Vec<&MotRow>> {
    let mut m: BTreeMap<u32, Vec<&MotRow>> = BTreeMap::new();
    for r in rows {
        m.entry(r.frame).or_default().push(r);
    }
    for v in m.values_mut() {
        v.sort_by_key(|r| r.id);
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FrameDetail {
    pub frame: u32,
    pub gt: usize,
    pub hyp: usize,
    pub matches: usize,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClearMot {
    pub mota: f64,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
    pub gt: usize,
    pub matches: usize,
    pub frames: Vec<FrameDetail>,
}

/// CLEAR-MOT: correspondences from the previous frame are kept while their
/// IoU stays at or above `threshold`; remaining pairs are assigned to
/// maximize total IoU. An identity switch is a ground-truth target matched
/// to a different hypothesis than at its last match.
pub fn clear_mot(gt: &[MotRow], hyp: &[MotRow], threshold: f64) -> ClearMot {
    let g = by_frame(gt);
    let h = by_frame(hyp);
    let frames: BTreeSet<u32> = g.keys().chain(h.keys()).copied().collect();
    let empty = Vec::new();
    let mut previous: BTreeMap<i64, i64> = BTreeMap::new();
    let mut last_match: BTreeMap<i64, i64> = BTreeMap::new();
    let mut out = ClearMot {
        mota: 0.0,
        fp: 0,
        fn_: 0,
        ids: 0,
        gt: gt.len(),
        matches: 0,
        frames: Vec::new(),
    };
    for f in frames {
        let gs = g.get(&f).unwrap_or(&empty);
        let hs = h.get(&f).unwrap_or(&empty);
        let mut g_used = vec![false; gs.len()];
        let mut h_used = vec![false; hs.len()];
        let mut pairs = Vec::new();
        for (gi, gr) in gs.iter().enumerate() {
            let Some(&hid) = previous.get(&gr.id) else { continue };
            if let Some(hi) = hs.iter().position(|r| r.id == hid) {
                if !h_used[hi] && iou(&gr.bbox, &hs[hi].bbox) >= threshold {
                    g_used[gi] = true;
                    h_used[hi] = true;
                    pairs.push((gi, hi));
                }
            }
        }
        let free_g: Vec<usize> = (0..gs.len()).filter(|&i| !g_used[i]).collect();
        let free_h: Vec<usize> = (0..hs.len()).filter(|&i| !h_used[i]).collect();
        let w: Vec<Vec<f64>> = free_g
            .iter()
            .map(|&gi| free_h.iter().map(|&hi| iou(&gs[gi].bbox, &hs[hi].bbox)).collect())
            .collect();
        for (a, b) in max_weight_matching(&w, threshold) {
            pairs.push((free_g[a], free_h[b]));
        }
        let mut ids = 0;
        previous.clear();
        for &(gi, hi) in &pairs {
            let (gid, hid) = (gs[gi].id, hs[hi].id);
            if last_match.insert(gid, hid).is_some_and(|old| old != hid) {
                ids += 1;
            }
            previous.insert(gid, hid);
        }
        let d = FrameDetail {
            frame: f,
            gt: gs.len(),
            hyp: hs.len(),
            matches: pairs.len(),
            fp: hs.len() - pairs.len(),
            fn_: gs.len() - pairs.len(),
            ids,
        };
        out.fp += d.fp;
        out.fn_ += d.fn_;
        out.ids += d.ids;
        out.matches += d.matches;
        out.frames.push(d);
    }
    let errors = (out.fp + out.fn_ + out.ids) as f64;
    out.mota = 1.0 - errors / (out.gt.max(1) as f64);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdScores {
    pub idf1: f64,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

/// IDF1 under the one-to-one identity mapping that maximizes the number of
/// co-located boxes (IoU at or above `threshold`).
pub fn idf1(gt: &[MotRow], hyp: &[MotRow], threshold: f64) -> IdScores {
    let g = by_frame(gt);
    let h = by_frame(hyp);
    let gt_ids: Vec<i64> = gt.iter().map(|r| r.id).collect::<BTreeSet<_>>().into_iter().collect();
    let hyp_ids: Vec<i64> = hyp.iter().map(|r| r.id).collect::<BTreeSet<_>>().into_iter().collect();
    let gi: BTreeMap<i64, usize> = gt_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let hi: BTreeMap<i64, usize> = hyp_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut overlap = vec![vec![0.0; hyp_ids.len()]; gt_ids.len()];
    for (f, gs) in &g {
        let Some(hs) = h.get(f) else { continue };
        for gr in gs {
            for hr in hs {
                if iou(&gr.bbox, &hr.bbox) >= threshold {
                    overlap[gi[&gr.id]][hi[&hr.id]] += 1.0;
                }
            }
        }
    }
    let idtp: usize = max_weight_matching(&overlap, 1.0)
        .into_iter()
        .map(|(a, b)| overlap[a][b] as usize)
        .sum();
    let idfn = gt.len() - idtp;
    let idfp = hyp.len() - idtp;
    let denom = 2 * idtp + idfp + idfn;
    IdScores {
        idf1: if denom == 0 { 1.0 } else { 2.0 * idtp as f64 / denom as f64 },
        idtp,
        idfp,
        idfn,
    }
}

/// CLEAR-MOT and identity scores of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub name: String,
    pub mota: f64,
    pub idf1: f64,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
    pub gt: usize,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

pub fn evaluate(name: &str, gt: &[MotRow], hyp: &[MotRow]) -> Evaluation {
    let c = clear_mot(gt, hyp, DEFAULT_IOU_THRESHOLD);
    let i = idf1(gt, hyp, DEFAULT_IOU_THRESHOLD);
    Evaluation {
        name: name.to_string(),
        mota: c.mota,
        idf1: i.idf1,
        fp: c.fp,
        fn_: c.fn_,
        ids: c.ids,
        gt: c.gt,
        idtp: i.idtp,
        idfp: i.idfp,
        idfn: i.idfn,
    }
}

/// Pooled scores of several sequences.
pub fn aggregate(name: &str, evals: &[Evaluation]) -> Evaluation {
    let sum = |f: fn(&Evaluation) -> usize| evals.iter().map(f).sum::<usize>();
    let (fp, fn_, ids, gt) = (sum(|e| e.fp), sum(|e| e.fn_), sum(|e| e.ids), sum(|e| e.gt));
    let (idtp, idfp, idfn) = (sum(|e| e.idtp), sum(|e| e.idfp), sum(|e| e.idfn));
    let denom = 2 * idtp + idfp + idfn;
    Evaluation {
        name: name.to_string(),
        mota: 1.0 - (fp + fn_ + ids) as f64 / gt.max(1) as f64,
        idf1: if denom == 0 { 1.0 } else { 2.0 * idtp as f64 / denom as f64 },
        fp,
        fn_,
        ids,
        gt,
        idtp,
        idfp,
        idfn,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RatioCounts {
    pub t: usize,
    pub f: usize,
    pub i: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    pub variant: RatioVariant,
    pub alphas: Vec<f64>,
    pub counts: Vec<RatioCounts>,
    /// Trajectory decisions skipped because only one candidate existed.
    pub single_candidate: usize,
}

impl fmt::Display for RatioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# ratio test {}; trajectories with fewer than 2 candidates excluded ({})", self.variant, self.single_candidate)?;
        writeln!(f, "{:>6} {:>10} {:>10} {:>10}", "alpha", "T", "F", "I")?;
        for (a, c) in self.alphas.iter().zip(&self.counts) {
            writeln!(f, "{a:>6.2} {:>10} {:>10} {:>10}", c.t, c.f, c.i)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioAnalysisConfig {
    pub k_neighbors: usize,
    /// History length in frames, target frame included.
    pub window: usize,
    pub integration: IntegrationMode,
    pub kf: KalmanFilter,
}

impl Default for RatioAnalysisConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 20,
            window: 15,
            integration: IntegrationMode::IouGuided,
            kf: KalmanFilter::default(),
        }
    }
}

/// Counts, per `alpha`, trajectories whose ratio test picks the true
/// detection (T), a wrong one (F) or is inconclusive (I). Trajectories are
/// built from labelled history; each frame contributes one decision per
/// trajectory with at least two candidate edges.
pub fn ratio_analysis(
    sequences: &[Sequence],
    variant: RatioVariant,
    alphas: &[f64],
    cfg: &RatioAnalysisConfig,
) -> Result<RatioReport> {
    let mut counts = vec![RatioCounts { t: 0, f: 0, i: 0 }; alphas.len()];
    let mut single = 0;
    let variant_for_distance = if variant == RatioVariant::None { RatioVariant::Iou } else { variant };
    for seq in sequences {
        for t in 2..=seq.len() as u32 {
            let first = t.saturating_sub(cfg.window as u32 - 1).max(1);
            let history: Vec<(u32, Vec<Detection>)> = (first..t).map(|f| (f, seq.frame(f).to_vec())).collect();
            let tracks = teacher_forced_tracks(&history, t, cfg.integration, None, &cfg.kf)?;
            let nodes: Vec<_> = tracks.into_iter().map(|(n, _)| n).collect();
            let dets = seq.frame(t);
            if nodes.is_empty() || dets.is_empty() {
                continue;
            }
            let pairs = candidate_edges(&nodes, dets, cfg.k_neighbors);
            let mut start = 0;
            while start < pairs.len() {
                let track = pairs[start].0;
                let end = start + pairs[start..].iter().take_while(|p| p.0 == track).count();
                let cand: Vec<usize> = pairs[start..end].iter().map(|p| p.1).collect();
                start = end;
                if cand.len() < 2 {
                    single += 1;
                    continue;
                }
                let node = &nodes[track];
                let dist = cand
                    .iter()
                    .map(|&j| variant_for_distance.distance(node, &dets[j]))
                    .collect::<Result<Vec<_>>>()?;
                for (a, c) in alphas.iter().zip(counts.iter_mut()) {
                    match ratio_decision(&dist, *a) {
                        RatioDecision::Conclusive(k) if dets[cand[k]].gt_id == Some(node.id) => c.t += 1,
                        RatioDecision::Conclusive(_) => c.f += 1,
                        RatioDecision::Inconclusive => c.i += 1,
                        RatioDecision::Single => {}
                    }
                }
            }
        }
    }
    Ok(RatioReport {
        variant,
        alphas: alphas.to_vec(),
        counts,
        single_candidate: single,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::BoundingBox;
    use proptest::prelude::*;

    fn row(frame: u32, id: i64, x: f64) -> MotRow {
        MotRow {
            frame,
            id,
            bbox: BoundingBox::new(x, 50.0, 40.0, 80.0).unwrap(),
            confidence: 1.0,
        }
    }

    fn two_targets() -> Vec<MotRow> {
        (1..=4).flat_map(|f| [row(f, 1, 10.0), row(f, 2, 300.0)]).collect()
    }

    #[test]
    fn perfect_hypothesis() {
        let gt = two_targets();
        let c = clear_mot(&gt, &gt, 0.5);
        assert_eq!((c.mota, c.fp, c.fn_, c.ids), (1.0, 0, 0, 0));
        assert_eq!(idf1(&gt, &gt, 0.5).idf1, 1.0);
    }

    #[test]
    fn empty_hypothesis() {
        let gt = two_targets();
        let c = clear_mot(&gt, &[], 0.5);
        assert_eq!(c.mota, 0.0);
        assert_eq!(c.fn_, gt.len());
        assert_eq!(idf1(&gt, &[], 0.5).idf1, 0.0);
    }

    #[test]
    fn mid_sequence_swap() {
        // Hypothesis ids swap from frame 3 on.
        let gt = two_targets();
        let hyp: Vec<MotRow> = (1..=4)
            .flat_map(|f| {
                let (a, b) = if f < 3 { (7, 8) } else { (8, 7) };
                [row(f, a, 10.0), row(f, b, 300.0)]
            })
            .collect();
        let c = clear_mot(&gt, &hyp, 0.5);
        assert_eq!(c.ids, 2);
        assert_eq!(c.mota, 0.75);
    }

    #[test]
    fn split_track() {
        let gt: Vec<MotRow> = (1..=10).map(|f| row(f, 1, 10.0)).collect();
        let hyp: Vec<MotRow> = (1..=10).map(|f| row(f, if f <= 5 { 4 } else { 9 }, 10.0)).collect();
        let s = idf1(&gt, &hyp, 0.5);
        assert_eq!((s.idtp, s.idfp, s.idfn), (5, 5, 5));
        assert_eq!(s.idf1, 0.5);
    }

    #[test]
    fn persistent_correspondence_beats_better_overlap() {
        // Hypothesis 5 keeps following the target even though hypothesis 6
        // overlaps it better in frame 2.
        let gt = vec![row(1, 1, 10.0), row(2, 1, 10.0)];
        let mut h5 = row(2, 5, 20.0);
        h5.bbox.x = 22.0;
        let hyp = vec![row(1, 5, 10.0), h5, row(2, 6, 10.0)];
        let c = clear_mot(&gt, &hyp, 0.5);
        assert_eq!((c.ids, c.fp, c.fn_), (0, 1, 0));
    }

    proptest! {
        #[test]
        fn shuffling_rows_within_frames_changes_nothing(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            use rand::seq::SliceRandom;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let gt: Vec<MotRow> = (1..=6).flat_map(|f| (1..=3).map(move |i| row(f, i, 100.0 * i as f64 + f as f64))).collect();
            let mut hyp = Vec::new();
            for r in &gt {
                if rng.random::<f64>() > 0.2 {
                    hyp.push(MotRow { id: r.id + 10 * i64::from(rng.random::<bool>()), ..*r });
                }
            }
            let mut gs = gt.clone();
            let mut hs = hyp.clone();
            gs.shuffle(&mut rng);
            hs.shuffle(&mut rng);
            prop_assert_eq!(clear_mot(&gt, &hyp, 0.5), clear_mot(&gs, &hs, 0.5));
            prop_assert_eq!(idf1(&gt, &hyp, 0.5), idf1(&gs, &hs, 0.5));
            let perfect = clear_mot(&gs, &gs, 0.5);
            prop_assert_eq!(perfect.mota, 1.0);
        }
    }
}
