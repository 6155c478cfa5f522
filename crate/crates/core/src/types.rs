//! Boxes, detections, trajectories and the distance functions shared by the
//! rest of the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::KalmanState;
use crate::nn::LstmState;

/// Axis-aligned box in pixels, `(left, top, width, height)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { x, y, w, h };
        if !b.is_valid() {
            return Err(Error::InvalidArgument(format!(
                "invalid box ({x}, {y}, {w}, {h})"
            )));
        }
        Ok(b)
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - 0.5 * w, cy - 0.5 * h, w, h)
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) && self.w > 0.0 && self.h > 0.0
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Fraction of this box that lies inside a `width` x `height` image.
    pub fn visible_fraction(&self, width: f64, height: f64) -> f64 {
        let image = BoundingBox {
            x: 0.0,
            y: 0.0,
            w: width,
            h: height,
        };
        self.intersection_area(&image) / self.area()
    }

    pub fn center_distance(&self, other: &BoundingBox) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        (ax - bx).hypot(ay - by)
    }
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// One observed box in one frame with its appearance feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub feature: Vec<f64>,
    /// Ground-truth identity; only known for synthetic or labelled data.
    pub gt_id: Option<u64>,
}

impl Detection {
    /// Builds a detection, normalizing `feature` to unit length.
    pub fn new(frame: u32, bbox: BoundingBox, confidence: f64, feature: Vec<f64>) -> Result<Self> {
        if frame < 1 {
            return Err(Error::InvalidArgument("frame numbers start at 1".into()));
        }
        if !bbox.is_valid() {
            return Err(Error::InvalidArgument(format!("invalid box {bbox:?}")));
        }
        let feature = normalized(&feature).ok_or_else(|| {
            Error::InvalidArgument("detection feature must be non-zero and finite".into())
        })?;
        Ok(Self {
            frame,
            bbox,
            confidence,
            feature,
            gt_id: None,
        })
    }

    pub fn with_gt_id(mut self, id: u64) -> Self {
        self.gt_id = Some(id);
        self
    }
}

/// Largest IoU between `target` and any box in `others`; 0 for an empty list.
pub fn max_overlap<'a, I>(target: &Detection, others: I) -> f64
where
    I: IntoIterator<Item = &'a Detection>,
{
    others
        .into_iter()
        .map(|o| iou(&target.bbox, &o.bbox))
        .fold(0.0, f64::max)
}

/// Euclidean distance between two (unit) feature vectors.
pub fn feature_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Unit-length copy of `v`, or `None` when `v` is zero or not finite.
pub fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = l2_norm(v);
    if !n.is_finite() || n < 1e-12 {
        return None;
    }
    Some(v.iter().map(|x| x / n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Active,
    Lost { frames_lost: u32 },
}

/// A tracked identity.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub id: u64,
    pub integrated_feature: Vec<f64>,
    pub lstm_state: Option<LstmState>,
    pub last_box: BoundingBox,
    pub last_seen_frame: u32,
    pub status: TrackStatus,
    pub motion: KalmanState,
    pub history: Vec<(u32, BoundingBox)>,
    /// Set once a forecasting gate fires during the current lost period.
    pub forecast_stopped: bool,
}

impl Trajectory {
    pub fn frames_lost(&self) -> u32 {
        match self.status {
            TrackStatus::Active => 0,
            TrackStatus::Lost { frames_lost } => frames_lost,
        }
    }

    pub fn is_lost(&self) -> bool {
        matches!(self.status, TrackStatus::Lost { .. })
    }
}

/// Detections of one video, grouped by frame (index 0 holds frame 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub fps: f64,
    pub width: f64,
    pub height: f64,
    pub frames: Vec<Vec<Detection>>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Detections of 1-based frame `t`; empty outside the sequence.
    pub fn frame(&self, t: u32) -> &[Detection] {
        t.checked_sub(1)
            .and_then(|i| self.frames.get(i as usize))
            .map_or(&[], Vec::as_slice)
    }

    /// True when at least one detection carries an identity label.
    pub fn is_labelled(&self) -> bool {
        self.frames.iter().flatten().any(|d| d.gt_id.is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn det(b: BoundingBox) -> Detection {
        Detection::new(1, b, 1.0, vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn iou_examples() {
        let b = bx(3.0, 4.0, 20.0, 40.0);
        assert_eq!(iou(&b, &b), 1.0);
        assert_eq!(iou(&bx(0.0, 0.0, 1.0, 1.0), &bx(5.0, 5.0, 1.0, 1.0)), 0.0);
        let v = iou(&bx(0.0, 0.0, 10.0, 10.0), &bx(5.0, 0.0, 10.0, 10.0));
        assert!((v - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn max_overlap_examples() {
        let target = det(bx(0.0, 0.0, 10.0, 10.0));
        assert_eq!(max_overlap(&target, &[]), 0.0);
        assert_eq!(max_overlap(&target, std::slice::from_ref(&target)), 1.0);
        let others = [det(bx(5.0, 0.0, 10.0, 10.0)), det(bx(100.0, 100.0, 10.0, 10.0))];
        assert!((max_overlap(&target, &others) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn feature_distance_examples() {
        let e1 = [1.0, 0.0];
        let e2 = [0.0, 1.0];
        assert_eq!(feature_distance(&e1, &e1).unwrap(), 0.0);
        assert_eq!(feature_distance(&e1, &[-1.0, 0.0]).unwrap(), 2.0);
        assert!((feature_distance(&e1, &e2).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            feature_distance(&e1, &[1.0, 0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, f64::NAN, 1.0, 1.0).is_err());
        assert!(Detection::new(0, bx(0.0, 0.0, 1.0, 1.0), 1.0, vec![1.0]).is_err());
        assert!(Detection::new(1, bx(0.0, 0.0, 1.0, 1.0), 1.0, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn detection_features_are_normalized() {
        let d = Detection::new(1, bx(0.0, 0.0, 1.0, 1.0), 1.0, vec![3.0, 4.0]).unwrap();
        assert!((l2_norm(&d.feature) - 1.0).abs() < 1e-12);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (-100.0..100.0f64, -100.0..100.0f64, 0.5..50.0f64, 0.5..50.0f64)
            .prop_map(|(x, y, w, h)| bx(x, y, w, h))
    }

    fn arb_unit(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0..1.0f64, d)
            .prop_filter_map("non-zero", |v| normalized(&v))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            if a != b {
                prop_assert!(ab < 1.0);
            }
        }

        #[test]
        fn iou_translation_invariant(a in arb_box(), b in arb_box(), dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
            let moved = iou(&a.translate(dx, dy), &b.translate(dx, dy));
            prop_assert!((moved - iou(&a, &b)).abs() < 1e-9);
        }

        #[test]
        fn feature_distance_triangle(a in arb_unit(8), b in arb_unit(8), c in arb_unit(8)) {
            let ab = feature_distance(&a, &b).unwrap();
            let bc = feature_distance(&b, &c).unwrap();
            let ac = feature_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!(ab <= 2.0 + 1e-12);
        }
    }
}
