//! Trajectory feature integration: how a matched detection's appearance is
//! folded into the trajectory's running feature.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LstmParams, LstmState};
use crate::types::{l2_norm, max_overlap, Detection, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegrationMode {
    /// The trajectory feature is the last matched detection's feature.
    None,
    /// An LSTM cell runs over the matched features; its output is the feature.
    Lstm,
    /// Running average with the new feature.
    Average,
    /// Average weighted by how much the new detection overlaps others.
    #[serde(rename = "iou")]
    IouGuided,
}

impl IntegrationMode {
    pub const ALL: [IntegrationMode; 4] = [
        IntegrationMode::None,
        IntegrationMode::Lstm,
        IntegrationMode::Average,
        IntegrationMode::IouGuided,
    ];
}

impl fmt::Display for IntegrationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IntegrationMode::None => "none",
            IntegrationMode::Lstm => "lstm",
            IntegrationMode::Average => "average",
            IntegrationMode::IouGuided => "iou",
        })
    }
}

impl FromStr for IntegrationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(IntegrationMode::None),
            "lstm" => Ok(IntegrationMode::Lstm),
            "average" => Ok(IntegrationMode::Average),
            "iou" => Ok(IntegrationMode::IouGuided),
            other => Err(Error::InvalidArgument(format!("unknown integration mode `{other}`"))),
        }
    }
}

/// Rescales to unit length. Vectors already unit length to 1e-12 are returned
/// untouched; a (near) zero vector yields `fallback`.
pub(crate) fn renormalize(v: Vec<f64>, fallback: &[f64]) -> Vec<f64> {
    let n = l2_norm(&v);
    if !n.is_finite() || n < 1e-12 {
        return fallback.to_vec();
    }
    if (n - 1.0).abs() <= 1e-12 {
        return v;
    }
    v.into_iter().map(|x| x / n).collect()
}

/// `0.5 * (prev + new)`, renormalized.
pub fn integrate_average(prev: &[f64], new: &[f64]) -> Vec<f64> {
    let v = prev.iter().zip(new).map(|(p, n)| 0.5 * (p + n)).collect();
    renormalize(v, new)
}

/// `0.5 * (prev * (1 + overlap) + new * (1 - overlap))`, renormalized.
pub fn integrate_iou_guided(prev: &[f64], new: &[f64], overlap: f64) -> Vec<f64> {
    let keep = 1.0 + overlap;
    let take = 1.0 - overlap;
    let v = prev
        .iter()
        .zip(new)
        .map(|(p, n)| 0.5 * (p * keep + n * take))
        .collect();
    renormalize(v, new)
}

/// One LSTM step; the hidden output (renormalized) becomes the feature.
pub fn integrate_lstm(state: &LstmState, new: &[f64], params: &LstmParams) -> Result<(Vec<f64>, LstmState)> {
    if params.hidden_dim() != new.len() {
        return Err(Error::DimensionMismatch {
            expected: new.len(),
            actual: params.hidden_dim(),
        });
    }
    let (h, next, _) = params.step(state, new)?;
    Ok((renormalize(h, new), next))
}

/// Feature and LSTM state for a trajectory spawned from `first`.
pub fn initial_feature(
    mode: IntegrationMode,
    first: &[f64],
    lstm: Option<&LstmParams>,
) -> Result<(Vec<f64>, Option<LstmState>)> {
    match mode {
        IntegrationMode::Lstm => {
            let params = lstm.ok_or_else(|| Error::InvalidArgument("LSTM integration needs LSTM weights".into()))?;
            let (f, s) = integrate_lstm(&LstmState::zeros(params.hidden_dim()), first, params)?;
            Ok((f, Some(s)))
        }
        _ => Ok((first.to_vec(), None)),
    }
}

/// Folds `frame_dets[matched]` into `traj.integrated_feature`.
///
/// For IoU-guided integration the overlap is the largest IoU between the
/// matched detection and every other detection of the frame.
pub fn update_trajectory_feature(
    traj: &mut Trajectory,
    frame_dets: &[Detection],
    matched: usize,
    mode: IntegrationMode,
    lstm: Option<&LstmParams>,
) -> Result<()> {
    let det = frame_dets
        .get(matched)
        .ok_or_else(|| Error::InvalidArgument(format!("no detection {matched} in frame")))?;
    let f = &det.feature;
    traj.integrated_feature = match mode {
        IntegrationMode::None => f.clone(),
        IntegrationMode::Average => integrate_average(&traj.integrated_feature, f),
        IntegrationMode::IouGuided => {
            let others = frame_dets
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != matched)
                .map(|(_, d)| d);
            let overlap = max_overlap(det, others);
            integrate_iou_guided(&traj.integrated_feature, f, overlap)
        }
        IntegrationMode::Lstm => {
            let params = lstm.ok_or_else(|| Error::InvalidArgument("LSTM integration needs LSTM weights".into()))?;
            let state = traj
                .lstm_state
                .take()
                .unwrap_or_else(|| LstmState::zeros(params.hidden_dim()));
            let (feat, next) = integrate_lstm(&state, f, params)?;
            traj.lstm_state = Some(next);
            feat
        }
    };
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{KalmanFilter, NoiseModel};
    use crate::types::{normalized, BoundingBox, TrackStatus};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const E1: [f64; 2] = [1.0, 0.0];
    const E2: [f64; 2] = [0.0, 1.0];

    fn trajectory(feature: Vec<f64>) -> Trajectory {
        let b = BoundingBox::new(0.0, 0.0, 10.0, 20.0).unwrap();
        Trajectory {
            id: 1,
            integrated_feature: feature,
            lstm_state: None,
            last_box: b,
            last_seen_frame: 1,
            status: TrackStatus::Active,
            motion: KalmanFilter::new(NoiseModel::default()).initiate(&b),
            history: vec![(1, b)],
            forecast_stopped: false,
        }
    }

    fn det(x: f64, feature: &[f64]) -> Detection {
        Detection::new(2, BoundingBox::new(x, 0.0, 10.0, 20.0).unwrap(), 0.9, feature.to_vec()).unwrap()
    }

    #[test]
    fn average_examples() {
        let v = normalized(&[0.3, -0.4, 0.5]).unwrap();
        let out = integrate_average(&v, &v);
        for (a, b) in out.iter().zip(&v) {
            assert!((a - b).abs() < 1e-15);
        }
        let s = 0.5f64.sqrt();
        let out = integrate_average(&E1, &E2);
        assert!((out[0] - s).abs() < 1e-15 && (out[1] - s).abs() < 1e-15);
        assert_eq!(integrate_average(&E1, &[-1.0, 0.0]), vec![-1.0, 0.0]);
    }

    #[test]
    fn iou_guided_examples() {
        let v = normalized(&[0.2, 0.9, -0.1]).unwrap();
        let w = normalized(&[-0.5, 0.1, 0.7]).unwrap();
        assert_eq!(integrate_iou_guided(&v, &w, 0.0), integrate_average(&v, &w));
        assert_eq!(integrate_iou_guided(&v, &w, 1.0), v);
        let out = integrate_iou_guided(&E1, &E2, 0.5);
        // 0.5 * (1.5 e1 + 0.5 e2) = (0.75, 0.25), normalized.
        let n = (0.75f64 * 0.75 + 0.25 * 0.25).sqrt();
        assert!((out[0] - 0.75 / n).abs() < 1e-15);
        assert!((out[1] - 0.25 / n).abs() < 1e-15);
        assert!((out[0] - 0.9487).abs() < 1e-4 && (out[1] - 0.3162).abs() < 1e-4);
    }

    #[test]
    fn lstm_zero_weights_fall_back_to_new_feature() {
        let p = LstmParams::zeros(2, 2);
        let (f, s) = integrate_lstm(&LstmState::zeros(2), &E2, &p).unwrap();
        assert_eq!(f, E2.to_vec());
        assert_eq!(s.h, vec![0.0, 0.0]);
        assert!(integrate_lstm(&LstmState::zeros(2), &[1.0, 0.0, 0.0], &p).is_err());
    }

    #[test]
    fn lstm_is_order_sensitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = LstmParams::new(3, 3, &mut rng);
        let a = normalized(&[1.0, 0.2, -0.3]).unwrap();
        let b = normalized(&[-0.4, 0.8, 0.5]).unwrap();
        let run = |seq: [&Vec<f64>; 2]| {
            let mut s = LstmState::zeros(3);
            let mut f = Vec::new();
            for x in seq {
                let (nf, ns) = integrate_lstm(&s, x, &p).unwrap();
                f = nf;
                s = ns;
            }
            f
        };
        let ab = run([&a, &b]);
        let ba = run([&b, &a]);
        assert!(crate::types::feature_distance(&ab, &ba).unwrap() > 1e-6);
        assert!((l2_norm(&ab) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn update_none_takes_matched_feature() {
        let mut t = trajectory(E1.to_vec());
        let dets = [det(0.0, &E2)];
        update_trajectory_feature(&mut t, &dets, 0, IntegrationMode::None, None).unwrap();
        assert_eq!(t.integrated_feature, E2.to_vec());
    }

    #[test]
    fn update_iou_isolated_equals_average() {
        let mut a = trajectory(E1.to_vec());
        let mut b = trajectory(E1.to_vec());
        let dets = [det(0.0, &E2), det(500.0, &E1)];
        update_trajectory_feature(&mut a, &dets, 0, IntegrationMode::IouGuided, None).unwrap();
        update_trajectory_feature(&mut b, &dets, 0, IntegrationMode::Average, None).unwrap();
        assert_eq!(a.integrated_feature, b.integrated_feature);
    }

    #[test]
    fn update_iou_full_overlap_freezes_both() {
        let fa = normalized(&[0.6, 0.8]).unwrap();
        let fb = normalized(&[0.8, -0.6]).unwrap();
        let mut ta = trajectory(fa.clone());
        let mut tb = trajectory(fb.clone());
        let dets = [det(0.0, &E2), det(0.0, &E1)];
        update_trajectory_feature(&mut ta, &dets, 0, IntegrationMode::IouGuided, None).unwrap();
        update_trajectory_feature(&mut tb, &dets, 1, IntegrationMode::IouGuided, None).unwrap();
        assert_eq!(ta.integrated_feature, fa);
        assert_eq!(tb.integrated_feature, fb);
    }

    #[test]
    fn update_lstm_requires_weights_and_keeps_state() {
        let mut t = trajectory(E1.to_vec());
        let dets = [det(0.0, &E2)];
        assert!(update_trajectory_feature(&mut t, &dets, 0, IntegrationMode::Lstm, None).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = LstmParams::new(2, 2, &mut rng);
        update_trajectory_feature(&mut t, &dets, 0, IntegrationMode::Lstm, Some(&p)).unwrap();
        assert!(t.lstm_state.is_some());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in IntegrationMode::ALL {
            assert_eq!(m.to_string().parse::<IntegrationMode>().unwrap(), m);
        }
        assert!("mean".parse::<IntegrationMode>().is_err());
    }

    fn arb_unit(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0..1.0f64, d).prop_filter_map("non-zero", |v| normalized(&v))
    }

    fn angle(a: &[f64], b: &[f64]) -> f64 {
        let c: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        c.clamp(-1.0, 1.0).acos()
    }

    proptest! {
        #[test]
        fn output_in_span_of_inputs(p in arb_unit(5), n in arb_unit(5), i in 0.0..1.0f64) {
            let out = integrate_iou_guided(&p, &n, i);
            // Least-squares fit out ≈ a p + b n via the 2x2 normal equations.
            let pp: f64 = p.iter().map(|x| x * x).sum();
            let nn: f64 = n.iter().map(|x| x * x).sum();
            let pn: f64 = p.iter().zip(&n).map(|(x, y)| x * y).sum();
            let op: f64 = out.iter().zip(&p).map(|(x, y)| x * y).sum();
            let on: f64 = out.iter().zip(&n).map(|(x, y)| x * y).sum();
            let det = pp * nn - pn * pn;
            prop_assume!(det > 1e-6);
            let a = (op * nn - on * pn) / det;
            let b = (on * pp - op * pn) / det;
            let resid: f64 = (0..5).map(|k| (out[k] - a * p[k] - b * n[k]).powi(2)).sum::<f64>().sqrt();
            prop_assert!(resid < 1e-9);
        }

        #[test]
        fn angle_to_previous_non_increasing_in_overlap(p in arb_unit(6), n in arb_unit(6)) {
            prop_assume!(crate::types::feature_distance(&p, &n).unwrap() > 1e-3);
            prop_assume!(crate::types::feature_distance(&p, &n.iter().map(|x| -x).collect::<Vec<_>>()).unwrap() > 1e-3);
            let mut prev = f64::INFINITY;
            for k in 0..=20 {
                let out = integrate_iou_guided(&p, &n, k as f64 / 20.0);
                let a = angle(&out, &p);
                prop_assert!(a <= prev + 1e-9);
                prev = a;
            }
        }
    }
}
