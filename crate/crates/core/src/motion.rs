//! Constant-velocity Kalman filtering of boxes and the gated forecasting of
//! lost trajectories.

use std::fmt;
use std::str::FromStr;

use log::debug;
use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{feature_distance, BoundingBox, Trajectory};

type Vec8 = SVector<f64, 8>;
type Mat8 = SMatrix<f64, 8, 8>;
type Mat4 = SMatrix<f64, 4, 4>;
type Mat48 = SMatrix<f64, 4, 8>;

/// Smallest width/height the filter will report.
const MIN_SIDE: f64 = 1e-3;

/// Noise standard deviations, each a multiple of the current box height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub position_weight: f64,
    pub velocity_weight: f64,
    /// Initial velocity uncertainty.
    pub init_velocity_weight: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            position_weight: 1.0 / 20.0,
            velocity_weight: 1.0 / 160.0,
            init_velocity_weight: 10.0 / 160.0,
        }
    }
}

/// Mean `(cx, cy, w, h, vcx, vcy, vw, vh)` in pixels and pixels/frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: Vec8,
    pub covariance: Mat8,
}

impl KalmanState {
    pub fn to_box(&self) -> BoundingBox {
        let m = &self.mean;
        let w = m[2].max(MIN_SIDE);
        let h = m[3].max(MIN_SIDE);
        BoundingBox {
            x: m[0] - 0.5 * w,
            y: m[1] - 0.5 * h,
            w,
            h,
        }
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.mean[4], self.mean[5])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KalmanFilter {
    pub noise: NoiseModel,
}

fn measurement(b: &BoundingBox) -> SVector<f64, 4> {
    let (cx, cy) = b.center();
    SVector::<f64, 4>::new(cx, cy, b.w, b.h)
}

fn observation() -> Mat48 {
    let mut h = Mat48::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn transition() -> Mat8 {
    let mut f = Mat8::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

impl KalmanFilter {
    pub fn new(noise: NoiseModel) -> Self {
        Self { noise }
    }

    pub fn initiate(&self, b: &BoundingBox) -> KalmanState {
        let z = measurement(b);
        let mut mean = Vec8::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&z);
        let h = b.h;
        let sp = 2.0 * self.noise.position_weight * h;
        let sv = self.noise.init_velocity_weight * h;
        let mut diag = Vec8::zeros();
        for i in 0..4 {
            diag[i] = sp * sp;
            diag[i + 4] = sv * sv;
        }
        KalmanState {
            mean,
            covariance: Mat8::from_diagonal(&diag),
        }
    }

    fn process_noise(&self, h: f64) -> Mat8 {
        let sp = self.noise.position_weight * h;
        let sv = self.noise.velocity_weight * h;
        let mut diag = Vec8::zeros();
        for i in 0..4 {
            diag[i] = sp * sp;
            diag[i + 4] = sv * sv;
        }
        Mat8::from_diagonal(&diag)
    }

    /// Advances the state by one frame.
    pub fn predict(&self, s: &KalmanState) -> KalmanState {
        let f = transition();
        let q = self.process_noise(s.mean[3].max(MIN_SIDE));
        let mut mean = f * s.mean;
        let cov = f * s.covariance * f.transpose() + q;
        mean[2] = mean[2].max(MIN_SIDE);
        mean[3] = mean[3].max(MIN_SIDE);
        KalmanState {
            mean,
            covariance: 0.5 * (cov + cov.transpose()),
        }
    }

    /// Corrects the state with an observed box.
    pub fn update(&self, s: &KalmanState, b: &BoundingBox) -> Result<KalmanState> {
        let hm = observation();
        let sp = self.noise.position_weight * s.mean[3].max(MIN_SIDE);
        let r = Mat4::from_diagonal_element(sp * sp);
        let innovation_cov = hm * s.covariance * hm.transpose() + r;
        let chol = innovation_cov.cholesky().ok_or(Error::NotPositiveDefinite)?;
        // K = P H^T S^-1, computed as (S^-1 H P)^T since S is symmetric.
        let gain = chol.solve(&(hm * s.covariance)).transpose();
        let residual = measurement(b) - hm * s.mean;
        let mut mean = s.mean + gain * residual;
        let ikh = Mat8::identity() - gain * hm;
        let cov = ikh * s.covariance * ikh.transpose() + gain * r * gain.transpose();
        mean[2] = mean[2].max(MIN_SIDE);
        mean[3] = mean[3].max(MIN_SIDE);
        Ok(KalmanState {
            mean,
            covariance: 0.5 * (cov + cov.transpose()),
        })
    }
}

/// Appearance feature of whatever is visible inside a box, when known.
pub trait AppearanceSource {
    fn appearance_at(&self, frame: u32, bbox: &BoundingBox) -> Option<Vec<f64>>;
}

/// Image and appearance information available while forecasting one frame.
#[derive(Clone, Copy)]
pub struct FrameContext<'a> {
    pub frame: u32,
    pub image_width: f64,
    pub image_height: f64,
    pub appearance: Option<&'a dyn AppearanceSource>,
}

/// Decides whether a forecast box still looks like a real target.
pub trait ForecastVerifier: Send + Sync {
    fn keep(&self, predicted: &BoundingBox, traj: &Trajectory, ctx: &FrameContext<'_>) -> bool;
}

/// Geometric plausibility check used when no learned verifier is plugged in:
/// rejects boxes touching the image border band and boxes whose area moved
/// more than `max_area_change` (relative) away from the last observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricVerifier {
    pub border_band: f64,
    pub max_area_change: f64,
}

impl Default for GeometricVerifier {
    fn default() -> Self {
        Self {
            border_band: 4.0,
            max_area_change: 0.5,
        }
    }
}

impl ForecastVerifier for GeometricVerifier {
    fn keep(&self, p: &BoundingBox, traj: &Trajectory, ctx: &FrameContext<'_>) -> bool {
        let band = self.border_band;
        let touches_border = p.x < band
            || p.y < band
            || p.right() > ctx.image_width - band
            || p.bottom() > ctx.image_height - band;
        let change = (p.area() / traj.last_box.area() - 1.0).abs();
        !touches_border && change <= self.max_area_change
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlwaysKeep;

impl ForecastVerifier for AlwaysKeep {
    fn keep(&self, _: &BoundingBox, _: &Trajectory, _: &FrameContext<'_>) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlwaysStop;

impl ForecastVerifier for AlwaysStop {
    fn keep(&self, _: &BoundingBox, _: &Trajectory, _: &FrameContext<'_>) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifierKind {
    #[default]
    Default,
    AlwaysKeep,
    AlwaysStop,
}

impl VerifierKind {
    pub fn build(self) -> Box<dyn ForecastVerifier> {
        match self {
            VerifierKind::Default => Box::new(GeometricVerifier::default()),
            VerifierKind::AlwaysKeep => Box::new(AlwaysKeep),
            VerifierKind::AlwaysStop => Box::new(AlwaysStop),
        }
    }
}

impl FromStr for VerifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(VerifierKind::Default),
            "always_keep" => Ok(VerifierKind::AlwaysKeep),
            "always_stop" => Ok(VerifierKind::AlwaysStop),
            other => Err(Error::InvalidArgument(format!("unknown verifier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    OutOfView,
    VerifierReject,
    AppearanceDrift,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::OutOfView => "out-of-view",
            StopReason::VerifierReject => "verifier-reject",
            StopReason::AppearanceDrift => "appearance-drift",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forecast {
    Continue(BoundingBox),
    Stop(StopReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastGates {
    /// Minimum fraction of the forecast box inside the image.
    pub min_visible_fraction: f64,
    /// Maximum appearance distance between trajectory and forecast box.
    pub theta_app: f64,
}

impl Default for ForecastGates {
    fn default() -> Self {
        Self {
            min_visible_fraction: 0.5,
            theta_app: 0.6,
        }
    }
}

/// Runs the three forecasting gates on a lost trajectory whose filter has
/// already been advanced to `ctx.frame`: field of view, verifier, then
/// appearance drift. The appearance gate is skipped when `ctx` has no
/// appearance source or the source knows nothing about the box.
pub fn forecast_lost(
    traj: &Trajectory,
    ctx: &FrameContext<'_>,
    verifier: &dyn ForecastVerifier,
    gates: &ForecastGates,
) -> Forecast {
    let predicted = traj.motion.to_box();
    if predicted.visible_fraction(ctx.image_width, ctx.image_height) < gates.min_visible_fraction {
        return Forecast::Stop(StopReason::OutOfView);
    }
    if !verifier.keep(&predicted, traj, ctx) {
        return Forecast::Stop(StopReason::VerifierReject);
    }
    match ctx.appearance.and_then(|src| src.appearance_at(ctx.frame, &predicted)) {
        Some(feature) => match feature_distance(&traj.integrated_feature, &feature) {
            Ok(d) if d <= gates.theta_app => Forecast::Continue(predicted),
            Ok(_) => Forecast::Stop(StopReason::AppearanceDrift),
            Err(e) => {
                debug!("track {}: appearance gate skipped: {e}", traj.id);
                Forecast::Continue(predicted)
            }
        },
        None => {
            debug!("track {} frame {}: no appearance at forecast box, gate skipped", traj.id, ctx.frame);
            Forecast::Continue(predicted)
        }
    }
}
