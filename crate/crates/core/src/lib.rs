//! Online multi-object tracking by detection.
//!
//! Each frame, lost and active trajectories and the new detections form a
//! bipartite graph. Candidate edges come from a K-nearest search and are
//! pruned by a ratio test on box overlap or appearance. A message passing
//! network scores the remaining edges, a ranked greedy scan turns scores into
//! matches, and a Kalman filter carries trajectories through missed frames,
//! with forecasts checked against image bounds and appearance.
//!
//! Module overview:
//!
//! * [`types`]: boxes, detections, trajectories, sequences.
//! * [`nn`]: arrays, MLPs, LSTM cell, loss, Adam, gradient checking, checkpoints.
//! * [`integration`]: trajectory appearance updates.
//! * [`graph`]: candidate edges, ratio test, edge features.
//! * [`mpn`]: the edge classifier and its training.
//! * [`motion`]: Kalman filter and forecasting of lost trajectories.
//! * [`tracker`]: the per-frame loop and matching.
//! * [`metrics`]: CLEAR-MOT, IDF1 and ratio-test analysis.
//! * [`synth`]: synthetic scenes with ground truth.
//! * [`io`], [`config`], [`cli`]: file formats, run configuration, commands.

pub mod assignment;
pub mod cli;
pub mod config;
pub mod error;
pub mod graph;
pub mod integration;
pub mod io;
pub mod metrics;
pub mod motion;
pub mod mpn;
pub mod nn;
pub mod synth;
pub mod tracker;
pub mod types;

pub use error::{Error, Result};
