//! Small trainable building blocks with hand-written reverse passes: dense
//! arrays, MLPs, an LSTM cell, weighted binary cross-entropy, Adam, a
//! finite-difference gradient checker and a checkpoint container.

mod adam;
mod array;
pub mod checkpoint;
pub mod gradcheck;
mod loss;
mod lstm;
mod mlp;
mod params;

pub use adam::{AdamState, BETA1, BETA2, EPSILON};
pub use array::Array;
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{sigmoid, weighted_bce, weighted_bce_grad, weighted_bce_logit, PROB_CLIP};
pub use lstm::{LstmCache, LstmParams, LstmState};
pub use mlp::{Activation, Linear, Mlp, MlpCache};
pub use params::Parameters;
pub(crate) use params::join;
