//! Delta-gated, sparsity-exploiting convolutional-LSTM engine.
//!
//! The crate bundles the pieces needed to train and audit a temporally
//! sparse recurrent video model on a single machine:
//!
//! - [`tensor`]: dense and coordinate-sparse 2D tensors plus active-site
//!   accounting.
//! - [`conv`]: zero-skipping sparse convolution with a dense oracle.
//! - [`delta`]: thresholded temporal-difference (delta) state tracking.
//! - [`cell`]: the sparse recurrent unit, its dense baseline, and stacked
//!   sequence models.
//! - [`autodiff`] / [`optim`]: a minimal reverse-mode tape and Adam, enough
//!   for backpropagation through time at this scale.
//! - [`objectives`]: MSE, unit occupancy, and linear / Tchebycheff /
//!   smooth-Tchebycheff scalarizations.
//! - [`cost`]: closed-form FLOP accounting and acceleration ratios.
//! - [`train`]: teacher-forced training, recursive rollout, sliding-window
//!   anomaly scoring.
//! - [`pareto`]: multi-task GP over preference weights, variance-sum
//!   acquisition, dominance filtering.
//! - [`data`] / [`metrics`]: synthetic video generators and ROC/AUC.
//! - [`io`]: the on-disk dataset, checkpoint, CSV and JSON formats.

#![allow(clippy::needless_range_loop)]

pub mod autodiff;
pub mod cell;
pub mod conv;
pub mod cost;
pub mod data;
pub mod delta;
mod error;
pub mod io;
pub mod metrics;
pub mod objectives;
pub mod optim;
pub mod pareto;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
