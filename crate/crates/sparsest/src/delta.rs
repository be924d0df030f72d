//! Thresholded temporal-difference (delta) tracking.
//!
//! Each stream keeps a memorized reference `x_hat` alongside a nonnegative
//! threshold `theta`. A step emits the sparse delta between the incoming
//! tensor and the reference, fires only where the change magnitude strictly
//! exceeds the threshold, and resets the reference at fired positions so the
//! per-position approximation error can never exceed the threshold.

use crate::tensor::{to_sparse, DenseTensor, SparseTensor2D};
use crate::{Error, Result};

/// Per-stream delta state: learnable threshold plus memorized reference.
/// The reference starts at zero, so the first step emits the raw input
/// wherever it clears the threshold.
#[derive(Debug, Clone)]
pub struct DeltaState {
    theta: f64,
    x_hat: DenseTensor,
}

/// Everything a single delta step produces. `mask` and `abs_diff` are
/// per-element (length `C*H*W`); the mask holds 1.0 at fired elements.
#[derive(Debug, Clone)]
pub struct DeltaStepOutput {
    pub delta: SparseTensor2D,
    pub mask: Vec<f64>,
    pub abs_diff: Vec<f64>,
}

impl DeltaState {
    pub fn new(theta: f64, channels: usize, height: usize, width: usize) -> Self {
        assert!(theta >= 0.0, "threshold must be nonnegative");
        DeltaState {
            theta,
            x_hat: DenseTensor::zeros(channels, height, width),
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn set_theta(&mut self, theta: f64) {
        assert!(theta >= 0.0);
        self.theta = theta;
    }

    pub fn x_hat(&self) -> &DenseTensor {
        &self.x_hat
    }

    /// Emit the thresholded delta for `x_t` and advance the reference.
    ///
    /// Fires where `|x_t - x_hat| > theta` (strict); fired positions emit
    /// `x_t - x_hat` and update the reference to `x_t` exactly, others emit
    /// zero and hold the reference.
    pub fn step(&mut self, x_t: &DenseTensor) -> Result<SparseTensor2D> {
        self.step_detailed(x_t).map(|out| out.delta)
    }

    /// [`DeltaState::step`] plus the per-element fired mask and change
    /// magnitudes, as needed to record the step on a differentiation tape.
    pub fn step_detailed(&mut self, x_t: &DenseTensor) -> Result<DeltaStepOutput> {
        if !x_t.same_dims(&self.x_hat) {
            return Err(Error::shape(format!(
                "delta step input dims {:?} do not match state dims {:?}",
                x_t.dims(),
                self.x_hat.dims()
            )));
        }
        let n = x_t.len();
        let mut delta = DenseTensor::zeros(x_t.channels(), x_t.height(), x_t.width());
        let mut mask = vec![0.0; n];
        let mut abs_diff = vec![0.0; n];
        {
            let xv = x_t.values();
            let hv = self.x_hat.values_mut();
            let dv = delta.values_mut();
            for i in 0..n {
                let d = xv[i] - hv[i];
                abs_diff[i] = d.abs();
                if d.abs() > self.theta {
                    dv[i] = d;
                    mask[i] = 1.0;
                    hv[i] = xv[i];
                }
            }
        }
        Ok(DeltaStepOutput {
            delta: to_sparse(&delta, 0.0),
            mask,
            abs_diff,
        })
    }
}

/// The delta recursion: add this step's convolved delta to the running
/// memory. With a zero threshold the accumulated memory telescopes back to
/// the full dense product.
pub fn delta_accumulate(
    conv_result_on_delta: &DenseTensor,
    memory_prev: &DenseTensor,
) -> Result<DenseTensor> {
    conv_result_on_delta.add(memory_prev)
}

/// Differentiable surrogate of the fired fraction: mean over elements of
/// `sigmoid((|x_t - x_hat| - theta) / tau)`. Only used to backpropagate the
/// occupancy objective into the threshold; the hard metric stays elsewhere.
pub fn soft_fire_fraction(state: &DeltaState, x_t: &DenseTensor, tau: f64) -> Result<f64> {
    if !x_t.same_dims(state.x_hat()) {
        return Err(Error::shape("soft_fire_fraction dim mismatch".to_string()));
    }
    assert!(tau > 0.0, "tau must be positive");
    let theta = state.theta;
    let mut sum = 0.0;
    for (&x, &h) in x_t.values().iter().zip(state.x_hat.values()) {
        sum += sigmoid(((x - h).abs() - theta) / tau);
    }
    Ok(sum / x_t.len() as f64)
}

/// Surrogate value and its derivative in theta, computed from cached change
/// magnitudes: `d/dtheta mean sigmoid((|d| - theta)/tau)
/// = mean of -sigmoid'((|d| - theta)/tau) / tau`.
pub fn soft_fire_from_abs_diff(abs_diff: &[f64], theta: f64, tau: f64) -> (f64, f64) {
    let mut value = 0.0;
    let mut dtheta = 0.0;
    for &d in abs_diff {
        let s = sigmoid((d - theta) / tau);
        value += s;
        dtheta += -s * (1.0 - s) / tau;
    }
    let n = abs_diff.len() as f64;
    (value / n, dtheta / n)
}

/// Fraction of elements whose change magnitude strictly exceeds theta.
pub fn hard_fire_fraction(abs_diff: &[f64], theta: f64) -> f64 {
    let fired = abs_diff.iter().filter(|&&d| d > theta).count();
    fired as f64 / abs_diff.len() as f64
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
