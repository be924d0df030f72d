//! Adam with bias correction, plus the post-step clamp for thresholds.

use crate::autodiff::ParamStore;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer state: first/second moments per parameter element and the step
/// counter. The learning rate is passed per call so schedules stay outside.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, cfg: AdamConfig) -> Self {
        let m = store.iter().map(|p| vec![0.0; p.value.flat().len()]).collect();
        let v = store.iter().map(|p| vec![0.0; p.value.flat().len()]).collect();
        Adam { cfg, m, v, t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update from the accumulated gradients. Clamped parameters are
    /// clipped after the update; a non-finite parameter aborts.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bias1 = 1.0 - b1.powi(self.t as i32);
        let bias2 = 1.0 - b2.powi(self.t as i32);
        for (idx, p) in store.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            let grads = p.grad.flat();
            let step_lr = lr * p.lr_scale;
            let mut updates = Vec::with_capacity(grads.len());
            for (i, &g) in grads.iter().enumerate() {
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                updates.push(step_lr * m_hat / (v_hat.sqrt() + self.cfg.eps));
            }
            let clamp = p.clamp_min;
            for (x, u) in p.value.flat_mut().iter_mut().zip(&updates) {
                *x -= u;
                if let Some(min) = clamp {
                    if *x < min {
                        *x = min;
                    }
                }
                if !x.is_finite() {
                    return Err(Error::numeric(format!(
                        "non-finite parameter {} after optimizer step",
                        p.name
                    )));
                }
            }
        }
        Ok(())
    }
}
