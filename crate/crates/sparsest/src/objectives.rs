//! Training objectives and their scalarizations.
//!
//! Two objectives: prediction MSE and average unit occupancy (the mean
//! active-site fraction over every delta tensor the model emitted). Three
//! ways to collapse them to one number: a weighted sum, the Tchebycheff
//! max, and its log-sum-exp smoothing. Objectives with zero preference
//! weight are excluded from the max/LSE so a degenerate preference reduces
//! exactly to the surviving term.

use serde::{Deserialize, Serialize};

use crate::tensor::DenseTensor;
use crate::{Error, Result};

/// One evaluated point in objective space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub mse: f64,
    /// Hard (site-counting) occupancy in [0, 1].
    pub occupancy: f64,
}

impl ObjectiveVector {
    pub fn as_array(&self) -> [f64; 2] {
        [self.mse, self.occupancy]
    }

    pub fn is_finite(&self) -> bool {
        self.mse.is_finite() && self.occupancy.is_finite()
    }
}

/// Preference weight, smoothing factor and ideal point for scalarization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScalarizationConfig {
    /// Weight on the MSE objective; the occupancy objective gets `1 - w_mse`.
    pub w_mse: f64,
    /// Smoothing factor of the log-sum-exp; must be positive.
    pub mu: f64,
    /// Ideal point (z*) per objective.
    pub z_star: [f64; 2],
}

impl Default for ScalarizationConfig {
    fn default() -> Self {
        ScalarizationConfig { w_mse: 1.0, mu: 0.1, z_star: [0.0, 0.0] }
    }
}

impl ScalarizationConfig {
    pub fn new(w_mse: f64, mu: f64) -> Self {
        assert!((0.0..=1.0).contains(&w_mse), "w_mse must lie in [0, 1]");
        assert!(mu > 0.0, "mu must be positive");
        ScalarizationConfig { w_mse, mu, z_star: [0.0, 0.0] }
    }

    pub fn weights(&self) -> [f64; 2] {
        [self.w_mse, 1.0 - self.w_mse]
    }
}

/// Mean squared error over matching frame sequences: the average over every
/// frame, channel and pixel of the squared difference.
pub fn mse(pred: &[DenseTensor], target: &[DenseTensor]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!(
            "{} predicted frames vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::shape("mse over zero frames".to_string()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, t) in pred.iter().zip(target) {
        if !p.same_dims(t) {
            return Err(Error::shape(format!(
                "frame dims {:?} vs {:?}",
                p.dims(),
                t.dims()
            )));
        }
        for (a, b) in p.values().iter().zip(t.values()) {
            let d = a - b;
            sum += d * d;
        }
        count += p.len();
    }
    Ok(sum / count as f64)
}

/// Flat mean of recorded per-unit delta occupancies (all units, both delta
/// streams, all time steps, whole batch, weighted uniformly).
pub fn avg_unit_occupancy(recorded: &[f64]) -> Result<f64> {
    if recorded.is_empty() {
        return Err(Error::data("no recorded delta occupancies".to_string()));
    }
    Ok(recorded.iter().sum::<f64>() / recorded.len() as f64)
}

/// Weighted sum of objectives.
pub fn linear_scalarize(f: &ObjectiveVector, weights: [f64; 2]) -> f64 {
    let fs = f.as_array();
    weights[0] * fs[0] + weights[1] * fs[1]
}

/// Tchebycheff scalarization: max over the positive-weight objectives of
/// `w_i * (f_i - z_i*)`.
pub fn tch_scalarize(f: &ObjectiveVector, weights: [f64; 2], z_star: [f64; 2]) -> f64 {
    let fs = f.as_array();
    let mut best = f64::NEG_INFINITY;
    for i in 0..2 {
        if weights[i] > 0.0 {
            best = best.max(weights[i] * (fs[i] - z_star[i]));
        }
    }
    best
}

/// Smooth Tchebycheff scalarization:
/// `mu * log(sum_i exp(w_i (f_i - z_i*) / mu))` over positive-weight terms,
/// computed through a max-shifted log-sum-exp so small `mu` cannot overflow.
pub fn stch_scalarize(f: &ObjectiveVector, cfg: &ScalarizationConfig) -> f64 {
    let terms = weighted_offsets(f, cfg);
    stch_from_terms(&terms, cfg.mu)
}

/// Gradient of the smooth scalarization in each objective: the softmax of
/// the scaled terms times the objective's weight (zero-weight objectives get
/// zero gradient).
pub fn stch_gradient(f: &ObjectiveVector, cfg: &ScalarizationConfig) -> [f64; 2] {
    let weights = cfg.weights();
    let fs = f.as_array();
    let mut terms = Vec::new();
    let mut idx = Vec::new();
    for i in 0..2 {
        if weights[i] > 0.0 {
            terms.push(weights[i] * (fs[i] - cfg.z_star[i]));
            idx.push(i);
        }
    }
    let soft = softmax_scaled(&terms, cfg.mu);
    let mut grad = [0.0; 2];
    for (s, &i) in soft.iter().zip(&idx) {
        grad[i] = s * weights[i];
    }
    grad
}

/// The composite training loss: smooth Tchebycheff over (MSE, occupancy).
/// Callers pass the differentiable soft occupancy here; the hard occupancy
/// stays a reported metric.
pub fn composite_loss(mse_val: f64, soft_occupancy: f64, cfg: &ScalarizationConfig) -> f64 {
    stch_scalarize(
        &ObjectiveVector { mse: mse_val, occupancy: soft_occupancy },
        cfg,
    )
}

fn weighted_offsets(f: &ObjectiveVector, cfg: &ScalarizationConfig) -> Vec<f64> {
    let weights = cfg.weights();
    let fs = f.as_array();
    (0..2)
        .filter(|&i| weights[i] > 0.0)
        .map(|i| weights[i] * (fs[i] - cfg.z_star[i]))
        .collect()
}

pub(crate) fn stch_from_terms(terms: &[f64], mu: f64) -> f64 {
    assert!(!terms.is_empty());
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|&t| ((t - m) / mu).exp()).sum();
    m + mu * sum.ln()
}

pub(crate) fn softmax_scaled(terms: &[f64], mu: f64) -> Vec<f64> {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = terms.iter().map(|&t| ((t - m) / mu).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn obj(mse: f64, occ: f64) -> ObjectiveVector {
        ObjectiveVector { mse, occupancy: occ }
    }

    #[test]
    fn mse_examples() {
        let a = DenseTensor::from_values(1, 2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(mse(std::slice::from_ref(&a), std::slice::from_ref(&a)).unwrap(), 0.0);
        let half = a.map(|_| 0.5);
        let zero = a.map(|_| 0.0);
        assert!((mse(&[half], &[zero]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mse_matches_flat_loop() {
        let mut rng = RngState::new(41);
        let pred: Vec<DenseTensor> = (0..3)
            .map(|_| {
                DenseTensor::from_values(2, 3, 3, (0..18).map(|_| rng.uniform()).collect())
                    .unwrap()
            })
            .collect();
        let target: Vec<DenseTensor> = (0..3)
            .map(|_| {
                DenseTensor::from_values(2, 3, 3, (0..18).map(|_| rng.uniform()).collect())
                    .unwrap()
            })
            .collect();
        let mut sum = 0.0;
        let mut n = 0;
        for (p, t) in pred.iter().zip(&target) {
            for (a, b) in p.values().iter().zip(t.values()) {
                sum += (a - b) * (a - b);
                n += 1;
            }
        }
        assert!((mse(&pred, &target).unwrap() - sum / n as f64).abs() < 1e-15);
    }

    #[test]
    fn mse_shape_mismatch() {
        let a = DenseTensor::zeros(1, 2, 2);
        let b = DenseTensor::zeros(1, 3, 3);
        assert!(mse(&[a], &[b]).is_err());
    }

    #[test]
    fn occupancy_average_examples() {
        assert_eq!(avg_unit_occupancy(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(avg_unit_occupancy(&[0.6, 0.4]).unwrap(), 0.5);
        assert!(avg_unit_occupancy(&[]).is_err());
        let mut rng = RngState::new(42);
        let xs: Vec<f64> = (0..37).map(|_| rng.uniform()).collect();
        let flat = xs.iter().sum::<f64>() / 37.0;
        assert!((avg_unit_occupancy(&xs).unwrap() - flat).abs() < 1e-15);
    }

    #[test]
    fn linear_scalarize_examples() {
        assert_eq!(linear_scalarize(&obj(2.0, 4.0), [1.0, 0.0]), 2.0);
        assert_eq!(linear_scalarize(&obj(2.0, 4.0), [0.5, 0.5]), 3.0);
        let mut rng = RngState::new(43);
        for _ in 0..50 {
            let f = obj(rng.uniform(), rng.uniform());
            let w = rng.uniform();
            let got = linear_scalarize(&f, [w, 1.0 - w]);
            assert!((got - (w * f.mse + (1.0 - w) * f.occupancy)).abs() < 1e-15);
        }
    }

    #[test]
    fn tch_scalarize_examples() {
        assert_eq!(tch_scalarize(&obj(2.0, 4.0), [0.5, 0.5], [0.0, 0.0]), 2.0);
        assert_eq!(tch_scalarize(&obj(1.0, 2.0), [0.5, 0.5], [1.0, 2.0]), 0.0);
        let mut rng = RngState::new(44);
        for _ in 0..100 {
            let f = obj(rng.normal(), rng.normal());
            let w = rng.uniform();
            let z = [rng.normal(), rng.normal()];
            let got = tch_scalarize(&f, [w, 1.0 - w], z);
            let mut brute = f64::NEG_INFINITY;
            if w > 0.0 {
                brute = brute.max(w * (f.mse - z[0]));
            }
            if 1.0 - w > 0.0 {
                brute = brute.max((1.0 - w) * (f.occupancy - z[1]));
            }
            assert_eq!(got, brute);
        }
    }

    #[test]
    fn stch_closed_form_examples() {
        // Single surviving objective: exactly the weighted offset for any mu.
        let cfg = ScalarizationConfig { w_mse: 1.0, mu: 0.37, z_star: [0.25, 0.0] };
        assert!((stch_scalarize(&obj(2.0, 9.0), &cfg) - (2.0 - 0.25)).abs() < 1e-15);

        let cfg = ScalarizationConfig { w_mse: 0.5, mu: 1.0, z_star: [0.0, 0.0] };
        let got = stch_scalarize(&obj(2.0, 2.0), &cfg);
        assert!((got - (1.0 + 2.0f64.ln())).abs() < 1e-12);

        let cfg = ScalarizationConfig { w_mse: 0.5, mu: 0.1, z_star: [0.0, 0.0] };
        let got = stch_scalarize(&obj(2.0, 4.0), &cfg);
        let expect = 2.0 + 0.1 * (1.0 + (-10.0f64).exp()).ln();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn stch_survives_tiny_mu() {
        let cfg = ScalarizationConfig { w_mse: 0.5, mu: 1e-6, z_star: [0.0, 0.0] };
        let got = stch_scalarize(&obj(2.0, 4.0), &cfg);
        assert!(got.is_finite());
        assert!((got - 2.0).abs() < 1e-9);
    }

    #[test]
    fn bracket_and_translation_properties() {
        let mut rng = RngState::new(45);
        for _ in 0..500 {
            let f = obj(rng.normal().abs(), rng.uniform());
            let w = rng.uniform();
            let mu = 10f64.powf(rng.uniform_in(-3.0, 0.0));
            let z = [rng.normal() * 0.1, rng.normal() * 0.1];
            let cfg = ScalarizationConfig { w_mse: w, mu, z_star: z };
            let tch = tch_scalarize(&f, cfg.weights(), z);
            let stch = stch_scalarize(&f, &cfg);
            let k: f64 = if w > 0.0 && w < 1.0 { 2.0 } else { 1.0 };
            assert!(tch <= stch + 1e-12);
            assert!(stch <= tch + mu * k.ln() + 1e-12);

            // Shifting objectives by z* with a zero ideal point is identical.
            let shifted = obj(f.mse - z[0], f.occupancy - z[1]);
            let cfg0 = ScalarizationConfig { w_mse: w, mu, z_star: [0.0, 0.0] };
            assert!((stch_scalarize(&shifted, &cfg0) - stch).abs() < 1e-12);
        }
    }

    #[test]
    fn stch_monotone_in_each_objective() {
        let mut rng = RngState::new(46);
        for _ in 0..200 {
            let f = obj(rng.uniform(), rng.uniform());
            let w = rng.uniform_in(0.05, 0.95);
            let cfg = ScalarizationConfig { w_mse: w, mu: 0.1, z_star: [0.0, 0.0] };
            let base = stch_scalarize(&f, &cfg);
            let bump = 1e-3;
            let up_mse = stch_scalarize(&obj(f.mse + bump, f.occupancy), &cfg);
            let up_occ = stch_scalarize(&obj(f.mse, f.occupancy + bump), &cfg);
            assert!(up_mse > base);
            assert!(up_occ > base);
        }
    }

    #[test]
    fn stch_gradient_matches_finite_differences() {
        let mut rng = RngState::new(47);
        for _ in 0..100 {
            let f = obj(rng.uniform(), rng.uniform());
            let w = rng.uniform_in(0.05, 0.95);
            let mu = 10f64.powf(rng.uniform_in(-2.0, 0.0));
            let cfg = ScalarizationConfig { w_mse: w, mu, z_star: [0.0, 0.0] };
            let grad = stch_gradient(&f, &cfg);
            let eps = 1e-7;
            let fd_mse = (stch_scalarize(&obj(f.mse + eps, f.occupancy), &cfg)
                - stch_scalarize(&obj(f.mse - eps, f.occupancy), &cfg))
                / (2.0 * eps);
            let fd_occ = (stch_scalarize(&obj(f.mse, f.occupancy + eps), &cfg)
                - stch_scalarize(&obj(f.mse, f.occupancy - eps), &cfg))
                / (2.0 * eps);
            assert!((grad[0] - fd_mse).abs() <= 1e-6, "{} vs {}", grad[0], fd_mse);
            assert!((grad[1] - fd_occ).abs() <= 1e-6, "{} vs {}", grad[1], fd_occ);
        }
    }

    #[test]
    fn composite_loss_edge_weights() {
        let cfg = ScalarizationConfig { w_mse: 1.0, mu: 0.1, z_star: [0.1, 0.2] };
        assert!((composite_loss(0.7, 0.9, &cfg) - (0.7 - 0.1)).abs() < 1e-15);
        let cfg = ScalarizationConfig { w_mse: 0.0, mu: 0.1, z_star: [0.1, 0.2] };
        assert!((composite_loss(0.7, 0.9, &cfg) - (0.9 - 0.2)).abs() < 1e-15);
        // Generic values delegate to the scalarization.
        let cfg = ScalarizationConfig { w_mse: 0.3, mu: 0.2, z_star: [0.0, 0.0] };
        let via = stch_scalarize(&obj(0.7, 0.9), &cfg);
        assert_eq!(composite_loss(0.7, 0.9, &cfg), via);
    }
}
