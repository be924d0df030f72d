//! Pareto-front exploration over the preference weight.
//!
//! A rank-1 intrinsic-coregionalization multi-task GP maps `w_mse` to both
//! objectives at once: a shared squared-exponential kernel on the weight,
//! a 2x2 task covariance `B = v v^T + diag(d)`, and per-task noise.
//! Hyperparameters are fit by minimizing the negative log marginal
//! likelihood with gradient descent in log space under a backtracking line
//! search, so the NMLL trace is non-increasing. Acquisition picks the grid
//! point with the largest standardized posterior-variance sum; dominance
//! filtering reduces sampled outcomes to the non-dominated front.

use serde::{Deserialize, Serialize};

use crate::objectives::ObjectiveVector;
use crate::{Error, Result};

/// One completed training run: preference weight in, objectives out.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParetoRecord {
    pub w_mse: f64,
    pub objectives: ObjectiveVector,
    pub run_id: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct GpHyperParams {
    pub lengthscale: f64,
    /// Rank-1 task-coupling vector.
    pub v: [f64; 2],
    /// Per-task diagonal boost of the task covariance.
    pub d: [f64; 2],
    /// Per-task noise variance.
    pub noise: [f64; 2],
}

impl Default for GpHyperParams {
    fn default() -> Self {
        GpHyperParams {
            lengthscale: 0.2,
            v: [0.7, 0.7],
            d: [0.3, 0.3],
            noise: [1e-2, 1e-2],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GpFitOptions {
    pub iterations: usize,
    pub lr: f64,
    /// Drop the cross-task coupling (ablation): `B` becomes diagonal.
    pub independent: bool,
    /// Fit `log(mse)` instead of raw MSE for task 0; predictions for that
    /// task then live in log space.
    pub log_mse: bool,
    pub jitter: f64,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        GpFitOptions {
            iterations: 500,
            lr: 0.05,
            independent: false,
            log_mse: false,
            jitter: 1e-6,
        }
    }
}

/// Multi-task GP posterior over `(mse, occupancy)` as a function of the
/// preference weight. Targets are standardized per task before fitting.
#[derive(Debug, Clone)]
pub struct MultiTaskGP {
    inputs: Vec<f64>,
    mean: [f64; 2],
    std: [f64; 2],
    hp: GpHyperParams,
    opts: GpFitOptions,
    chol: Matrix,
    alpha: Vec<f64>,
    /// NMLL value per accepted optimizer iterate (non-increasing).
    pub nmll_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Matrix {
    n: usize,
    a: Vec<f64>,
}

impl Matrix {
    fn zeros(n: usize) -> Self {
        Matrix { n, a: vec![0.0; n * n] }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    /// In-place lower Cholesky; fails on a non-positive pivot.
    fn cholesky(mut self) -> Option<Matrix> {
        let n = self.n;
        for j in 0..n {
            let mut diag = self.at(j, j);
            for k in 0..j {
                diag -= self.at(j, k) * self.at(j, k);
            }
            if diag <= 0.0 || !diag.is_finite() {
                return None;
            }
            let diag = diag.sqrt();
            self.set(j, j, diag);
            for i in (j + 1)..n {
                let mut v = self.at(i, j);
                for k in 0..j {
                    v -= self.at(i, k) * self.at(j, k);
                }
                self.set(i, j, v / diag);
            }
            for i in 0..j {
                self.set(i, j, 0.0);
            }
        }
        Some(self)
    }

    /// Solve `L x = b`.
    fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut v = x[i];
            for k in 0..i {
                v -= self.at(i, k) * x[k];
            }
            x[i] = v / self.at(i, i);
        }
        x
    }

    /// Solve `L^T x = b`.
    fn solve_lower_t(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in (i + 1)..n {
                v -= self.at(k, i) * x[k];
            }
            x[i] = v / self.at(i, i);
        }
        x
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_lower_t(&self.solve_lower(b))
    }
}

fn se_kernel(a: f64, b: f64, lengthscale: f64) -> f64 {
    let r = a - b;
    (-r * r / (2.0 * lengthscale * lengthscale)).exp()
}

fn task_cov(hp: &GpHyperParams, independent: bool) -> [[f64; 2]; 2] {
    let mut b = [[0.0; 2]; 2];
    for s in 0..2 {
        for t in 0..2 {
            b[s][t] = if independent && s != t {
                0.0
            } else {
                hp.v[s] * hp.v[t]
            };
        }
        b[s][s] += hp.d[s];
    }
    b
}

fn kernel_matrix(inputs: &[f64], hp: &GpHyperParams, opts: &GpFitOptions, jitter: f64) -> Matrix {
    let n = inputs.len();
    let b = task_cov(hp, opts.independent);
    let mut k = Matrix::zeros(2 * n);
    for s in 0..2 {
        for t in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    let v = b[s][t] * se_kernel(inputs[i], inputs[j], hp.lengthscale);
                    k.set(s * n + i, t * n + j, v);
                }
            }
        }
    }
    for s in 0..2 {
        for i in 0..n {
            let idx = s * n + i;
            let v = k.at(idx, idx) + hp.noise[s] + jitter;
            k.set(idx, idx, v);
        }
    }
    k
}

/// log-space parameter vector: [log l, v0, v1, log d0, log d1, log n0, log n1].
fn hp_to_vec(hp: &GpHyperParams) -> [f64; 7] {
    [
        hp.lengthscale.ln(),
        hp.v[0],
        hp.v[1],
        hp.d[0].ln(),
        hp.d[1].ln(),
        hp.noise[0].ln(),
        hp.noise[1].ln(),
    ]
}

fn vec_to_hp(x: &[f64; 7]) -> GpHyperParams {
    GpHyperParams {
        lengthscale: x[0].exp(),
        v: [x[1], x[2]],
        d: [x[3].exp(), x[4].exp()],
        noise: [x[5].exp(), x[6].exp()],
    }
}

struct NmllEval {
    value: f64,
    chol: Matrix,
    alpha: Vec<f64>,
}

fn nmll(
    inputs: &[f64],
    y: &[f64],
    hp: &GpHyperParams,
    opts: &GpFitOptions,
) -> Result<NmllEval> {
    let mut jitter = opts.jitter;
    loop {
        let k = kernel_matrix(inputs, hp, opts, jitter);
        if let Some(chol) = k.cholesky() {
            let alpha = chol.solve(y);
            let data_fit: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
            let log_det: f64 = (0..chol.n).map(|i| chol.at(i, i).ln()).sum();
            let n = y.len() as f64;
            let value = 0.5 * data_fit + log_det + 0.5 * n * (std::f64::consts::TAU).ln();
            return Ok(NmllEval { value, chol, alpha });
        }
        jitter *= 10.0;
        if jitter > 1e-2 {
            return Err(Error::numeric(
                "kernel matrix not positive definite after jitter escalation".to_string(),
            ));
        }
    }
}

/// Analytic NMLL gradient in the log-space parameter vector via
/// `0.5 tr((K^-1 - alpha alpha^T) dK/dphi)`.
fn nmll_grad(
    inputs: &[f64],
    eval: &NmllEval,
    hp: &GpHyperParams,
    opts: &GpFitOptions,
) -> [f64; 7] {
    let n = inputs.len();
    let total = 2 * n;
    // K^-1 from the factorization, column by column.
    let mut kinv = Matrix::zeros(total);
    for j in 0..total {
        let mut e = vec![0.0; total];
        e[j] = 1.0;
        let col = eval.chol.solve(&e);
        for i in 0..total {
            kinv.set(i, j, col[i]);
        }
    }
    // A = K^-1 - alpha alpha^T; grad_phi = 0.5 sum(A o dK/dphi).
    let mut a = kinv;
    for i in 0..total {
        for j in 0..total {
            let v = a.at(i, j) - eval.alpha[i] * eval.alpha[j];
            a.set(i, j, v);
        }
    }
    let b = task_cov(hp, opts.independent);
    let l2 = hp.lengthscale * hp.lengthscale;
    let mut grad = [0.0; 7];
    for s in 0..2 {
        for t in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    let aij = a.at(s * n + i, t * n + j);
                    if aij == 0.0 {
                        continue;
                    }
                    let k = se_kernel(inputs[i], inputs[j], hp.lengthscale);
                    let r = inputs[i] - inputs[j];
                    // d/d log l
                    grad[0] += 0.5 * aij * b[s][t] * k * (r * r / l2);
                    // d/d v_a: dB[s][t]/dv_a = delta(s=a) v_t + delta(t=a) v_s
                    if !opts.independent || s == t {
                        for va in 0..2 {
                            let mut db = 0.0;
                            if s == va {
                                db += hp.v[t];
                            }
                            if t == va {
                                db += hp.v[s];
                            }
                            if opts.independent && s != t {
                                db = 0.0;
                            }
                            grad[1 + va] += 0.5 * aij * db * k;
                        }
                    }
                    // d/d log d_a (diagonal of B only)
                    if s == t {
                        grad[3 + s] += 0.5 * aij * hp.d[s] * k;
                    }
                }
            }
        }
    }
    // Noise terms: diagonal per task.
    for s in 0..2 {
        for i in 0..n {
            grad[5 + s] += 0.5 * a.at(s * n + i, s * n + i) * hp.noise[s];
        }
    }
    grad
}

impl MultiTaskGP {
    /// Fit hyperparameters to the records by NMLL descent (backtracking
    /// line search keeps the trace monotone). Needs at least 3 records.
    pub fn fit(records: &[ParetoRecord], opts: GpFitOptions) -> Result<Self> {
        if records.len() < 3 {
            return Err(Error::data(format!(
                "GP fit needs >= 3 records, got {}",
                records.len()
            )));
        }
        let inputs: Vec<f64> = records.iter().map(|r| r.w_mse).collect();
        let raw: Vec<[f64; 2]> = records
            .iter()
            .map(|r| {
                let m = if opts.log_mse {
                    r.objectives.mse.max(1e-300).ln()
                } else {
                    r.objectives.mse
                };
                [m, r.objectives.occupancy]
            })
            .collect();
        Self::fit_raw(inputs, raw, GpHyperParams::default(), opts, true)
    }

    /// Build a GP with fixed hyperparameters (no optimization); used by
    /// tests and the interpolation checks.
    pub fn with_hyperparams(
        inputs: Vec<f64>,
        targets: Vec<[f64; 2]>,
        hp: GpHyperParams,
        opts: GpFitOptions,
    ) -> Result<Self> {
        Self::fit_raw(inputs, targets, hp, opts, false)
    }

    fn fit_raw(
        inputs: Vec<f64>,
        raw: Vec<[f64; 2]>,
        init: GpHyperParams,
        opts: GpFitOptions,
        optimize: bool,
    ) -> Result<Self> {
        let n = inputs.len();
        if n == 0 || raw.len() != n {
            return Err(Error::data("GP inputs/targets mismatch".to_string()));
        }
        // Standardize per task.
        let mut mean = [0.0; 2];
        let mut std = [1.0; 2];
        for t in 0..2 {
            let m = raw.iter().map(|r| r[t]).sum::<f64>() / n as f64;
            let var = raw.iter().map(|r| (r[t] - m) * (r[t] - m)).sum::<f64>() / n as f64;
            mean[t] = m;
            std[t] = if var.sqrt() > 1e-9 { var.sqrt() } else { 1.0 };
        }
        let mut y = vec![0.0; 2 * n];
        for t in 0..2 {
            for i in 0..n {
                y[t * n + i] = (raw[i][t] - mean[t]) / std[t];
            }
        }

        let mut x = hp_to_vec(&init);
        let mut hp = init;
        let mut eval = nmll(&inputs, &y, &hp, &opts)?;
        let mut trace = vec![eval.value];
        if optimize {
            for _ in 0..opts.iterations {
                let grad = nmll_grad(&inputs, &eval, &hp, &opts);
                let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
                if gnorm2.sqrt() < 1e-10 {
                    break;
                }
                let mut step = opts.lr;
                let mut accepted = false;
                for _ in 0..30 {
                    let mut cand = x;
                    for (c, g) in cand.iter_mut().zip(&grad) {
                        *c -= step * g;
                    }
                    let cand_hp = vec_to_hp(&cand);
                    match nmll(&inputs, &y, &cand_hp, &opts) {
                        Ok(cand_eval)
                            if cand_eval.value <= eval.value - 1e-4 * step * gnorm2 + 1e-8 =>
                        {
                            x = cand;
                            hp = cand_hp;
                            eval = cand_eval;
                            accepted = true;
                            break;
                        }
                        _ => step *= 0.5,
                    }
                }
                if !accepted {
                    break;
                }
                trace.push(eval.value);
            }
        }
        Ok(MultiTaskGP {
            inputs,
            mean,
            std,
            hp,
            opts,
            chol: eval.chol,
            alpha: eval.alpha,
            nmll_trace: trace,
        })
    }

    pub fn hyperparams(&self) -> &GpHyperParams {
        &self.hp
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    fn cross_covariance(&self, w: f64, task: usize) -> Vec<f64> {
        let n = self.inputs.len();
        let b = task_cov(&self.hp, self.opts.independent);
        let mut k = vec![0.0; 2 * n];
        for t in 0..2 {
            for i in 0..n {
                k[t * n + i] = b[task][t] * se_kernel(w, self.inputs[i], self.hp.lengthscale);
            }
        }
        k
    }

    /// Posterior (mean, variance) per task in standardized space.
    pub fn predict_standardized(&self, w: f64) -> [(f64, f64); 2] {
        let b = task_cov(&self.hp, self.opts.independent);
        std::array::from_fn(|task| {
            let ks = self.cross_covariance(w, task);
            let mean: f64 = ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
            let v = self.chol.solve_lower(&ks);
            let reduction: f64 = v.iter().map(|x| x * x).sum();
            let var = (b[task][task] - reduction).max(0.0);
            (mean, var)
        })
    }

    /// Posterior (mean, variance) per task on the original objective scales.
    pub fn predict(&self, w: f64) -> [(f64, f64); 2] {
        let std_pred = self.predict_standardized(w);
        std::array::from_fn(|t| {
            let (m, v) = std_pred[t];
            (self.mean[t] + self.std[t] * m, self.std[t] * self.std[t] * v)
        })
    }
}

/// Pick the unsampled grid point maximizing the standardized posterior
/// variance sum; ties break toward the smaller weight. Grid points within
/// 1e-3 of an already-sampled input are excluded.
pub fn acquire_next(gp: &MultiTaskGP, grid: &[f64]) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &w in grid {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::data(format!("grid point {w} outside [0, 1]")));
        }
        if gp.inputs().iter().any(|&x| (x - w).abs() < 1e-3) {
            continue;
        }
        let pred = gp.predict_standardized(w);
        let score = pred[0].1 + pred[1].1;
        let better = match best {
            None => true,
            Some((_, s)) => score > s,
        };
        if better {
            best = Some((w, score));
        }
    }
    best.map(|(w, _)| w).ok_or_else(|| {
        Error::data("no unsampled candidate grid points remain".to_string())
    })
}

/// Uniform acquisition grid of `points` values on [0, 1].
pub fn uniform_grid(points: usize) -> Vec<f64> {
    assert!(points >= 2, "a grid needs at least two points");
    (0..points)
        .map(|i| i as f64 / (points - 1) as f64)
        .collect()
}

/// Result of an exploration run: every sampled record, the final surrogate,
/// and any training failures that were skipped.
pub struct ExploreOutcome {
    pub records: Vec<ParetoRecord>,
    pub gp: MultiTaskGP,
    pub failures: Vec<(f64, String)>,
}

/// Initialize with one training run per starting weight, then alternate
/// acquisition and training for `iterations` rounds, refitting after each.
pub fn explore(
    trainer: &mut dyn FnMut(f64) -> Result<ObjectiveVector>,
    init_weights: &[f64],
    iterations: usize,
    grid: &[f64],
    opts: GpFitOptions,
) -> Result<ExploreOutcome> {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut run = |w: f64, records: &mut Vec<ParetoRecord>, failures: &mut Vec<(f64, String)>| {
        match trainer(w) {
            Ok(objectives) => records.push(ParetoRecord {
                w_mse: w,
                objectives,
                run_id: format!("run-{:04}", records.len()),
                seed: 0,
            }),
            Err(e) => failures.push((w, e.to_string())),
        }
    };
    for &w in init_weights {
        run(w, &mut records, &mut failures);
    }
    let mut gp = MultiTaskGP::fit(&records, opts)?;
    for _ in 0..iterations {
        let w_next = acquire_next(&gp, grid)?;
        run(w_next, &mut records, &mut failures);
        gp = MultiTaskGP::fit(&records, opts)?;
    }
    Ok(ExploreOutcome { records, gp, failures })
}

/// Default initialization weights for the explorer.
pub const DEFAULT_INIT_WEIGHTS: [f64; 6] = [0.10, 0.25, 0.50, 0.75, 0.90, 1.00];

/// `a` dominates `b` when it is no worse in both objectives and strictly
/// better in at least one (minimization).
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    a.mse <= b.mse
        && a.occupancy <= b.occupancy
        && (a.mse < b.mse || a.occupancy < b.occupancy)
}

/// Dominated flag per point (minimization in both coordinates), via a
/// sort-and-sweep over the first objective.
pub fn dominance_flags(points: &[ObjectiveVector]) -> Vec<bool> {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .mse
            .partial_cmp(&points[b].mse)
            .unwrap()
            .then(points[a].occupancy.partial_cmp(&points[b].occupancy).unwrap())
    });
    let mut flags = vec![false; n];
    let mut min_occ_before = f64::INFINITY; // over strictly smaller mse
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && points[order[j + 1]].mse == points[order[i]].mse {
            j += 1;
        }
        let group_min_occ = order[i..=j]
            .iter()
            .map(|&idx| points[idx].occupancy)
            .fold(f64::INFINITY, f64::min);
        for &idx in &order[i..=j] {
            let occ = points[idx].occupancy;
            flags[idx] = min_occ_before <= occ || group_min_occ < occ;
        }
        min_occ_before = min_occ_before.min(group_min_occ);
        i = j + 1;
    }
    flags
}

/// The non-dominated subset, preserving input order.
pub fn dominance_filter(points: &[ObjectiveVector]) -> Vec<ObjectiveVector> {
    dominance_flags(points)
        .into_iter()
        .zip(points)
        .filter_map(|(dominated, p)| (!dominated).then_some(*p))
        .collect()
}
