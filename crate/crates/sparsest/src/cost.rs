//! Closed-form FLOP accounting for the recurrent units.
//!
//! Conventions: one multiply-accumulate counts as one FLOP (costs are
//! "MAC-convention FLOPs"); activation functions are excluded. A dense unit
//! runs four gate convolutions over both the input and hidden streams plus
//! elementwise state updates; the sparse unit replaces the gate convolutions
//! with delta convolutions whose cost scales with the active-site count `D`
//! instead of `H*W`.

use serde::Serialize;

/// Gate-update cost of a dense unit: `4 * H*W * K^2 * C_out * (C_in + C_out)`.
pub fn flops_dense_gates(h: usize, w: usize, k: usize, c_in: usize, c_out: usize) -> u64 {
    4 * (h * w) as u64 * (k * k) as u64 * c_out as u64 * (c_in + c_out) as u64
}

/// State-update cost of a unit: `4 * H*W * C_out` (three elementwise
/// multiplies plus one add per hidden element).
pub fn flops_state_updates(h: usize, w: usize, c_out: usize) -> u64 {
    4 * (h * w) as u64 * c_out as u64
}

/// Total dense-unit cost: `4 * H*W * C_out * [K^2 (C_out + C_in) + 1]`.
pub fn flops_dense_unit(h: usize, w: usize, k: usize, c_in: usize, c_out: usize) -> u64 {
    flops_dense_gates(h, w, k, c_in, c_out) + flops_state_updates(h, w, c_out)
}

/// Sparse-unit cost with a single mean active count `D` shared by both
/// delta streams: `4 * C_out * [D K^2 (C_out + C_in) + H*W]`.
///
/// `d` is the per-step mean active-site count over both delta tensors.
/// Exact when the streams have equal channel counts; see
/// [`flops_sparse_unit_streams`] for the general per-stream form.
pub fn flops_sparse_unit(h: usize, w: usize, k: usize, c_in: usize, c_out: usize, d: u64) -> u64 {
    assert!(d <= (h * w) as u64, "active count D exceeds H*W");
    4 * c_out as u64 * (d * (k * k) as u64 * (c_in + c_out) as u64 + (h * w) as u64)
}

/// Same closed form over a fractional (measured-mean) `D`.
pub fn flops_sparse_unit_mean(
    h: usize,
    w: usize,
    k: usize,
    c_in: usize,
    c_out: usize,
    d: f64,
) -> f64 {
    4.0 * c_out as f64 * (d * (k * k) as f64 * (c_in + c_out) as f64 + (h * w) as f64)
}

/// Exact sparse-unit cost with separate active counts for the input-delta
/// stream (convolved at `C_in -> C_out`) and the hidden-delta stream
/// (`C_out -> C_out`):
/// `4 * K^2 * C_out * (D_x C_in + D_h C_out) + 4 * H*W * C_out`.
pub fn flops_sparse_unit_streams(
    h: usize,
    w: usize,
    k: usize,
    c_in: usize,
    c_out: usize,
    d_x: f64,
    d_h: f64,
) -> f64 {
    4.0 * (k * k) as f64 * c_out as f64 * (d_x * c_in as f64 + d_h * c_out as f64)
        + flops_state_updates(h, w, c_out) as f64
}

/// Exact acceleration ratio `(flop_dense - flop_sparse) / flop_dense`.
pub fn acceleration_ratio(flop_dense: f64, flop_sparse: f64) -> f64 {
    assert!(flop_dense > 0.0);
    (flop_dense - flop_sparse) / flop_dense
}

/// First-order approximation of the acceleration ratio: one minus the mean
/// active-site fraction.
pub fn acceleration_ratio_approx(d: f64, h: usize, w: usize) -> f64 {
    1.0 - d / (h * w) as f64
}

/// The relative gap term between the exact and approximate ratios:
/// `epsilon = 1 / (K^2 (C_in + C_out))`. The exact ratio equals
/// `(HW - D) / (HW (1 + epsilon))`, so the absolute gap is bounded by
/// `epsilon / (1 + epsilon)`.
pub fn ar_epsilon(k: usize, c_in: usize, c_out: usize) -> f64 {
    1.0 / ((k * k) as f64 * (c_in + c_out) as f64)
}

/// Reporting convention for a unit's acceleration ratio from measured delta
/// sparsities (inactive-site fractions): the plain average of the two
/// streams. Sparsities of 60% and 40% report as 50%.
pub fn reported_ar_from_sparsities(sparsity_x: f64, sparsity_h: f64) -> f64 {
    0.5 * (sparsity_x + sparsity_h)
}

/// Cost summary for one recurrent unit over an evaluation pass.
#[derive(Debug, Clone, Serialize)]
pub struct UnitCostReport {
    pub unit: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_size: usize,
    pub c_in: usize,
    pub c_out: usize,
    /// Mean active-site count of the input-delta stream per step.
    pub d_x: f64,
    /// Mean active-site count of the hidden-delta stream per step.
    pub d_h: f64,
    pub flop_dense: u64,
    /// Exact per-stream sparse cost.
    pub flop_sparse: f64,
    /// Single-D closed form evaluated at `D = (d_x + d_h)/2`.
    pub flop_sparse_single_d: f64,
    /// Exact ratio; `None` for dense units (reported as not applicable).
    pub ar: Option<f64>,
    /// `1 - D/HW` convention (mean of stream sparsities).
    pub ar_approx: Option<f64>,
}

impl UnitCostReport {
    #[allow(clippy::too_many_arguments)]
    pub fn for_sparse_unit(
        unit: usize,
        h: usize,
        w: usize,
        k: usize,
        c_in: usize,
        c_out: usize,
        d_x: f64,
        d_h: f64,
    ) -> Self {
        let flop_dense = flops_dense_unit(h, w, k, c_in, c_out);
        let flop_sparse = flops_sparse_unit_streams(h, w, k, c_in, c_out, d_x, d_h);
        let d_mean = 0.5 * (d_x + d_h);
        let hw = (h * w) as f64;
        UnitCostReport {
            unit,
            height: h,
            width: w,
            kernel_size: k,
            c_in,
            c_out,
            d_x,
            d_h,
            flop_dense,
            flop_sparse,
            flop_sparse_single_d: flops_sparse_unit_mean(h, w, k, c_in, c_out, d_mean),
            ar: Some(acceleration_ratio(flop_dense as f64, flop_sparse)),
            ar_approx: Some(reported_ar_from_sparsities(
                1.0 - d_x / hw,
                1.0 - d_h / hw,
            )),
        }
    }

    pub fn for_dense_unit(
        unit: usize,
        h: usize,
        w: usize,
        k: usize,
        c_in: usize,
        c_out: usize,
    ) -> Self {
        let flop_dense = flops_dense_unit(h, w, k, c_in, c_out);
        UnitCostReport {
            unit,
            height: h,
            width: w,
            kernel_size: k,
            c_in,
            c_out,
            d_x: (h * w) as f64,
            d_h: (h * w) as f64,
            flop_dense,
            flop_sparse: flop_dense as f64,
            flop_sparse_single_d: flop_dense as f64,
            ar: None,
            ar_approx: None,
        }
    }
}

/// Model-level aggregation: mean of per-unit ARs plus summed FLOPs.
#[derive(Debug, Clone, Serialize)]
pub struct ModelCostReport {
    pub units: Vec<UnitCostReport>,
    pub flop_dense_total: u64,
    pub flop_sparse_total: f64,
    /// Mean of per-unit exact ARs; `None` when the model is dense.
    pub ar_mean: Option<f64>,
    pub ar_approx_mean: Option<f64>,
}

impl ModelCostReport {
    pub fn from_units(units: Vec<UnitCostReport>) -> Self {
        let flop_dense_total = units.iter().map(|u| u.flop_dense).sum();
        let flop_sparse_total = units.iter().map(|u| u.flop_sparse).sum();
        let ars: Vec<f64> = units.iter().filter_map(|u| u.ar).collect();
        let approx: Vec<f64> = units.iter().filter_map(|u| u.ar_approx).collect();
        let mean = |xs: &[f64]| {
            if xs.is_empty() {
                None
            } else {
                Some(xs.iter().sum::<f64>() / xs.len() as f64)
            }
        };
        ModelCostReport {
            flop_dense_total,
            flop_sparse_total,
            ar_mean: mean(&ars),
            ar_approx_mean: mean(&approx),
            units,
        }
    }
}
