//! 2D convolution: a dense reference path and a zero-skipping sparse path.
//!
//! Both use stride 1 and same-size zero padding with an odd kernel, the only
//! configuration the recurrent cells need. The sparse path gathers active
//! input sites and scatters each site's K*K weighted contributions into a
//! coordinate-ordered accumulator grid; exact-zero output columns are
//! dropped during canonicalization. Every multiply the sparse path performs
//! is counted, and the count equals the closed form
//! `N * K^2 * C_in * C_out` because border contributions are computed before
//! the bounds check discards them, exactly as a batched implementation would.

use crate::tensor::{DenseTensor, SparseTensor2D};
use crate::{Error, Result};

/// Convolution weights shaped `(C_out, C_in, K, K)`, row-major.
///
/// No bias by default; an optional per-output-channel bias exists for the
/// dense path only (a bias term would activate every site of a sparse
/// output, contradicting the sparse representation).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    c_out: usize,
    c_in: usize,
    k: usize,
    weights: Vec<f64>,
    bias: Option<Vec<f64>>,
}

impl ConvKernel {
    pub fn new(c_out: usize, c_in: usize, k: usize, weights: Vec<f64>) -> Result<Self> {
        if k == 0 || k.is_multiple_of(2) {
            return Err(Error::shape(format!("kernel size {k} must be odd and >= 1")));
        }
        if weights.len() != c_out * c_in * k * k {
            return Err(Error::shape(format!(
                "weight buffer has {} elements, kernel {}x{}x{}x{} requires {}",
                weights.len(),
                c_out,
                c_in,
                k,
                k,
                c_out * c_in * k * k
            )));
        }
        if !weights.iter().all(|w| w.is_finite()) {
            return Err(Error::numeric("kernel weights must be finite".to_string()));
        }
        Ok(ConvKernel { c_out, c_in, k, weights, bias: None })
    }

    pub fn zeros(c_out: usize, c_in: usize, k: usize) -> Self {
        ConvKernel::new(c_out, c_in, k, vec![0.0; c_out * c_in * k * k]).unwrap()
    }

    pub fn with_bias(mut self, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != self.c_out {
            return Err(Error::shape(format!(
                "bias has {} entries, expected {}",
                bias.len(),
                self.c_out
            )));
        }
        self.bias = Some(bias);
        Ok(self)
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn radius(&self) -> usize {
        self.k / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    #[inline]
    pub fn at(&self, co: usize, ci: usize, ki: usize, kj: usize) -> f64 {
        self.weights[((co * self.c_in + ci) * self.k + ki) * self.k + kj]
    }
}

/// Naive dense convolution oracle: same zero padding, stride 1.
pub fn dense_conv2d(x: &DenseTensor, kernel: &ConvKernel) -> Result<DenseTensor> {
    let (c_in, height, width) = x.dims();
    if c_in != kernel.c_in {
        return Err(Error::shape(format!(
            "input has {} channels, kernel expects {}",
            c_in, kernel.c_in
        )));
    }
    let r = kernel.radius() as isize;
    let k = kernel.k;
    let mut out = DenseTensor::zeros(kernel.c_out, height, width);
    for co in 0..kernel.c_out {
        let out_plane = out.channel_mut(co);
        for ci in 0..c_in {
            let in_plane = x.channel(ci);
            for ki in 0..k {
                let di = ki as isize - r;
                for kj in 0..k {
                    let dj = kj as isize - r;
                    let w = kernel.at(co, ci, ki, kj);
                    if w == 0.0 {
                        continue;
                    }
                    // y[u, v] += w * x[u + di, v + dj] over the valid window.
                    let u_lo = (-di).max(0) as usize;
                    let u_hi = (height as isize - di).clamp(0, height as isize) as usize;
                    let v_lo = (-dj).max(0) as usize;
                    let v_hi = (width as isize - dj).clamp(0, width as isize) as usize;
                    if v_lo >= v_hi {
                        continue;
                    }
                    for u in u_lo..u_hi {
                        let iu = (u as isize + di) as usize;
                        let dst = &mut out_plane[u * width + v_lo..u * width + v_hi];
                        let src_start = iu * width + (v_lo as isize + dj) as usize;
                        let src = &in_plane[src_start..src_start + (v_hi - v_lo)];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += w * s;
                        }
                    }
                }
            }
        }
        if let Some(bias) = &kernel.bias {
            for v in out_plane.iter_mut() {
                *v += bias[co];
            }
        }
    }
    Ok(out)
}

/// Zero-skipping sparse convolution with the result left dense (untouched
/// sites are exact zeros) plus the number of multiplies performed.
///
/// Iterates active input sites, forms each site's K*K per-offset
/// contributions (`C_in * C_out` multiplies each), and scatters the
/// in-bounds ones into an accumulator ordered by output coordinate. The
/// result equals [`dense_conv2d`] of the densified input.
pub fn sparse_conv2d_dense_out(
    x: &SparseTensor2D,
    kernel: &ConvKernel,
) -> Result<(DenseTensor, u64)> {
    let (c_in, height, width) = x.dims();
    if c_in != kernel.c_in {
        return Err(Error::shape(format!(
            "input has {} channels, kernel expects {}",
            c_in, kernel.c_in
        )));
    }
    if kernel.bias.is_some() {
        return Err(Error::shape(
            "sparse convolution does not support bias terms".to_string(),
        ));
    }
    let k = kernel.k;
    let r = kernel.radius() as isize;
    let c_out = kernel.c_out;
    let hw = height * width;
    // Regroup weights offset-major so each site's per-offset product runs
    // over a contiguous (C_out x C_in) block.
    let mut w_off = vec![0.0; k * k * c_out * c_in];
    for co in 0..c_out {
        for ci in 0..c_in {
            for ki in 0..k {
                for kj in 0..k {
                    w_off[((ki * k + kj) * c_out + co) * c_in + ci] =
                        kernel.at(co, ci, ki, kj);
                }
            }
        }
    }
    let mut acc = DenseTensor::zeros(c_out, height, width);
    let mut macs = 0u64;
    let mut contribution = vec![0.0; c_out];
    for ((h, w), col) in x.iter() {
        for ki in 0..k {
            let u = h as isize + r - ki as isize;
            for kj in 0..k {
                let v = w as isize + r - kj as isize;
                let block = &w_off[(ki * k + kj) * c_out * c_in..(ki * k + kj + 1) * c_out * c_in];
                for (co, out_c) in contribution.iter_mut().enumerate() {
                    let row = &block[co * c_in..(co + 1) * c_in];
                    let mut s = 0.0;
                    for (wv, &f) in row.iter().zip(col) {
                        s += wv * f;
                    }
                    *out_c = s;
                }
                macs += (c_in * c_out) as u64;
                if u >= 0 && u < height as isize && v >= 0 && v < width as isize {
                    let site = u as usize * width + v as usize;
                    let out = acc.values_mut();
                    for (co, &c) in contribution.iter().enumerate() {
                        out[co * hw + site] += c;
                    }
                }
            }
        }
    }
    Ok((acc, macs))
}

/// [`sparse_conv2d_dense_out`] canonicalized to sparse form (exact-zero
/// output columns dropped).
pub fn sparse_conv2d_instrumented(
    x: &SparseTensor2D,
    kernel: &ConvKernel,
) -> Result<(SparseTensor2D, u64)> {
    let (dense, macs) = sparse_conv2d_dense_out(x, kernel)?;
    Ok((crate::tensor::to_sparse(&dense, 0.0), macs))
}

pub fn sparse_conv2d(x: &SparseTensor2D, kernel: &ConvKernel) -> Result<SparseTensor2D> {
    sparse_conv2d_instrumented(x, kernel).map(|(out, _)| out)
}

/// Closed-form multiply count of the sparse convolution:
/// `N * K^2 * C_in * C_out` with `N` the active-site count.
pub fn count_macs_sparse(x: &SparseTensor2D, kernel: &ConvKernel) -> u64 {
    x.active_sites() as u64 * (kernel.k * kernel.k * kernel.c_in * kernel.c_out) as u64
}

/// Gradient of a convolution output w.r.t. its input.
///
/// `grad_x[ci, a, b] = sum over (co, ki, kj) of w[co, ci, ki, kj] *
/// grad_y[co, a - ki + r, b - kj + r]` (in-bounds terms only).
pub fn conv2d_grad_input(grad_y: &DenseTensor, kernel: &ConvKernel) -> Result<DenseTensor> {
    let (c_out, height, width) = grad_y.dims();
    if c_out != kernel.c_out {
        return Err(Error::shape(format!(
            "grad has {} channels, kernel produces {}",
            c_out, kernel.c_out
        )));
    }
    let k = kernel.k;
    let r = kernel.radius() as isize;
    let mut out = DenseTensor::zeros(kernel.c_in, height, width);
    for ci in 0..kernel.c_in {
        let out_plane = out.channel_mut(ci);
        for co in 0..c_out {
            let gy_plane = grad_y.channel(co);
            for ki in 0..k {
                let di = r - ki as isize; // grad_y row offset relative to input row
                for kj in 0..k {
                    let dj = r - kj as isize;
                    let w = kernel.at(co, ci, ki, kj);
                    if w == 0.0 {
                        continue;
                    }
                    let a_lo = (-di).max(0) as usize;
                    let a_hi = (height as isize - di).clamp(0, height as isize) as usize;
                    let b_lo = (-dj).max(0) as usize;
                    let b_hi = (width as isize - dj).clamp(0, width as isize) as usize;
                    if b_lo >= b_hi {
                        continue;
                    }
                    for a in a_lo..a_hi {
                        let gu = (a as isize + di) as usize;
                        let dst = &mut out_plane[a * width + b_lo..a * width + b_hi];
                        let src_start = gu * width + (b_lo as isize + dj) as usize;
                        let src = &gy_plane[src_start..src_start + (b_hi - b_lo)];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += w * s;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of a convolution output w.r.t. the kernel weights, laid out
/// exactly like [`ConvKernel::weights`].
pub fn conv2d_grad_weights(
    x: &DenseTensor,
    grad_y: &DenseTensor,
    k: usize,
) -> Result<Vec<f64>> {
    let (c_in, height, width) = x.dims();
    let (c_out, gh, gw) = grad_y.dims();
    if (gh, gw) != (height, width) {
        return Err(Error::shape("input/grad spatial dims differ".to_string()));
    }
    let r = (k / 2) as isize;
    let mut grad_w = vec![0.0; c_out * c_in * k * k];
    for co in 0..c_out {
        let gy_plane = grad_y.channel(co);
        for ci in 0..c_in {
            let x_plane = x.channel(ci);
            for ki in 0..k {
                let di = ki as isize - r;
                for kj in 0..k {
                    let dj = kj as isize - r;
                    let u_lo = (-di).max(0) as usize;
                    let u_hi = (height as isize - di).clamp(0, height as isize) as usize;
                    let v_lo = (-dj).max(0) as usize;
                    let v_hi = (width as isize - dj).clamp(0, width as isize) as usize;
                    if v_lo >= v_hi {
                        continue;
                    }
                    let mut s = 0.0;
                    for u in u_lo..u_hi {
                        let iu = (u as isize + di) as usize;
                        let g = &gy_plane[u * width + v_lo..u * width + v_hi];
                        let src_start = iu * width + (v_lo as isize + dj) as usize;
                        let xs = &x_plane[src_start..src_start + (v_hi - v_lo)];
                        for (gv, xv) in g.iter().zip(xs) {
                            s += gv * xv;
                        }
                    }
                    grad_w[((co * c_in + ci) * k + ki) * k + kj] = s;
                }
            }
        }
    }
    Ok(grad_w)
}

/// Weight gradient restricted to a sparse input: sums only over the stored
/// active sites, equivalent to [`conv2d_grad_weights`] on the densified
/// input.
pub fn sparse_conv2d_grad_weights(
    x: &SparseTensor2D,
    grad_y: &DenseTensor,
    kernel_size: usize,
) -> Result<Vec<f64>> {
    let (c_in, height, width) = x.dims();
    let (c_out, gh, gw) = grad_y.dims();
    if (gh, gw) != (height, width) {
        return Err(Error::shape("input/grad spatial dims differ".to_string()));
    }
    let k = kernel_size;
    let r = (k / 2) as isize;
    let mut grad_w = vec![0.0; c_out * c_in * k * k];
    for ((h, w), col) in x.iter() {
        for ki in 0..k {
            let u = h as isize + r - ki as isize;
            if u < 0 || u >= height as isize {
                continue;
            }
            for kj in 0..k {
                let v = w as isize + r - kj as isize;
                if v < 0 || v >= width as isize {
                    continue;
                }
                for co in 0..c_out {
                    let g = grad_y.at(co, u as usize, v as usize);
                    if g == 0.0 {
                        continue;
                    }
                    for (ci, &f) in col.iter().enumerate() {
                        grad_w[((co * c_in + ci) * k + ki) * k + kj] += g * f;
                    }
                }
            }
        }
    }
    Ok(grad_w)
}

/// Input gradient evaluated only at the listed sites (dense elsewhere-zero
/// tensor). Used when downstream masking zeroes every other position anyway.
pub fn conv2d_grad_input_at_sites(
    grad_y: &DenseTensor,
    kernel: &ConvKernel,
    sites: &[(usize, usize)],
    c_in: usize,
) -> Result<DenseTensor> {
    let (c_out, height, width) = grad_y.dims();
    if c_out != kernel.c_out || c_in != kernel.c_in {
        return Err(Error::shape("channel mismatch in restricted grad".to_string()));
    }
    let k = kernel.k;
    let r = kernel.radius() as isize;
    let mut out = DenseTensor::zeros(c_in, height, width);
    for &(a, b) in sites {
        for ki in 0..k {
            let gu = a as isize + r - ki as isize;
            if gu < 0 || gu >= height as isize {
                continue;
            }
            for kj in 0..k {
                let gv = b as isize + r - kj as isize;
                if gv < 0 || gv >= width as isize {
                    continue;
                }
                for co in 0..c_out {
                    let g = grad_y.at(co, gu as usize, gv as usize);
                    if g == 0.0 {
                        continue;
                    }
                    for ci in 0..c_in {
                        *out.at_mut(ci, a, b) += kernel.at(co, ci, ki, kj) * g;
                    }
                }
            }
        }
    }
    Ok(out)
}
