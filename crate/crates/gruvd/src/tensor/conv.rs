//! 2-D convolution with zero padding.
//!
//! Forward and both backward kernels parallelize over *disjoint* output
//! slices (one `rayon` task per independent output plane), so results are
//! bit-identical regardless of thread count: no two tasks ever accumulate
//! into the same memory, and each task runs its reductions in a fixed
//! sequential order.

use rayon::prelude::*;

use super::{shape_string, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Shapes and strides of one convolution, validated once at the call site.
#[derive(Clone, Copy)]
struct Geometry {
    b: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    h_out: usize,
    w_out: usize,
}

fn geometry(
    x_shape: &[usize],
    w_shape: &[usize],
    b_shape: &[usize],
    stride: usize,
    pad: usize,
) -> Result<Geometry> {
    if x_shape.len() != 4 {
        return Err(Error::shape(
            "conv2d",
            "rank-4 input [B, C, H, W]",
            shape_string(x_shape),
        ));
    }
    if w_shape.len() != 4 || w_shape[2] != w_shape[3] {
        return Err(Error::shape(
            "conv2d",
            "square rank-4 weights [C_out, C_in, K, K]",
            shape_string(w_shape),
        ));
    }
    let k = w_shape[2];
    if k == 0 || k % 2 == 0 {
        return Err(Error::config(format!(
            "conv2d kernel size must be odd and positive, got {k}"
        )));
    }
    if stride == 0 {
        return Err(Error::config("conv2d stride must be positive"));
    }
    if w_shape[1] != x_shape[1] {
        return Err(Error::shape(
            "conv2d",
            format!("weights with C_in = {} to match input", x_shape[1]),
            shape_string(w_shape),
        ));
    }
    if b_shape != [w_shape[0]] {
        return Err(Error::shape(
            "conv2d",
            format!("bias [{}]", w_shape[0]),
            shape_string(b_shape),
        ));
    }
    let (h, w) = (x_shape[2], x_shape[3]);
    let padded_h = h + 2 * pad;
    let padded_w = w + 2 * pad;
    if padded_h < k || padded_w < k {
        return Err(Error::shape(
            "conv2d",
            format!("padded input at least {k}x{k}"),
            format!("{padded_h}x{padded_w}"),
        ));
    }
    Ok(Geometry {
        b: x_shape[0],
        c_in: x_shape[1],
        h,
        w,
        c_out: w_shape[0],
        k,
        stride,
        pad,
        h_out: (padded_h - k) / stride + 1,
        w_out: (padded_w - k) / stride + 1,
    })
}

/// The output columns for which tap `kx` reads a valid input column:
/// `0 <= ox*stride + kx - pad < w`.
#[inline]
fn valid_ox(g: &Geometry, kx: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kx).div_ceil(g.stride).min(g.w_out);
    let hi_excl = if g.w + g.pad > kx {
        ((g.w + g.pad - kx - 1) / g.stride + 1).min(g.w_out)
    } else {
        0
    };
    (lo, hi_excl.max(lo))
}

fn forward<S: Scalar>(x: &[S], wt: &[S], bias: &[S], g: &Geometry) -> Vec<S> {
    let out_plane = g.h_out * g.w_out;
    let in_plane = g.h * g.w;
    let mut out = vec![S::ZERO; g.b * g.c_out * out_plane];
    out.par_chunks_mut(out_plane).enumerate().for_each(|(idx, plane)| {
        let (bi, co) = (idx / g.c_out, idx % g.c_out);
        plane.fill(bias[co]);
        for ci in 0..g.c_in {
            let x_plane = &x[(bi * g.c_in + ci) * in_plane..][..in_plane];
            let w_base = (co * g.c_in + ci) * g.k * g.k;
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let wv = wt[w_base + ky * g.k + kx];
                    let (ox0, ox1) = valid_ox(g, kx);
                    if ox0 >= ox1 {
                        continue;
                    }
                    for oy in 0..g.h_out {
                        let iy = oy * g.stride + ky;
                        if iy < g.pad || iy >= g.h + g.pad {
                            continue;
                        }
                        let iy = iy - g.pad;
                        let orow = &mut plane[oy * g.w_out + ox0..oy * g.w_out + ox1];
                        if g.stride == 1 {
                            let ix0 = ox0 + kx - g.pad;
                            let xrow = &x_plane[iy * g.w + ix0..][..ox1 - ox0];
                            for (o, &xv) in orow.iter_mut().zip(xrow) {
                                *o += wv * xv;
                            }
                        } else {
                            for (j, o) in orow.iter_mut().enumerate() {
                                let ix = (ox0 + j) * g.stride + kx - g.pad;
                                *o += wv * x_plane[iy * g.w + ix];
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

/// Gradient w.r.t. the input: parallel over (batch, input channel) planes.
fn backward_input<S: Scalar>(gout: &[S], wt: &[S], g: &Geometry) -> Vec<S> {
    let out_plane = g.h_out * g.w_out;
    let in_plane = g.h * g.w;
    let mut gx = vec![S::ZERO; g.b * g.c_in * in_plane];
    gx.par_chunks_mut(in_plane).enumerate().for_each(|(idx, plane)| {
        let (bi, ci) = (idx / g.c_in, idx % g.c_in);
        for co in 0..g.c_out {
            let g_plane = &gout[(bi * g.c_out + co) * out_plane..][..out_plane];
            let w_base = (co * g.c_in + ci) * g.k * g.k;
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let wv = wt[w_base + ky * g.k + kx];
                    let (ox0, ox1) = valid_ox(g, kx);
                    if ox0 >= ox1 {
                        continue;
                    }
                    for oy in 0..g.h_out {
                        let iy = oy * g.stride + ky;
                        if iy < g.pad || iy >= g.h + g.pad {
                            continue;
                        }
                        let iy = iy - g.pad;
                        let grow = &g_plane[oy * g.w_out + ox0..oy * g.w_out + ox1];
                        if g.stride == 1 {
                            let ix0 = ox0 + kx - g.pad;
                            let xrow = &mut plane[iy * g.w + ix0..][..ox1 - ox0];
                            for (xg, &gv) in xrow.iter_mut().zip(grow) {
                                *xg += wv * gv;
                            }
                        } else {
                            for (j, &gv) in grow.iter().enumerate() {
                                let ix = (ox0 + j) * g.stride + kx - g.pad;
                                plane[iy * g.w + ix] += wv * gv;
                            }
                        }
                    }
                }
            }
        }
    });
    gx
}

/// Gradient w.r.t. the weights: parallel over (c_out, c_in) kernel slices.
fn backward_weight<S: Scalar>(gout: &[S], x: &[S], g: &Geometry) -> Vec<S> {
    let out_plane = g.h_out * g.w_out;
    let in_plane = g.h * g.w;
    let kk = g.k * g.k;
    let mut gw = vec![S::ZERO; g.c_out * g.c_in * kk];
    gw.par_chunks_mut(kk).enumerate().for_each(|(idx, kernel)| {
        let (co, ci) = (idx / g.c_in, idx % g.c_in);
        for ky in 0..g.k {
            for kx in 0..g.k {
                let (ox0, ox1) = valid_ox(g, kx);
                if ox0 >= ox1 {
                    continue;
                }
                let mut acc = S::ZERO;
                for bi in 0..g.b {
                    let g_plane = &gout[(bi * g.c_out + co) * out_plane..][..out_plane];
                    let x_plane = &x[(bi * g.c_in + ci) * in_plane..][..in_plane];
                    for oy in 0..g.h_out {
                        let iy = oy * g.stride + ky;
                        if iy < g.pad || iy >= g.h + g.pad {
                            continue;
                        }
                        let iy = iy - g.pad;
                        let grow = &g_plane[oy * g.w_out + ox0..oy * g.w_out + ox1];
                        if g.stride == 1 {
                            let ix0 = ox0 + kx - g.pad;
                            let xrow = &x_plane[iy * g.w + ix0..][..ox1 - ox0];
                            acc += grow.iter().zip(xrow).map(|(&gv, &xv)| gv * xv).sum();
                        } else {
                            for (j, &gv) in grow.iter().enumerate() {
                                let ix = (ox0 + j) * g.stride + kx - g.pad;
                                acc += gv * x_plane[iy * g.w + ix];
                            }
                        }
                    }
                }
                kernel[ky * g.k + kx] = acc;
            }
        }
    });
    gw
}

fn backward_bias<S: Scalar>(gout: &[S], g: &Geometry) -> Vec<S> {
    let out_plane = g.h_out * g.w_out;
    (0..g.c_out)
        .map(|co| {
            let mut acc = S::ZERO;
            for bi in 0..g.b {
                acc += gout[(bi * g.c_out + co) * out_plane..][..out_plane]
                    .iter()
                    .copied()
                    .sum();
            }
            acc
        })
        .collect()
}

impl<S: Scalar> Tensor<S> {
    /// 2-D convolution of a `[B, C_in, H, W]` input with `[C_out, C_in, K, K]`
    /// weights, zero padding `pad` on all sides, and the given stride.
    /// Output shape is `[B, C_out, (H + 2·pad − K)/stride + 1, ...]`.
    pub fn conv2d(
        &self,
        weights: &Tensor<S>,
        bias: &Tensor<S>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor<S>> {
        let g = geometry(self.shape(), weights.shape(), bias.shape(), stride, pad)?;
        let data = forward(self.data(), weights.data(), bias.data(), &g);
        let x_data = self.data().to_vec();
        let w_data = weights.data().to_vec();
        let x_tracked = self.requires_grad();
        let w_tracked = weights.requires_grad();
        let b_tracked = bias.requires_grad();
        Ok(Tensor::from_op(
            data,
            vec![g.b, g.c_out, g.h_out, g.w_out],
            "conv2d",
            vec![self.clone(), weights.clone(), bias.clone()],
            Box::new(move |_out, gout| {
                vec![
                    x_tracked.then(|| backward_input(gout, &w_data, &g)),
                    w_tracked.then(|| backward_weight(gout, &x_data, &g)),
                    b_tracked.then(|| backward_bias(gout, &g)),
                ]
            }),
        ))
    }
}
