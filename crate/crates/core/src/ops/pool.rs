//! Max pooling over `[N, C, T, H, W]` windows. The forward pass records the
//! arg-max position of every window (first occurrence in row-major order on
//! ties) and the backward pass routes the incoming gradient there.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Op};

use super::conv3::out_extent;

pub(crate) fn forward(
    x: &[f64],
    xs: &[usize],
    kernel: [usize; 3],
    stride: [usize; 3],
) -> Result<(Vec<f64>, Vec<u32>, Vec<usize>)> {
    let (n, c, t, h, w) = (xs[0], xs[1], xs[2], xs[3], xs[4]);
    let to = out_extent(t, kernel[0], stride[0], 0)?;
    let ho = out_extent(h, kernel[1], stride[1], 0)?;
    let wo = out_extent(w, kernel[2], stride[2], 0)?;
    let mut out = vec![0.0; n * c * to * ho * wo];
    let mut argmax = vec![0u32; out.len()];
    let mut oi = 0;
    for nc in 0..n * c {
        let plane = nc * t * h * w;
        for toi in 0..to {
            for hoi in 0..ho {
                for woi in 0..wo {
                    let (t0, h0, w0) = (toi * stride[0], hoi * stride[1], woi * stride[2]);
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for kt in 0..kernel[0] {
                        for kh in 0..kernel[1] {
                            let row = plane + ((t0 + kt) * h + h0 + kh) * w + w0;
                            for kw in 0..kernel[2] {
                                let v = x[row + kw];
                                if v > best {
                                    best = v;
                                    best_idx = row + kw;
                                }
                            }
                        }
                    }
                    out[oi] = best;
                    argmax[oi] = best_idx as u32;
                    oi += 1;
                }
            }
        }
    }
    Ok((out, argmax, vec![n, c, to, ho, wo]))
}

/// Max pooling; no padding, so every window must fit inside the input.
pub fn maxpool3d(g: &mut Graph, x: NodeId, kernel: [usize; 3], stride: [usize; 3]) -> Result<NodeId> {
    let xs = g.shape(x).to_vec();
    if xs.len() != 5 {
        return Err(Error::ShapeMismatch(format!("maxpool3d expects 5-d input, got {xs:?}")));
    }
    let (out, argmax, os) = forward(g.value(x), &xs, kernel, stride)?;
    let needs = g.needs(x);
    Ok(g.push(os, out, needs, Op::MaxPool3d { x, argmax }))
}

/// Spatial max pooling on frame-major `[N, C, H, W]` data, routed through the
/// 3D kernel with a unit temporal window.
pub fn maxpool2d(g: &mut Graph, x: NodeId, kernel: [usize; 2], stride: [usize; 2]) -> Result<NodeId> {
    let xs = g.shape(x).to_vec();
    if xs.len() != 4 {
        return Err(Error::ShapeMismatch(format!("maxpool2d expects 4-d input, got {xs:?}")));
    }
    let as5d = super::shape::reshape(g, x, vec![xs[0], xs[1], 1, xs[2], xs[3]])?;
    let pooled = maxpool3d(g, as5d, [1, kernel[0], kernel[1]], [1, stride[0], stride[1]])?;
    let ps = g.shape(pooled).to_vec();
    super::shape::reshape(g, pooled, vec![ps[0], ps[1], ps[3], ps[4]])
}
