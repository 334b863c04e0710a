//! Direct 2D convolution, the 2D-backbone workhorse.
//!
//! Kernels run per sample over an unrolled patch matrix (im2col layout) so
//! the innermost loops sweep whole output rows. Each output element
//! accumulates its taps in a fixed (cin, kh, kw) order and is produced by
//! exactly one task, keeping results bit-identical for any thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Op};

use super::conv3::out_extent;
use super::gemm::gemm_bias;

/// Valid output range [lo, hi] (inclusive) along one axis for a kernel tap.
#[inline]
pub(crate) fn tap_range(out_ext: usize, ext: usize, stride: usize, tap: usize, pad: usize) -> Option<(usize, usize)> {
    let lo = if pad > tap { (pad - tap + stride - 1) / stride } else { 0 };
    let rhs = ext as isize - 1 + pad as isize - tap as isize;
    if rhs < 0 {
        return None;
    }
    let hi = ((rhs as usize) / stride).min(out_ext - 1);
    if lo > hi {
        None
    } else {
        Some((lo, hi))
    }
}

struct Geom2 {
    cin: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    kh: usize,
    kw: usize,
    stride: [usize; 2],
    pad: [usize; 2],
}

impl Geom2 {
    fn patch_rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

/// Unroll one sample's patches: `col[(ci, khi, kwi)][hoi * wo + woi] =
/// x[ci, hoi*sh + khi - ph, woi*sw + kwi - pw]` (zero outside).
fn im2col(x: &[f64], g: &Geom2, col: &mut [f64]) {
    col.iter_mut().for_each(|v| *v = 0.0);
    let cols = g.cols();
    for ci in 0..g.cin {
        let plane = ci * g.h * g.w;
        for khi in 0..g.kh {
            for kwi in 0..g.kw {
                let row = &mut col[((ci * g.kh + khi) * g.kw + kwi) * cols..][..cols];
                let Some((wlo, whi)) = tap_range(g.wo, g.w, g.stride[1], kwi, g.pad[1]) else {
                    continue;
                };
                for hoi in 0..g.ho {
                    let hi = (hoi * g.stride[0] + khi) as isize - g.pad[0] as isize;
                    if hi < 0 || hi >= g.h as isize {
                        continue;
                    }
                    let src = &x[plane + hi as usize * g.w..][..g.w];
                    let dst = &mut row[hoi * g.wo..][..g.wo];
                    if g.stride[1] == 1 {
                        let off = wlo + kwi - g.pad[1];
                        dst[wlo..=whi].copy_from_slice(&src[off..off + (whi - wlo + 1)]);
                    } else {
                        for woi in wlo..=whi {
                            dst[woi] = src[woi * g.stride[1] + kwi - g.pad[1]];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add the patch-matrix gradient back onto the input gradient.
fn col2im_add(dcol: &[f64], g: &Geom2, dx: &mut [f64]) {
    let cols = g.cols();
    for ci in 0..g.cin {
        let plane = ci * g.h * g.w;
        for khi in 0..g.kh {
            for kwi in 0..g.kw {
                let row = &dcol[((ci * g.kh + khi) * g.kw + kwi) * cols..][..cols];
                let Some((wlo, whi)) = tap_range(g.wo, g.w, g.stride[1], kwi, g.pad[1]) else {
                    continue;
                };
                for hoi in 0..g.ho {
                    let hi = (hoi * g.stride[0] + khi) as isize - g.pad[0] as isize;
                    if hi < 0 || hi >= g.h as isize {
                        continue;
                    }
                    let dst = &mut dx[plane + hi as usize * g.w..][..g.w];
                    let src = &row[hoi * g.wo..][..g.wo];
                    if g.stride[1] == 1 {
                        let off = wlo + kwi - g.pad[1];
                        for (d, s) in dst[off..off + (whi - wlo + 1)].iter_mut().zip(&src[wlo..=whi]) {
                            *d += s;
                        }
                    } else {
                        for woi in wlo..=whi {
                            dst[woi * g.stride[1] + kwi - g.pad[1]] += src[woi];
                        }
                    }
                }
            }
        }
    }
}

fn geom(xs: &[usize], ws: &[usize], stride: [usize; 2], pad: [usize; 2]) -> Result<Geom2> {
    let (cin, h, w) = (xs[1], xs[2], xs[3]);
    let (wcin, kh, kw) = (ws[1], ws[2], ws[3]);
    if cin != wcin {
        return Err(Error::ShapeMismatch(format!(
            "input has {cin} channels but weight expects {wcin}"
        )));
    }
    Ok(Geom2 {
        cin,
        h,
        w,
        ho: out_extent(h, kh, stride[0], pad[0])?,
        wo: out_extent(w, kw, stride[1], pad[1])?,
        kh,
        kw,
        stride,
        pad,
    })
}

pub(crate) fn forward(
    x: &[f64],
    xs: &[usize],
    w: &[f64],
    ws: &[usize],
    b: Option<&[f64]>,
    stride: [usize; 2],
    pad: [usize; 2],
) -> Result<(Vec<f64>, Vec<usize>)> {
    let n = xs[0];
    let cout = ws[0];
    if let Some(b) = b {
        if b.len() != cout {
            return Err(Error::ShapeMismatch(format!(
                "bias length {} does not match {cout} output channels",
                b.len()
            )));
        }
    }
    let g = geom(xs, ws, stride, pad)?;
    let cols = g.cols();
    let rows = g.patch_rows();
    let in_block = g.cin * g.h * g.w;
    let mut out = vec![0.0; n * cout * cols];
    out.par_chunks_mut(cout * cols).enumerate().for_each(|(ni, out_block)| {
        let mut col = vec![0.0; rows * cols];
        im2col(&x[ni * in_block..(ni + 1) * in_block], &g, &mut col);
        gemm_bias(w, &col, b, out_block, cout, rows, cols);
    });
    Ok((out, vec![n, cout, g.ho, g.wo]))
}

pub(crate) fn backward_input(
    gout: &[f64],
    _gs: &[usize],
    w: &[f64],
    ws: &[usize],
    xs: &[usize],
    stride: [usize; 2],
    pad: [usize; 2],
) -> Vec<f64> {
    let n = xs[0];
    let cout = ws[0];
    let g = geom(xs, ws, stride, pad).expect("shapes validated in forward");
    let cols = g.cols();
    let rows = g.patch_rows();
    let in_block = g.cin * g.h * g.w;
    // Transposed weight so the microkernel accumulates over co per patch row.
    let mut wt = vec![0.0; rows * cout];
    for co in 0..cout {
        for k in 0..rows {
            wt[k * cout + co] = w[co * rows + k];
        }
    }
    let mut dx = vec![0.0; n * in_block];
    dx.par_chunks_mut(in_block).enumerate().for_each(|(ni, dx_block)| {
        let mut dcol = vec![0.0; rows * cols];
        gemm_bias(&wt, &gout[ni * cout * cols..(ni + 1) * cout * cols], None, &mut dcol, rows, cout, cols);
        col2im_add(&dcol, &g, dx_block);
    });
    dx
}

/// Fixed sample chunking (independent of thread count) with a sequential
/// final reduction keeps the weight gradient bit-deterministic.
const WEIGHT_CHUNKS: usize = 8;

pub(crate) fn backward_weight(
    gout: &[f64],
    _gs: &[usize],
    x: &[f64],
    xs: &[usize],
    ws: &[usize],
    stride: [usize; 2],
    pad: [usize; 2],
) -> Vec<f64> {
    let n = xs[0];
    let cout = ws[0];
    let g = geom(xs, ws, stride, pad).expect("shapes validated in forward");
    let cols = g.cols();
    let rows = g.patch_rows();
    let in_block = g.cin * g.h * g.w;

    let chunk = n.div_ceil(WEIGHT_CHUNKS).max(1);
    let partials: Vec<Vec<f64>> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(chunk)
        .map(|ns| {
            let mut dw = vec![0.0; cout * rows];
            let mut col = vec![0.0; rows * cols];
            for &ni in ns {
                im2col(&x[ni * in_block..(ni + 1) * in_block], &g, &mut col);
                for co in 0..cout {
                    let grow = &gout[(ni * cout + co) * cols..][..cols];
                    let dwrow = &mut dw[co * rows..(co + 1) * rows];
                    for (k, dwv) in dwrow.iter_mut().enumerate() {
                        let src = &col[k * cols..(k + 1) * cols];
                        let mut acc = 0.0;
                        for (a, b) in grow.iter().zip(src) {
                            acc += a * b;
                        }
                        *dwv += acc;
                    }
                }
            }
            dw
        })
        .collect();

    let mut dw = vec![0.0; cout * rows];
    for p in partials {
        for (d, s) in dw.iter_mut().zip(&p) {
            *d += s;
        }
    }
    dw
}

pub(crate) fn backward_bias(g: &[f64], gs: &[usize]) -> Vec<f64> {
    let (n, cout) = (gs[0], gs[1]);
    let block: usize = gs[2..].iter().product();
    let mut db = vec![0.0; cout];
    for ni in 0..n {
        for (co, dbv) in db.iter_mut().enumerate() {
            let base = (ni * cout + co) * block;
            *dbv += g[base..base + block].iter().sum::<f64>();
        }
    }
    db
}

/// 2D convolution over `[N, Cin, H, W]` with weight `[Cout, Cin, kh, kw]`.
pub fn conv2d(
    g: &mut Graph,
    x: NodeId,
    w: NodeId,
    b: Option<NodeId>,
    stride: [usize; 2],
    pad: [usize; 2],
) -> Result<NodeId> {
    let xs = g.shape(x).to_vec();
    let ws = g.shape(w).to_vec();
    if xs.len() != 4 || ws.len() != 4 {
        return Err(Error::ShapeMismatch(format!(
            "conv2d expects 4-d input and weight, got {xs:?} and {ws:?}"
        )));
    }
    let bias = b.map(|id| g.value(id).to_vec());
    let (out, os) = forward(g.value(x), &xs, g.value(w), &ws, bias.as_deref(), stride, pad)?;
    let needs = g.needs(x) || g.needs(w) || b.map(|id| g.needs(id)).unwrap_or(false);
    Ok(g.push(os, out, needs, Op::Conv2d { x, w, b, stride, pad }))
}
