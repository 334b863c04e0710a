//! Affine map `[N, F] x [C, F] + [C] -> [N, C]`, the classification head.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Op};

pub(crate) fn forward(x: &[f64], xs: &[usize], w: &[f64], ws: &[usize], b: &[f64]) -> Vec<f64> {
    let (n, f) = (xs[0], xs[1]);
    let c = ws[0];
    let mut out = vec![0.0; n * c];
    for ni in 0..n {
        let xrow = &x[ni * f..(ni + 1) * f];
        for ci in 0..c {
            let wrow = &w[ci * f..(ci + 1) * f];
            let mut s = b[ci];
            for (xv, wv) in xrow.iter().zip(wrow) {
                s += xv * wv;
            }
            out[ni * c + ci] = s;
        }
    }
    out
}

pub(crate) fn backward_input(g: &[f64], w: &[f64], xs: &[usize], ws: &[usize]) -> Vec<f64> {
    let (n, f) = (xs[0], xs[1]);
    let c = ws[0];
    let mut dx = vec![0.0; n * f];
    for ni in 0..n {
        for ci in 0..c {
            let gv = g[ni * c + ci];
            let wrow = &w[ci * f..(ci + 1) * f];
            let dxrow = &mut dx[ni * f..(ni + 1) * f];
            for (d, wv) in dxrow.iter_mut().zip(wrow) {
                *d += gv * wv;
            }
        }
    }
    dx
}

pub(crate) fn backward_weight(g: &[f64], x: &[f64], xs: &[usize], ws: &[usize]) -> Vec<f64> {
    let (n, f) = (xs[0], xs[1]);
    let c = ws[0];
    let mut dw = vec![0.0; c * f];
    for ni in 0..n {
        let xrow = &x[ni * f..(ni + 1) * f];
        for ci in 0..c {
            let gv = g[ni * c + ci];
            let dwrow = &mut dw[ci * f..(ci + 1) * f];
            for (d, xv) in dwrow.iter_mut().zip(xrow) {
                *d += gv * xv;
            }
        }
    }
    dw
}

pub(crate) fn backward_bias(g: &[f64], xs: &[usize], ws: &[usize]) -> Vec<f64> {
    let (n, c) = (xs[0], ws[0]);
    let mut db = vec![0.0; c];
    for ni in 0..n {
        for ci in 0..c {
            db[ci] += g[ni * c + ci];
        }
    }
    db
}

/// `out = x W^T + b` with weight `[C, F]` and bias `[C]`.
pub fn linear(g: &mut Graph, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
    let xs = g.shape(x).to_vec();
    let ws = g.shape(w).to_vec();
    if xs.len() != 2 || ws.len() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "linear expects 2-d input and weight, got {xs:?} and {ws:?}"
        )));
    }
    if xs[1] != ws[1] {
        return Err(Error::ShapeMismatch(format!(
            "linear input features {} do not match weight features {}",
            xs[1], ws[1]
        )));
    }
    if g.value(b).len() != ws[0] {
        return Err(Error::ShapeMismatch(format!(
            "linear bias length {} does not match {} outputs",
            g.value(b).len(),
            ws[0]
        )));
    }
    let out = forward(g.value(x), &xs, g.value(w), &ws, g.value(b));
    let needs = g.needs(x) || g.needs(w) || g.needs(b);
    Ok(g.push(vec![xs[0], ws[0]], out, needs, Op::Linear { x, w, b }))
}
