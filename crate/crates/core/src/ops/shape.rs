//! Shape plumbing and reductions: reshape, residual add, channel concat,
//! global average pooling, per-frame consensus, temporal subsampling, and the
//! probe-weighted sum head used by the gradient checker.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Op};

/// Same elements, new shape.
pub fn reshape(g: &mut Graph, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
    let numel: usize = shape.iter().product();
    if numel != g.value(x).len() {
        return Err(Error::ShapeMismatch(format!(
            "cannot reshape {:?} to {shape:?}",
            g.shape(x)
        )));
    }
    let data = g.value(x).to_vec();
    let needs = g.needs(x);
    Ok(g.push(shape, data, needs, Op::Reshape { x }))
}

/// Elementwise sum of two same-shape nodes.
pub fn add(g: &mut Graph, a: NodeId, b: NodeId) -> Result<NodeId> {
    if g.shape(a) != g.shape(b) {
        return Err(Error::ShapeMismatch(format!(
            "add requires equal shapes, got {:?} and {:?}",
            g.shape(a),
            g.shape(b)
        )));
    }
    let data: Vec<f64> = g.value(a).iter().zip(g.value(b)).map(|(x, y)| x + y).collect();
    let shape = g.shape(a).to_vec();
    let needs = g.needs(a) || g.needs(b);
    Ok(g.push(shape, data, needs, Op::Add { a, b }))
}

/// Concatenate along axis 1; all other extents must match.
pub fn concat_channels(g: &mut Graph, a: NodeId, b: NodeId) -> Result<NodeId> {
    let sa = g.shape(a).to_vec();
    let sb = g.shape(b).to_vec();
    if sa.len() != sb.len() || sa[0] != sb[0] || sa[2..] != sb[2..] {
        return Err(Error::ShapeMismatch(format!(
            "concat_channels requires equal extents outside axis 1, got {sa:?} and {sb:?}"
        )));
    }
    let lead = sa[0];
    let ca: usize = sa[1..].iter().product();
    let cb: usize = sb[1..].iter().product();
    let mut data = vec![0.0; lead * (ca + cb)];
    for n in 0..lead {
        data[n * (ca + cb)..n * (ca + cb) + ca].copy_from_slice(&g.value(a)[n * ca..(n + 1) * ca]);
        data[n * (ca + cb) + ca..(n + 1) * (ca + cb)].copy_from_slice(&g.value(b)[n * cb..(n + 1) * cb]);
    }
    let mut shape = sa.clone();
    shape[1] += sb[1];
    let needs = g.needs(a) || g.needs(b);
    Ok(g.push(shape, data, needs, Op::ConcatC { a, b }))
}

/// Mean over every axis after the channel axis: `[N, C, ...] -> [N, C]`.
pub fn global_avg_pool(g: &mut Graph, x: NodeId) -> Result<NodeId> {
    let xs = g.shape(x).to_vec();
    if xs.len() < 3 {
        return Err(Error::ShapeMismatch(format!("global_avg_pool expects [N, C, ...], got {xs:?}")));
    }
    let (n, c) = (xs[0], xs[1]);
    let rest: usize = xs[2..].iter().product();
    let xv = g.value(x);
    let mut out = vec![0.0; n * c];
    for nc in 0..n * c {
        out[nc] = xv[nc * rest..(nc + 1) * rest].iter().sum::<f64>() / rest as f64;
    }
    let needs = g.needs(x);
    Ok(g.push(vec![n, c], out, needs, Op::GlobalAvgPool { x }))
}

/// Average per-frame rows into clips: `[N*T, C] -> [N, C]`.
///
/// Accumulation is baseline-shifted (first frame plus mean of differences) so
/// that a stack of identical rows averages to exactly that row.
pub fn frame_mean(g: &mut Graph, x: NodeId, frames: usize) -> Result<NodeId> {
    let xs = g.shape(x).to_vec();
    if xs.len() != 2 || frames == 0 || xs[0] % frames != 0 {
        return Err(Error::ShapeMismatch(format!(
            "frame_mean expects [N*T, C] with T={frames}, got {xs:?}"
        )));
    }
    let (rows, c) = (xs[0], xs[1]);
    let n = rows / frames;
    let xv = g.value(x);
    let mut out = vec![0.0; n * c];
    for ni in 0..n {
        let first = &xv[ni * frames * c..ni * frames * c + c];
        for ci in 0..c {
            let mut acc = 0.0;
            for t in 1..frames {
                acc += xv[(ni * frames + t) * c + ci] - first[ci];
            }
            out[ni * c + ci] = first[ci] + acc / frames as f64;
        }
    }
    let needs = g.needs(x);
    Ok(g.push(vec![n, c], out, needs, Op::FrameMean { x, frames }))
}

/// Pick every `step`-th frame along the temporal axis of `[N, C, T, H, W]`,
/// starting at frame 0.
pub fn subsample_temporal(g: &mut Graph, x: NodeId, step: usize) -> Result<NodeId> {
    let xs = g.shape(x).to_vec();
    if xs.len() != 5 {
        return Err(Error::ShapeMismatch(format!("subsample_temporal expects 5-d input, got {xs:?}")));
    }
    if step == 0 || xs[2] % step != 0 {
        return Err(Error::InvalidConfig(format!(
            "temporal extent {} not divisible by step {step}",
            xs[2]
        )));
    }
    let (n, c, t) = (xs[0], xs[1], xs[2]);
    let hw: usize = xs[3..].iter().product();
    let to = t / step;
    let xv = g.value(x);
    let mut out = vec![0.0; n * c * to * hw];
    for ni in 0..n {
        for ci in 0..c {
            for k in 0..to {
                let dst = ((ni * c + ci) * to + k) * hw;
                let src = ((ni * c + ci) * t + k * step) * hw;
                out[dst..dst + hw].copy_from_slice(&xv[src..src + hw]);
            }
        }
    }
    let needs = g.needs(x);
    Ok(g.push(vec![n, c, to, xs[3], xs[4]], out, needs, Op::SubsampleT { x, step }))
}

/// Permute `[N, C, T, H, W]` into frame-major `[N*T, C, H, W]` so 2D ops can
/// treat frames as batch entries.
pub fn fold_frames(g: &mut Graph, x: NodeId) -> Result<NodeId> {
    let xs = g.shape(x).to_vec();
    if xs.len() != 5 {
        return Err(Error::ShapeMismatch(format!("fold_frames expects 5-d input, got {xs:?}")));
    }
    let (n, c, t) = (xs[0], xs[1], xs[2]);
    let hw = xs[3] * xs[4];
    let xv = g.value(x);
    let mut out = vec![0.0; xv.len()];
    for ni in 0..n {
        for ci in 0..c {
            for ti in 0..t {
                let src = ((ni * c + ci) * t + ti) * hw;
                let dst = ((ni * t + ti) * c + ci) * hw;
                out[dst..dst + hw].copy_from_slice(&xv[src..src + hw]);
            }
        }
    }
    let needs = g.needs(x);
    Ok(g.push(vec![n * t, c, xs[3], xs[4]], out, needs, Op::FoldFrames { x, frames: t }))
}

/// Scalar probe head `sum_i probe[i] * x[i]`, reducing any node for the
/// gradient checker.
pub fn probe_sum(g: &mut Graph, x: NodeId, probe: Vec<f64>) -> Result<NodeId> {
    if probe.len() != g.value(x).len() {
        return Err(Error::ShapeMismatch(format!(
            "probe length {} does not match node ({} elements)",
            probe.len(),
            g.value(x).len()
        )));
    }
    let s: f64 = g.value(x).iter().zip(&probe).map(|(a, b)| a * b).sum();
    let needs = g.needs(x);
    Ok(g.push(vec![1], vec![s], needs, Op::ProbeSum { x, probe }))
}
