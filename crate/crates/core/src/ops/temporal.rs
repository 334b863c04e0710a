//! Temporal ops: channel shift along the time axis and frame differencing.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Op, ShiftLayout};

/// Plane offset of (clip n, frame t, channel c) for a given layout.
#[inline]
fn plane(layout: ShiftLayout, n: usize, c: usize, t: usize, chans: usize, frames: usize) -> usize {
    match layout {
        ShiftLayout::ChannelMajor => (n * chans + c) * frames + t,
        ShiftLayout::FrameMajor => (n * frames + t) * chans + c,
    }
}

/// Shift the first `cf` channels forward in time (frame t reads t-1), the
/// next `cb` backward (frame t reads t+1), zero-filling at the boundaries.
/// `invert` swaps the two directions, which is exactly the backward pass.
pub(crate) fn shift_core(
    x: &[f64],
    xs: &[usize],
    layout: ShiftLayout,
    frames: usize,
    cf: usize,
    cb: usize,
    invert: bool,
) -> Vec<f64> {
    let (clips, chans, hw) = match layout {
        ShiftLayout::ChannelMajor => (xs[0], xs[1], xs[3] * xs[4]),
        ShiftLayout::FrameMajor => (xs[0] / frames, xs[1], xs[2] * xs[3]),
    };
    let mut out = vec![0.0; x.len()];
    for n in 0..clips {
        for c in 0..chans {
            let delta: isize = if c < cf {
                -1
            } else if c < cf + cb {
                1
            } else {
                0
            };
            let delta = if invert { -delta } else { delta };
            for t in 0..frames {
                let src_t = t as isize + delta;
                if src_t < 0 || src_t >= frames as isize {
                    continue;
                }
                let dst = plane(layout, n, c, t, chans, frames) * hw;
                let src = plane(layout, n, c, src_t as usize, chans, frames) * hw;
                out[dst..dst + hw].copy_from_slice(&x[src..src + hw]);
            }
        }
    }
    out
}

pub(crate) fn shift_backward(
    g: &[f64],
    xs: &[usize],
    layout: ShiftLayout,
    frames: usize,
    cf: usize,
    cb: usize,
) -> Vec<f64> {
    shift_core(g, xs, layout, frames, cf, cb, true)
}

/// Graph node for the temporal shift. `cf`/`cb` are already-resolved channel
/// counts; the fraction arithmetic lives in the video module.
pub(crate) fn tsm_shift_node(
    g: &mut Graph,
    x: NodeId,
    layout: ShiftLayout,
    frames: usize,
    cf: usize,
    cb: usize,
) -> Result<NodeId> {
    let xs = g.shape(x).to_vec();
    let chans = xs[1];
    if cf + cb > chans {
        return Err(Error::InvalidConfig(format!(
            "shift would move {} of {chans} channels",
            cf + cb
        )));
    }
    if frames == 0 {
        return Err(Error::InvalidConfig("temporal shift needs at least one frame".into()));
    }
    if layout == ShiftLayout::FrameMajor && xs[0] % frames != 0 {
        return Err(Error::ShapeMismatch(format!(
            "frame-major leading extent {} not divisible by T={frames}",
            xs[0]
        )));
    }
    let out = shift_core(g.value(x), &xs, layout, frames, cf, cb, false);
    let needs = g.needs(x);
    Ok(g.push(xs, out, needs, Op::TsmShift { x, layout, frames, cf, cb }))
}

/// Frame differences along the temporal axis: `out[.., t] = x[.., t+1] - x[.., t]`.
/// Accepts `[C, T, H, W]` or `[N, C, T, H, W]`.
pub fn frame_diff(g: &mut Graph, x: NodeId) -> Result<NodeId> {
    let xs = g.shape(x).to_vec();
    if xs.len() != 4 && xs.len() != 5 {
        return Err(Error::ShapeMismatch(format!(
            "frame_diff expects [C, T, H, W] or [N, C, T, H, W], got {xs:?}"
        )));
    }
    let t_axis = xs.len() - 3;
    let t = xs[t_axis];
    if t < 2 {
        return Err(Error::InvalidConfig(format!("frame_diff needs T >= 2, got {t}")));
    }
    let lead: usize = xs[..t_axis].iter().product();
    let hw: usize = xs[t_axis + 1..].iter().product();
    let xv = g.value(x);
    let mut out = vec![0.0; lead * (t - 1) * hw];
    for l in 0..lead {
        for ti in 0..t - 1 {
            let dst = (l * (t - 1) + ti) * hw;
            let a = (l * t + ti + 1) * hw;
            let b = (l * t + ti) * hw;
            for k in 0..hw {
                out[dst + k] = xv[a + k] - xv[b + k];
            }
        }
    }
    let mut shape = xs;
    shape[t_axis] = t - 1;
    let needs = g.needs(x);
    Ok(g.push(shape, out, needs, Op::FrameDiff { x, lead }))
}
