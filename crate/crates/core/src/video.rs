//! The four video-specific mechanisms as reusable differentiable blocks:
//! temporal channel shift, factored (2+1)D convolution, residual-frame
//! extraction, and the fast-to-slow lateral fusion of a two-pathway network.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, ShiftLayout};
use crate::layers::{BnLayer, BnUpdate, Conv3dLayer, Mode};
use crate::ops::{self, Activation};
use crate::ops::temporal::{shift_core, tsm_shift_node};
use crate::optim::ParamStore;
use crate::tensor::Tensor;

/// Exact rational in [0, 1], used for channel fractions so shifted channel
/// counts are computed with integer arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frac {
    pub num: u32,
    pub den: u32,
}

impl Frac {
    pub const ZERO: Frac = Frac { num: 0, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidConfig("fraction denominator must be nonzero".into()));
        }
        if num > den {
            return Err(Error::InvalidConfig(format!("fraction {num}/{den} exceeds 1")));
        }
        Ok(Frac { num, den })
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `floor(count * num / den)` without going through floats.
    pub fn of(self, count: usize) -> usize {
        count * self.num as usize / self.den as usize
    }

    pub fn is_zero(self) -> bool {
        self.num == 0
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let num = n.trim().parse::<u32>().map_err(|_| Error::InvalidConfig(format!("bad fraction `{s}`")))?;
            let den = d.trim().parse::<u32>().map_err(|_| Error::InvalidConfig(format!("bad fraction `{s}`")))?;
            Frac::new(num, den)
        } else {
            let num = s.parse::<u32>().map_err(|_| Error::InvalidConfig(format!("bad fraction `{s}`")))?;
            Frac::new(num, 1)
        }
    }
}

impl std::fmt::Display for Frac {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Which channel fractions move forward/backward along time, and whether the
/// shift sits inside the residual branch (`x + F(shift(x))`) or on the trunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftSpec {
    pub fraction_forward: Frac,
    pub fraction_backward: Frac,
    pub residual_embedding: bool,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec {
            fraction_forward: Frac { num: 1, den: 8 },
            fraction_backward: Frac { num: 1, den: 8 },
            residual_embedding: true,
        }
    }
}

impl ShiftSpec {
    pub fn none() -> Self {
        ShiftSpec { fraction_forward: Frac::ZERO, fraction_backward: Frac::ZERO, residual_embedding: true }
    }

    pub fn validate(&self) -> Result<()> {
        let (f, b) = (self.fraction_forward, self.fraction_backward);
        if 2 * f.num > f.den || 2 * b.num > b.den {
            return Err(Error::InvalidConfig(format!(
                "shift fractions must each be <= 1/2, got {f} and {b}"
            )));
        }
        // f + b <= 1 in exact arithmetic
        if (f.num as u64) * (b.den as u64) + (b.num as u64) * (f.den as u64) > (f.den as u64) * (b.den as u64) {
            return Err(Error::InvalidConfig(format!("shift fractions {f} + {b} exceed 1")));
        }
        Ok(())
    }

    pub fn channels_forward(&self, channels: usize) -> usize {
        self.fraction_forward.of(channels)
    }

    pub fn channels_backward(&self, channels: usize) -> usize {
        self.fraction_backward.of(channels)
    }

    pub fn is_zero(&self) -> bool {
        self.fraction_forward.is_zero() && self.fraction_backward.is_zero()
    }
}

fn shift_layout(shape: &[usize], frames: Option<usize>) -> Result<(ShiftLayout, usize)> {
    match shape.len() {
        5 => Ok((ShiftLayout::ChannelMajor, shape[2])),
        4 => {
            let t = frames.ok_or_else(|| {
                Error::InvalidConfig("frame-major shift input requires the temporal extent".into())
            })?;
            Ok((ShiftLayout::FrameMajor, t))
        }
        _ => Err(Error::ShapeMismatch(format!(
            "tsm_shift expects [N, C, T, H, W] or [N*T, C, H, W], got {shape:?}"
        ))),
    }
}

/// Temporal shift as a graph op. Accepts `[N, C, T, H, W]`, or frame-major
/// `[N*T, C, H, W]` when `frames` names T. Zero parameters; the backward pass
/// is the inverse shift.
pub fn tsm_shift(g: &mut Graph, x: NodeId, spec: &ShiftSpec, frames: Option<usize>) -> Result<NodeId> {
    spec.validate()?;
    let shape = g.shape(x).to_vec();
    let (layout, t) = shift_layout(&shape, frames)?;
    let chans = shape[1];
    tsm_shift_node(g, x, layout, t, spec.channels_forward(chans), spec.channels_backward(chans))
}

/// Temporal shift applied directly to a tensor, for oracles and pipelines
/// that do not need gradients.
pub fn tsm_shift_tensor(x: &Tensor, spec: &ShiftSpec, frames: Option<usize>) -> Result<Tensor> {
    spec.validate()?;
    let (layout, t) = shift_layout(x.shape(), frames)?;
    let chans = x.shape()[1];
    if layout == ShiftLayout::FrameMajor && x.shape()[0] % t != 0 {
        return Err(Error::ShapeMismatch(format!(
            "frame-major leading extent {} not divisible by T={t}",
            x.shape()[0]
        )));
    }
    let out = shift_core(
        x.data(),
        x.shape(),
        layout,
        t,
        spec.channels_forward(chans),
        spec.channels_backward(chans),
        false,
    );
    Tensor::new(x.shape().to_vec(), out)
}

/// Frame-to-frame differences of a clip: `out[:, t] = x[:, t+1] - x[:, t]`.
/// `[C, T, H, W] -> [C, T-1, H, W]` (a leading batch axis is also accepted).
pub fn residual_frames(clip: &Tensor) -> Result<Tensor> {
    let shape = clip.shape();
    if shape.len() != 4 && shape.len() != 5 {
        return Err(Error::ShapeMismatch(format!(
            "residual_frames expects [C, T, H, W] or [N, C, T, H, W], got {shape:?}"
        )));
    }
    let t_axis = shape.len() - 3;
    let t = shape[t_axis];
    if t < 2 {
        return Err(Error::InvalidConfig(format!("residual_frames needs T >= 2, got {t}")));
    }
    let lead: usize = shape[..t_axis].iter().product();
    let hw: usize = shape[t_axis + 1..].iter().product();
    let x = clip.data();
    let mut out = vec![0.0; lead * (t - 1) * hw];
    for l in 0..lead {
        for ti in 0..t - 1 {
            let dst = (l * (t - 1) + ti) * hw;
            let a = (l * t + ti + 1) * hw;
            let b = (l * t + ti) * hw;
            for k in 0..hw {
                out[dst + k] = x[a + k] - x[b + k];
            }
        }
    }
    let mut os = shape.to_vec();
    os[t_axis] = t - 1;
    Tensor::new(os, out)
}

/// Factored (2+1)D convolution: mid-channel count and parameter arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2Plus1DSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub k: usize,
    pub mid_channels: MidChannels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MidChannels {
    /// `floor(k^3 * Cin * Cout / (k^2 * Cin + k * Cout))`, which keeps the
    /// factored weight count at or below the full 3D kernel's.
    Matched,
    Fixed(usize),
}

impl Conv2Plus1DSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k % 2 == 0 || self.k == 0 {
            return Err(Error::InvalidConfig(format!("(2+1)D kernel size must be odd, got {}", self.k)));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidConfig("(2+1)D channel counts must be positive".into()));
        }
        Ok(())
    }

    pub fn mid(&self) -> usize {
        match self.mid_channels {
            MidChannels::Fixed(m) => m,
            MidChannels::Matched => matched_mid_channels(self.in_channels, self.out_channels, self.k),
        }
    }

    /// Conv weight elements of the factored pair (biases and norms excluded).
    pub fn weight_count(&self) -> usize {
        let m = self.mid();
        self.k * self.k * self.in_channels * m + self.k * m * self.out_channels
    }

    /// Weight elements of the unfactored k x k x k kernel.
    pub fn full3d_weight_count(&self) -> usize {
        self.k * self.k * self.k * self.in_channels * self.out_channels
    }
}

/// Matched mid-channel formula: `floor(k^3 Cin Cout / (k^2 Cin + k Cout))`.
pub fn matched_mid_channels(cin: usize, cout: usize, k: usize) -> usize {
    (k * k * k * cin * cout / (k * k * cin + k * cout)).max(1)
}

/// A (2+1)D block: spatial `(1, k, k)` stage into `mid` channels, optional
/// normalization and activation, then temporal `(k, 1, 1)` stage. Padding
/// `(k-1)/2` on each factored axis preserves extents at stride 1.
#[derive(Debug, Clone)]
pub struct Conv2Plus1D {
    pub spec: Conv2Plus1DSpec,
    pub spatial: Conv3dLayer,
    pub temporal: Conv3dLayer,
    pub norm: Option<BnLayer>,
    pub activation: Activation,
}

impl Conv2Plus1D {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        spec: Conv2Plus1DSpec,
        norm: bool,
        activation: Activation,
        temporal_stride: usize,
    ) -> Result<Self> {
        Self::new_with_spatial_stride(store, rng, name, spec, norm, activation, temporal_stride, 1)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new_with_spatial_stride<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        spec: Conv2Plus1DSpec,
        norm: bool,
        activation: Activation,
        temporal_stride: usize,
        spatial_stride: usize,
    ) -> Result<Self> {
        spec.validate()?;
        let m = spec.mid();
        let p = (spec.k - 1) / 2;
        let spatial = Conv3dLayer::new(
            store,
            rng,
            &format!("{name}.spatial"),
            spec.in_channels,
            m,
            [1, spec.k, spec.k],
            [1, spatial_stride, spatial_stride],
            [0, p, p],
            false,
        )?;
        let temporal = Conv3dLayer::new(
            store,
            rng,
            &format!("{name}.temporal"),
            m,
            spec.out_channels,
            [spec.k, 1, 1],
            [temporal_stride, 1, 1],
            [p, 0, 0],
            false,
        )?;
        let norm = if norm { Some(BnLayer::new(store, &format!("{name}.norm"), m)?) } else { None };
        Ok(Conv2Plus1D { spec, spatial, temporal, norm, activation })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        mode: Mode,
        updates: &mut Vec<BnUpdate>,
    ) -> Result<NodeId> {
        let mut h = self.spatial.forward(g, store, x)?;
        if let Some(bn) = &self.norm {
            h = bn.forward(g, store, h, mode, updates)?;
        }
        h = self.activation.apply(g, h)?;
        self.temporal.forward(g, store, h)
    }
}

/// Fast-to-slow lateral connection: a temporally strided `(5, 1, 1)` conv
/// widening the fast features to `2 * Cf`, concatenated onto the slow
/// pathway along channels.
#[derive(Debug, Clone)]
pub struct LateralFuse {
    pub conv: Conv3dLayer,
    pub alpha: usize,
    pub fast_channels: usize,
}

impl LateralFuse {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        fast_channels: usize,
        alpha: usize,
    ) -> Result<Self> {
        if alpha == 0 {
            return Err(Error::InvalidConfig("lateral fuse alpha must be positive".into()));
        }
        let conv = Conv3dLayer::new(
            store,
            rng,
            name,
            fast_channels,
            2 * fast_channels,
            [5, 1, 1],
            [alpha, 1, 1],
            [2, 0, 0],
            false,
        )?;
        Ok(LateralFuse { conv, alpha, fast_channels })
    }

    /// Output channel count added to the slow pathway.
    pub fn fused_channels(&self) -> usize {
        2 * self.fast_channels
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        fast: NodeId,
        slow: NodeId,
    ) -> Result<NodeId> {
        let fs = g.shape(fast).to_vec();
        let ss = g.shape(slow).to_vec();
        if fs[2] % self.alpha != 0 {
            return Err(Error::ShapeMismatch(format!(
                "fast temporal extent {} not divisible by alpha {}",
                fs[2], self.alpha
            )));
        }
        if fs[2] / self.alpha != ss[2] {
            return Err(Error::ShapeMismatch(format!(
                "fast temporal extent {} / alpha {} does not match slow extent {}",
                fs[2], self.alpha, ss[2]
            )));
        }
        let lateral = self.conv.forward(g, store, fast)?;
        ops::concat_channels(g, slow, lateral)
    }
}
