//! The two classifiers under study, assembled from the op and block library:
//!
//! * `SlowFast`: two 3D pathways — a slow one over every `alpha`-th frame at
//!   full width and a lightweight fast one over all frames — joined by
//!   lateral connections after the stem and after each stage, ending in
//!   pooled concatenation and a linear head.
//! * `Tsm`: a 2D residual backbone over frames folded into the batch axis,
//!   with a temporal channel shift inside each residual branch and a uniform
//!   average of per-frame logits as the clip consensus.
//!
//! Construction is deterministic: identical (config, seed) produce
//! bit-identical parameters in identical registration order.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::layers::{BnLayer, BnUpdate, Conv2dLayer, Conv3dLayer, LinearLayer, Mode};
use crate::ops::{self, Activation};
use crate::optim::ParamStore;
use crate::rng;
use crate::tensor::Tensor;
use crate::video::{
    tsm_shift, Conv2Plus1D, Conv2Plus1DSpec, Frac, LateralFuse, MidChannels, ShiftSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    SlowFast,
    Tsm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DownsampleStyle {
    MaxPool,
    StridedConv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvStyle {
    Full3d,
    TwoPlusOneD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    Rgb,
    Diff,
}

impl std::fmt::Display for InputMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InputMode::Rgb => "rgb",
            InputMode::Diff => "diff",
        })
    }
}

/// Every architectural choice as data. Parameter count is a pure function of
/// this struct (plus nothing else).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub num_classes: usize,
    pub clip_len: usize,
    /// Slow-pathway temporal stride (SlowFast only).
    pub alpha: usize,
    /// Fast/slow channel ratio (SlowFast only).
    pub beta: Frac,
    pub stem_channels: usize,
    pub stage_blocks: Vec<usize>,
    pub activation: Activation,
    pub downsample: DownsampleStyle,
    pub conv_style: ConvStyle,
    /// Temporal shift spec (TSM only; SlowFast ignores it).
    pub shift: ShiftSpec,
    pub input_mode: InputMode,
}

impl ModelConfig {
    pub fn slowfast_micro() -> Self {
        ModelConfig {
            kind: ModelKind::SlowFast,
            num_classes: 4,
            clip_len: 16,
            alpha: 4,
            beta: Frac { num: 1, den: 8 },
            stem_channels: 16,
            stage_blocks: vec![1, 1, 1],
            activation: Activation::Elu,
            downsample: DownsampleStyle::MaxPool,
            conv_style: ConvStyle::TwoPlusOneD,
            shift: ShiftSpec::none(),
            input_mode: InputMode::Rgb,
        }
    }

    pub fn tsm_micro() -> Self {
        ModelConfig {
            kind: ModelKind::Tsm,
            num_classes: 4,
            clip_len: 16,
            alpha: 4,
            beta: Frac { num: 1, den: 8 },
            stem_channels: 16,
            stage_blocks: vec![1, 1, 1],
            activation: Activation::Elu,
            downsample: DownsampleStyle::MaxPool,
            conv_style: ConvStyle::Full3d,
            shift: ShiftSpec::default(),
            input_mode: InputMode::Rgb,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("num_classes must be at least 2".into()));
        }
        if self.clip_len == 0 {
            return Err(Error::InvalidConfig("clip_len must be positive".into()));
        }
        if self.stem_channels == 0 {
            return Err(Error::InvalidConfig("stem_channels must be positive".into()));
        }
        if self.stage_blocks.is_empty() {
            return Err(Error::InvalidConfig("stage_blocks must not be empty".into()));
        }
        for (i, &b) in self.stage_blocks.iter().enumerate() {
            if b == 0 {
                return Err(Error::InvalidConfig(format!("stage {i} has zero blocks")));
            }
        }
        self.shift.validate()?;
        if self.kind == ModelKind::SlowFast {
            if self.alpha == 0 {
                return Err(Error::InvalidConfig("alpha must be positive".into()));
            }
            if self.clip_len % self.alpha != 0 {
                return Err(Error::InvalidConfig(format!(
                    "clip_len {} must be divisible by alpha {}",
                    self.clip_len, self.alpha
                )));
            }
            if self.beta.num == 0 {
                return Err(Error::InvalidConfig("beta must be positive".into()));
            }
        }
        if self.activation == Activation::Identity {
            return Err(Error::InvalidConfig("model activation must be elu or relu".into()));
        }
        Ok(())
    }

    /// Stage output widths: `stem * 2^i`.
    fn widths(&self) -> Vec<usize> {
        (0..self.stage_blocks.len()).map(|i| self.stem_channels << i).collect()
    }

    fn fast_width(&self, slow_width: usize) -> usize {
        self.beta.of(slow_width).max(1)
    }

    /// Default identifier for logit records: kind plus input mode.
    pub fn default_model_id(&self) -> String {
        let kind = match self.kind {
            ModelKind::SlowFast => "slowfast",
            ModelKind::Tsm => "tsm",
        };
        format!("{kind}-{}", self.input_mode)
    }

    /// Canonical `key = value` text, sorted by key; the checkpoint stores and
    /// hashes exactly this block.
    pub fn canonical_text(&self) -> String {
        let mut lines = vec![
            format!(
                "model.activation = {}",
                match self.activation {
                    Activation::Elu => "elu",
                    Activation::Relu => "relu",
                    Activation::Identity => "identity",
                }
            ),
            format!("model.alpha = {}", self.alpha),
            format!("model.beta = {}", self.beta),
            format!("model.clip_len = {}", self.clip_len),
            format!(
                "model.conv_style = {}",
                match self.conv_style {
                    ConvStyle::Full3d => "full3d",
                    ConvStyle::TwoPlusOneD => "two_plus_one_d",
                }
            ),
            format!(
                "model.downsample = {}",
                match self.downsample {
                    DownsampleStyle::MaxPool => "maxpool",
                    DownsampleStyle::StridedConv => "strided_conv",
                }
            ),
            format!("model.input_mode = {}", self.input_mode),
            format!(
                "model.kind = {}",
                match self.kind {
                    ModelKind::SlowFast => "slowfast",
                    ModelKind::Tsm => "tsm",
                }
            ),
            format!("model.num_classes = {}", self.num_classes),
            format!("model.shift_backward = {}", self.shift.fraction_backward),
            format!("model.shift_forward = {}", self.shift.fraction_forward),
            format!("model.shift_residual_embedding = {}", self.shift.residual_embedding),
            format!(
                "model.stage_blocks = {}",
                self.stage_blocks.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(",")
            ),
            format!("model.stem_channels = {}", self.stem_channels),
        ];
        lines.sort();
        lines.join("\n") + "\n"
    }

    /// Stable hash of the canonical text, used to reject checkpoint/config
    /// mismatches.
    pub fn config_hash(&self) -> u64 {
        rng::hash_str(&self.canonical_text())
    }

    /// Parse one `model.*` key; unknown keys are reported to the caller.
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<bool> {
        let v = value.trim();
        match key {
            "model.kind" => {
                self.kind = match v {
                    "slowfast" => ModelKind::SlowFast,
                    "tsm" => ModelKind::Tsm,
                    _ => return Err(Error::InvalidConfig(format!("unknown model.kind `{v}`"))),
                }
            }
            "model.num_classes" => self.num_classes = parse_num(key, v)?,
            "model.clip_len" => self.clip_len = parse_num(key, v)?,
            "model.alpha" => self.alpha = parse_num(key, v)?,
            "model.beta" => self.beta = Frac::parse(v)?,
            "model.stem_channels" => self.stem_channels = parse_num(key, v)?,
            "model.stage_blocks" => {
                self.stage_blocks = v
                    .split(',')
                    .map(|p| p.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::InvalidConfig(format!("bad stage_blocks `{v}`")))?;
            }
            "model.activation" => {
                self.activation = match v {
                    "elu" => Activation::Elu,
                    "relu" => Activation::Relu,
                    _ => return Err(Error::InvalidConfig(format!("unknown activation `{v}`"))),
                }
            }
            "model.downsample" => {
                self.downsample = match v {
                    "maxpool" => DownsampleStyle::MaxPool,
                    "strided_conv" => DownsampleStyle::StridedConv,
                    _ => return Err(Error::InvalidConfig(format!("unknown downsample `{v}`"))),
                }
            }
            "model.conv_style" => {
                self.conv_style = match v {
                    "full3d" => ConvStyle::Full3d,
                    "two_plus_one_d" => ConvStyle::TwoPlusOneD,
                    _ => return Err(Error::InvalidConfig(format!("unknown conv_style `{v}`"))),
                }
            }
            "model.shift_forward" => self.shift.fraction_forward = Frac::parse(v)?,
            "model.shift_backward" => self.shift.fraction_backward = Frac::parse(v)?,
            "model.shift_residual_embedding" => {
                self.shift.residual_embedding = parse_bool(key, v)?;
            }
            "model.input_mode" => {
                self.input_mode = match v {
                    "rgb" => InputMode::Rgb,
                    "diff" => InputMode::Diff,
                    _ => return Err(Error::InvalidConfig(format!("unknown input_mode `{v}`"))),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

fn parse_num(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>().map_err(|_| Error::InvalidConfig(format!("bad value for {key}: `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("bad bool for {key}: `{v}`"))),
    }
}

/// Parse a full config text into a ModelConfig starting from kind defaults.
pub fn model_config_from_text(text: &str) -> Result<ModelConfig> {
    let mut kind = ModelKind::Tsm;
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            if k.trim() == "model.kind" {
                kind = match v.trim() {
                    "slowfast" => ModelKind::SlowFast,
                    "tsm" => ModelKind::Tsm,
                    other => return Err(Error::InvalidConfig(format!("unknown model.kind `{other}`"))),
                };
            }
        }
    }
    let mut cfg = match kind {
        ModelKind::SlowFast => ModelConfig::slowfast_micro(),
        ModelKind::Tsm => ModelConfig::tsm_micro(),
    };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            let k = k.trim();
            if k.starts_with("model.") {
                cfg.apply_key(k, v.trim())?;
            }
        }
    }
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// TSM network
// ---------------------------------------------------------------------------

enum Conv2dUnit {
    Plain(Conv2dLayer),
}

impl Conv2dUnit {
    fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        match self {
            Conv2dUnit::Plain(c) => c.forward(g, store, x),
        }
    }
}

struct TsmBlock {
    conv1: Conv2dUnit,
    bn1: BnLayer,
    conv2: Conv2dUnit,
    bn2: BnLayer,
    proj: Option<(Conv2dLayer, BnLayer)>,
    in_channels: usize,
}

impl TsmBlock {
    #[allow(clippy::too_many_arguments)]
    fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        frames: usize,
        shift: &ShiftSpec,
        act: Activation,
        mode: Mode,
        updates: &mut Vec<BnUpdate>,
    ) -> Result<NodeId> {
        let apply_shift = !shift.is_zero() && frames > 1;
        let _ = self.in_channels;
        // Residual embedding shifts only the branch input; trunk mode shifts
        // the block input once and both paths see it.
        let (trunk, branch_in) = if apply_shift {
            if shift.residual_embedding {
                (x, tsm_shift(g, x, shift, Some(frames))?)
            } else {
                let y = tsm_shift(g, x, shift, Some(frames))?;
                (y, y)
            }
        } else {
            (x, x)
        };
        let mut h = self.conv1.forward(g, store, branch_in)?;
        h = self.bn1.forward(g, store, h, mode, updates)?;
        h = act.apply(g, h)?;
        h = self.conv2.forward(g, store, h)?;
        h = self.bn2.forward(g, store, h, mode, updates)?;
        let skip = match &self.proj {
            Some((conv, bn)) => {
                let p = conv.forward(g, store, trunk)?;
                bn.forward(g, store, p, mode, updates)?
            }
            None => trunk,
        };
        let sum = ops::add(g, skip, h)?;
        act.apply(g, sum)
    }
}

struct TsmStage {
    pool_entry: bool,
    blocks: Vec<TsmBlock>,
}

struct TsmNet {
    stem_conv: Conv2dLayer,
    stem_bn: BnLayer,
    stem_pool: bool,
    stages: Vec<TsmStage>,
    head: LinearLayer,
}

fn build_tsm(config: &ModelConfig, rng: &mut ChaCha8Rng, store: &mut ParamStore) -> Result<TsmNet> {
    let widths = config.widths();
    let pool_style = config.downsample == DownsampleStyle::MaxPool;
    let stem_stride = if pool_style { 1 } else { 2 };
    let stem_conv = Conv2dLayer::new(
        store,
        rng,
        "stem.conv",
        3,
        config.stem_channels,
        [3, 3],
        [stem_stride, stem_stride],
        [1, 1],
        false,
    )?;
    let stem_bn = BnLayer::new(store, "stem.norm", config.stem_channels)?;

    let mut stages = Vec::new();
    let mut in_c = config.stem_channels;
    for (si, (&nblocks, &width)) in config.stage_blocks.iter().zip(&widths).enumerate() {
        let downsamples = si > 0;
        let mut blocks = Vec::new();
        for bi in 0..nblocks {
            let name = format!("stage{si}.block{bi}");
            let stride = if downsamples && bi == 0 && !pool_style { 2 } else { 1 };
            let conv1 = Conv2dLayer::new(
                store, rng, &format!("{name}.conv1"), in_c, width, [3, 3], [stride, stride], [1, 1], false,
            )?;
            let bn1 = BnLayer::new(store, &format!("{name}.norm1"), width)?;
            let conv2 = Conv2dLayer::new(
                store, rng, &format!("{name}.conv2"), width, width, [3, 3], [1, 1], [1, 1], false,
            )?;
            let bn2 = BnLayer::new(store, &format!("{name}.norm2"), width)?;
            let proj = if in_c != width || stride != 1 {
                let conv = Conv2dLayer::new(
                    store, rng, &format!("{name}.proj"), in_c, width, [1, 1], [stride, stride], [0, 0], false,
                )?;
                let bn = BnLayer::new(store, &format!("{name}.proj_norm"), width)?;
                Some((conv, bn))
            } else {
                None
            };
            blocks.push(TsmBlock { conv1: Conv2dUnit::Plain(conv1), bn1, conv2: Conv2dUnit::Plain(conv2), bn2, proj, in_channels: in_c });
            in_c = width;
        }
        stages.push(TsmStage { pool_entry: downsamples && pool_style, blocks });
    }
    let head = LinearLayer::new(store, rng, "head", in_c, config.num_classes)?;
    Ok(TsmNet { stem_conv, stem_bn, stem_pool: pool_style, stages, head })
}

// ---------------------------------------------------------------------------
// SlowFast network
// ---------------------------------------------------------------------------

enum Conv3dUnit {
    Full(Conv3dLayer),
    Factored(Conv2Plus1D),
}

impl Conv3dUnit {
    fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        mode: Mode,
        updates: &mut Vec<BnUpdate>,
    ) -> Result<NodeId> {
        match self {
            Conv3dUnit::Full(c) => c.forward(g, store, x),
            Conv3dUnit::Factored(c) => c.forward(g, store, x, mode, updates),
        }
    }
}

struct Block3d {
    conv1: Conv3dUnit,
    bn1: BnLayer,
    conv2: Conv3dUnit,
    bn2: BnLayer,
    proj: Option<(Conv3dLayer, BnLayer)>,
}

impl Block3d {
    fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        act: Activation,
        mode: Mode,
        updates: &mut Vec<BnUpdate>,
    ) -> Result<NodeId> {
        let mut h = self.conv1.forward(g, store, x, mode, updates)?;
        h = self.bn1.forward(g, store, h, mode, updates)?;
        h = act.apply(g, h)?;
        h = self.conv2.forward(g, store, h, mode, updates)?;
        h = self.bn2.forward(g, store, h, mode, updates)?;
        let skip = match &self.proj {
            Some((conv, bn)) => {
                let p = conv.forward(g, store, x)?;
                bn.forward(g, store, p, mode, updates)?
            }
            None => x,
        };
        let sum = ops::add(g, skip, h)?;
        act.apply(g, sum)
    }
}

struct Stage3d {
    pool_entry: bool,
    blocks: Vec<Block3d>,
}

struct Pathway {
    stem_conv: Conv3dLayer,
    stem_bn: BnLayer,
    stages: Vec<Stage3d>,
}

struct SlowFastNet {
    slow: Pathway,
    fast: Pathway,
    /// Lateral connections: one after the stem, one after each stage.
    fuses: Vec<LateralFuse>,
    head: LinearLayer,
}

#[allow(clippy::too_many_arguments)]
fn build_conv_unit(
    config: &ModelConfig,
    rng: &mut ChaCha8Rng,
    store: &mut ParamStore,
    name: &str,
    cin: usize,
    cout: usize,
    spatial_stride: usize,
) -> Result<Conv3dUnit> {
    match config.conv_style {
        ConvStyle::Full3d => Ok(Conv3dUnit::Full(Conv3dLayer::new(
            store,
            rng,
            name,
            cin,
            cout,
            [3, 3, 3],
            [1, spatial_stride, spatial_stride],
            [1, 1, 1],
            false,
        )?)),
        ConvStyle::TwoPlusOneD => {
            let spec = Conv2Plus1DSpec { in_channels: cin, out_channels: cout, k: 3, mid_channels: MidChannels::Matched };
            Ok(Conv3dUnit::Factored(Conv2Plus1D::new_with_spatial_stride(
                store,
                rng,
                name,
                spec,
                true,
                config.activation,
                1,
                spatial_stride,
            )?))
        }
    }
}

fn build_pathway(
    config: &ModelConfig,
    rng: &mut ChaCha8Rng,
    store: &mut ParamStore,
    prefix: &str,
    stem_out: usize,
    stage_widths: &[usize],
    stem_temporal_kernel: usize,
    fuse_extra: impl Fn(usize) -> usize,
) -> Result<Pathway> {
    let pool_style = config.downsample == DownsampleStyle::MaxPool;
    let stem_stride = if pool_style { 1 } else { 2 };
    let tp = (stem_temporal_kernel - 1) / 2;
    let stem_conv = Conv3dLayer::new(
        store,
        rng,
        &format!("{prefix}.stem.conv"),
        3,
        stem_out,
        [stem_temporal_kernel, 3, 3],
        [1, stem_stride, stem_stride],
        [tp, 1, 1],
        false,
    )?;
    let stem_bn = BnLayer::new(store, &format!("{prefix}.stem.norm"), stem_out)?;

    let mut stages = Vec::new();
    let mut in_c = stem_out + fuse_extra(stem_out);
    for (si, (&nblocks, &width)) in config.stage_blocks.iter().zip(stage_widths).enumerate() {
        let downsamples = si > 0;
        let mut blocks = Vec::new();
        for bi in 0..nblocks {
            let name = format!("{prefix}.stage{si}.block{bi}");
            let stride = if downsamples && bi == 0 && !pool_style { 2 } else { 1 };
            let conv1 = build_conv_unit(config, rng, store, &format!("{name}.conv1"), in_c, width, stride)?;
            let bn1 = BnLayer::new(store, &format!("{name}.norm1"), width)?;
            let conv2 = build_conv_unit(config, rng, store, &format!("{name}.conv2"), width, width, 1)?;
            let bn2 = BnLayer::new(store, &format!("{name}.norm2"), width)?;
            let proj = if in_c != width || stride != 1 {
                let conv = Conv3dLayer::new(
                    store,
                    rng,
                    &format!("{name}.proj"),
                    in_c,
                    width,
                    [1, 1, 1],
                    [1, stride, stride],
                    [0, 0, 0],
                    false,
                )?;
                let bn = BnLayer::new(store, &format!("{name}.proj_norm"), width)?;
                Some((conv, bn))
            } else {
                None
            };
            blocks.push(Block3d { conv1, bn1, conv2, bn2, proj });
            in_c = width;
        }
        in_c = width + fuse_extra(width);
        stages.push(Stage3d { pool_entry: downsamples && pool_style, blocks });
    }
    Ok(Pathway { stem_conv, stem_bn, stages })
}

fn build_slowfast(config: &ModelConfig, rng: &mut ChaCha8Rng, store: &mut ParamStore) -> Result<SlowFastNet> {
    let widths = config.widths();
    let fast_widths: Vec<usize> = widths.iter().map(|&w| config.fast_width(w)).collect();
    let fast_stem = config.fast_width(config.stem_channels);

    // Slow pathway receives 2*Cf fused channels after the stem and each stage.
    let slow = build_pathway(config, rng, store, "slow", config.stem_channels, &widths, 1, |w| {
        2 * config.fast_width(w)
    })?;
    let fast = build_pathway(config, rng, store, "fast", fast_stem, &fast_widths, 3, |_| 0)?;

    let mut fuses = Vec::new();
    fuses.push(LateralFuse::new(store, rng, "fuse.stem", fast_stem, config.alpha)?);
    for (si, &fw) in fast_widths.iter().enumerate() {
        fuses.push(LateralFuse::new(store, rng, &format!("fuse.stage{si}"), fw, config.alpha)?);
    }

    let slow_final = *widths.last().unwrap() + 2 * *fast_widths.last().unwrap();
    let head_in = slow_final + *fast_widths.last().unwrap();
    let head = LinearLayer::new(store, rng, "head", head_in, config.num_classes)?;
    Ok(SlowFastNet { slow, fast, fuses, head })
}

// ---------------------------------------------------------------------------
// Model: uniform classify-to-logits interface
// ---------------------------------------------------------------------------

enum Arch {
    SlowFast(SlowFastNet),
    Tsm(TsmNet),
}

pub struct Model {
    pub config: ModelConfig,
    pub seed: u64,
    store: ParamStore,
    arch: Arch,
}

/// Deterministic model construction from (config, seed).
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model> {
    config.validate()?;
    let mut store = ParamStore::new();
    let mut init_rng = rng::stream(seed, "init", &[]);
    let arch = match config.kind {
        ModelKind::SlowFast => Arch::SlowFast(build_slowfast(config, &mut init_rng, &mut store)?),
        ModelKind::Tsm => Arch::Tsm(build_tsm(config, &mut init_rng, &mut store)?),
    };
    Ok(Model { config: config.clone(), seed, store, arch })
}

impl Model {
    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Sum of element counts over trainable parameters.
    pub fn count_parameters(&self) -> usize {
        self.store.count_trainable()
    }

    /// Retarget the model at a different stage: clip length and whether the
    /// temporal shift is active. Parameters are untouched (the shift has
    /// none).
    pub fn with_stage(&mut self, clip_len: usize, shift_enabled: bool) -> Result<()> {
        let mut cfg = self.config.clone();
        cfg.clip_len = clip_len;
        if !shift_enabled {
            cfg.shift = ShiftSpec::none();
        }
        cfg.validate()?;
        self.config = cfg;
        Ok(())
    }

    fn check_clip_len(&self, t: usize) -> Result<()> {
        if t == self.config.clip_len {
            return Ok(());
        }
        if self.config.clip_len == 1 {
            return Err(Error::InvalidConfig(format!(
                "model is in single-frame mode but received {t} frames"
            )));
        }
        Err(Error::ShapeMismatch(format!(
            "model expects clip_len {} but received {t} frames",
            self.config.clip_len
        )))
    }

    /// Record the forward pass on a graph; returns the `[N, num_classes]`
    /// pre-softmax logits node. Never mutates the model: batch-norm
    /// running-stat updates are appended to `updates` for the caller.
    pub fn forward(
        &self,
        g: &mut Graph,
        input: NodeId,
        mode: Mode,
        updates: &mut Vec<BnUpdate>,
    ) -> Result<NodeId> {
        self.forward_on(g, &self.store, input, mode, updates)
    }

    /// Forward pass reading parameters from an external store (the gradient
    /// checker perturbs entries between evaluations). The store must have the
    /// same layout as this model's own.
    pub fn forward_on(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        input: NodeId,
        mode: Mode,
        updates: &mut Vec<BnUpdate>,
    ) -> Result<NodeId> {
        let shape = g.shape(input).to_vec();
        if shape.len() != 5 {
            return Err(Error::ShapeMismatch(format!(
                "model input must be [N, C, T, H, W], got {shape:?}"
            )));
        }
        if shape[1] != 3 {
            return Err(Error::ShapeMismatch(format!("model input must have 3 channels, got {}", shape[1])));
        }
        let t = shape[2];
        self.check_clip_len(t)?;
        match &self.arch {
            Arch::Tsm(net) => self.forward_tsm(net, g, store, input, t, mode, updates),
            Arch::SlowFast(net) => self.forward_slowfast(net, g, store, input, mode, updates),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn forward_tsm(
        &self,
        net: &TsmNet,
        g: &mut Graph,
        store: &ParamStore,
        input: NodeId,
        frames: usize,
        mode: Mode,
        updates: &mut Vec<BnUpdate>,
    ) -> Result<NodeId> {
        let act = self.config.activation;
        let mut x = ops::shape::fold_frames(g, input)?;
        x = net.stem_conv.forward(g, store, x)?;
        x = net.stem_bn.forward(g, store, x, mode, updates)?;
        x = act.apply(g, x)?;
        if net.stem_pool {
            x = ops::maxpool2d(g, x, [2, 2], [2, 2])?;
        }
        for stage in &net.stages {
            if stage.pool_entry {
                x = ops::maxpool2d(g, x, [2, 2], [2, 2])?;
            }
            for block in &stage.blocks {
                x = block.forward(g, store, x, frames, &self.config.shift, act, mode, updates)?;
            }
        }
        let pooled = ops::global_avg_pool(g, x)?;
        let per_frame = net.head.forward(g, store, pooled)?;
        ops::frame_mean(g, per_frame, frames)
    }

    fn forward_slowfast(
        &self,
        net: &SlowFastNet,
        g: &mut Graph,
        store: &ParamStore,
        input: NodeId,
        mode: Mode,
        updates: &mut Vec<BnUpdate>,
    ) -> Result<NodeId> {
        let act = self.config.activation;
        let slow_in = ops::subsample_temporal(g, input, self.config.alpha)?;

        let run_stem = |g: &mut Graph, p: &Pathway, x: NodeId, updates: &mut Vec<BnUpdate>| -> Result<NodeId> {
            let mut h = p.stem_conv.forward(g, store, x)?;
            h = p.stem_bn.forward(g, store, h, mode, updates)?;
            h = act.apply(g, h)?;
            if self.config.downsample == DownsampleStyle::MaxPool {
                h = ops::maxpool3d(g, h, [1, 2, 2], [1, 2, 2])?;
            }
            Ok(h)
        };
        let mut slow = run_stem(g, &net.slow, slow_in, updates)?;
        let mut fast = run_stem(g, &net.fast, input, updates)?;
        slow = net.fuses[0].forward(g, store, fast, slow)?;

        for (si, (sstage, fstage)) in net.slow.stages.iter().zip(&net.fast.stages).enumerate() {
            if sstage.pool_entry {
                slow = ops::maxpool3d(g, slow, [1, 2, 2], [1, 2, 2])?;
                fast = ops::maxpool3d(g, fast, [1, 2, 2], [1, 2, 2])?;
            }
            for block in &sstage.blocks {
                slow = block.forward(g, store, slow, act, mode, updates)?;
            }
            for block in &fstage.blocks {
                fast = block.forward(g, store, fast, act, mode, updates)?;
            }
            slow = net.fuses[si + 1].forward(g, store, fast, slow)?;
        }

        let slow_feat = ops::global_avg_pool(g, slow)?;
        let fast_feat = ops::global_avg_pool(g, fast)?;
        let features = ops::concat_channels(g, slow_feat, fast_feat)?;
        net.head.forward(g, store, features)
    }

    /// Eval-mode logits for a batch, on a throwaway graph.
    pub fn eval_logits(&self, batch: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let input = g.leaf(batch.clone());
        let mut updates = Vec::new();
        let logits = self.forward(&mut g, input, Mode::Eval, &mut updates)?;
        Ok(g.output(logits))
    }

    /// Train-mode logits for a batch, on a throwaway graph, discarding
    /// running-stat updates. Used by tests and gradient checks.
    pub fn train_logits(&self, batch: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let input = g.leaf(batch.clone());
        let mut updates = Vec::new();
        let logits = self.forward(&mut g, input, Mode::Train, &mut updates)?;
        Ok(g.output(logits))
    }
}
