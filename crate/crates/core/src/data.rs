//! Synthetic video data, dataset file I/O, clip sampling, and the training
//! augmentation menu.
//!
//! The synthetic task is 4-way motion direction: a single gray square drifts
//! with constant velocity (toroidal wrap) over a black background. Labels are
//! recoverable from frame-to-frame displacement alone and any single frame is
//! uninformative by construction, which is exactly the property the temporal
//! mechanisms under test must exploit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::models::InputMode;
use crate::rng;
use crate::tensor::Tensor;
use crate::video::residual_frames;

pub const DATASET_MAGIC: &[u8; 8] = b"VIDS0001";

/// A labeled clip laid out `[C=3, T, H, W]` with values in [0, 1].
#[derive(Debug, Clone)]
pub struct VideoClip {
    pub id: String,
    pub frames: Tensor,
    pub label: usize,
}

/// Per-channel normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn identity(channels: usize) -> Self {
        ChannelStats { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }
}

/// An in-memory dataset: clips plus the train-split RGB statistics recorded
/// in the file header.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub clips: Vec<VideoClip>,
    pub num_classes: usize,
    pub stats: ChannelStats,
}

impl Dataset {
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.clips[0].frames.shape();
        (s[0], s[1], s[2], s[3])
    }

    /// Validation membership: a deterministic 10% split by id hash.
    pub fn is_validation(id: &str) -> bool {
        rng::hash_str(id) % 10 == 0
    }

    pub fn train_clips(&self) -> Vec<&VideoClip> {
        self.clips.iter().filter(|c| !Self::is_validation(&c.id)).collect()
    }

    pub fn val_clips(&self) -> Vec<&VideoClip> {
        self.clips.iter().filter(|c| Self::is_validation(&c.id)).collect()
    }

    /// Per-channel statistics of residual frames over the training split,
    /// computed on demand (the file header has room only for the RGB stats).
    pub fn diff_stats(&self) -> ChannelStats {
        let c = self.dims().0;
        let mut sum = vec![0.0; c];
        let mut sumsq = vec![0.0; c];
        let mut count = vec![0usize; c];
        for clip in self.train_clips() {
            let diff = residual_frames(&clip.frames).expect("clips have T >= 2");
            let s = diff.shape();
            let per_chan = s[1] * s[2] * s[3];
            for ci in 0..c {
                let chunk = &diff.data()[ci * per_chan..(ci + 1) * per_chan];
                sum[ci] += chunk.iter().sum::<f64>();
                sumsq[ci] += chunk.iter().map(|v| v * v).sum::<f64>();
                count[ci] += per_chan;
            }
        }
        finalize_stats(&sum, &sumsq, &count)
    }
}

fn finalize_stats(sum: &[f64], sumsq: &[f64], count: &[usize]) -> ChannelStats {
    let mut mean = Vec::with_capacity(sum.len());
    let mut std = Vec::with_capacity(sum.len());
    for i in 0..sum.len() {
        let n = count[i].max(1) as f64;
        let m = sum[i] / n;
        let var = (sumsq[i] / n - m * m).max(0.0);
        mean.push(m);
        std.push(var.sqrt().max(1e-8));
    }
    ChannelStats { mean, std }
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

/// Parameters of the synthetic motion-direction dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub frame_size: usize,
    pub clip_frames: usize,
    pub object_size_range: (usize, usize),
    pub speed_range: (usize, usize),
    pub noise_std: f64,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_classes: 4,
            frame_size: 32,
            clip_frames: 24,
            object_size_range: (8, 12),
            speed_range: (1, 2),
            noise_std: 0.02,
            samples_per_class: 100,
            seed: 42,
        }
    }
}

/// Unit motion directions per class: up, down, left, right, then diagonals.
const DIRECTIONS: [(i64, i64); 8] =
    [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)];

/// Class permutation induced by a horizontal flip of the frame: left and
/// right (and the diagonal pairs) swap. Self-inverse.
pub fn mirror_class_permutation(num_classes: usize) -> Vec<usize> {
    let full = [0usize, 1, 3, 2, 5, 4, 7, 6];
    full[..num_classes].to_vec()
}

/// Class permutation induced by playing the clip backwards: every direction
/// maps to its opposite. Self-inverse.
pub fn reverse_class_permutation(num_classes: usize) -> Vec<usize> {
    let full = [1usize, 0, 3, 2, 7, 6, 5, 4];
    full[..num_classes].to_vec()
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_classes > DIRECTIONS.len() {
            return Err(Error::InvalidConfig(format!(
                "num_classes must be in [2, {}], got {}",
                DIRECTIONS.len(),
                self.num_classes
            )));
        }
        if self.samples_per_class == 0 {
            return Err(Error::InvalidConfig("samples_per_class must be positive".into()));
        }
        if self.clip_frames < 2 {
            return Err(Error::InvalidConfig("clip_frames must be at least 2".into()));
        }
        if self.object_size_range.0 == 0 || self.object_size_range.0 > self.object_size_range.1 {
            return Err(Error::InvalidConfig("bad object_size_range".into()));
        }
        if self.object_size_range.1 >= self.frame_size {
            return Err(Error::InvalidConfig(format!(
                "object size {} does not fit a {} pixel frame",
                self.object_size_range.1, self.frame_size
            )));
        }
        if self.speed_range.0 < 1 || self.speed_range.0 > self.speed_range.1 {
            return Err(Error::InvalidConfig("speed must be at least 1 pixel/frame".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::InvalidConfig("noise_std must be non-negative".into()));
        }
        Ok(())
    }

    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<bool> {
        let v = value.trim();
        let num = |k: &str| -> Result<usize> {
            v.parse::<usize>().map_err(|_| Error::InvalidConfig(format!("bad value for {k}: `{v}`")))
        };
        match key {
            "data.num_classes" => self.num_classes = num(key)?,
            "data.frame_size" => self.frame_size = num(key)?,
            "data.clip_frames" => self.clip_frames = num(key)?,
            "data.object_min" => self.object_size_range.0 = num(key)?,
            "data.object_max" => self.object_size_range.1 = num(key)?,
            "data.speed_min" => self.speed_range.0 = num(key)?,
            "data.speed_max" => self.speed_range.1 = num(key)?,
            "data.noise_std" => {
                self.noise_std =
                    v.parse::<f64>().map_err(|_| Error::InvalidConfig(format!("bad value for {key}: `{v}`")))?
            }
            "data.samples_per_class" => self.samples_per_class = num(key)?,
            "data.seed" => {
                self.seed =
                    v.parse::<u64>().map_err(|_| Error::InvalidConfig(format!("bad value for {key}: `{v}`")))?
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn canonical_text(&self) -> String {
        format!(
            "data.clip_frames = {}\ndata.frame_size = {}\ndata.noise_std = {}\ndata.num_classes = {}\n\
             data.object_max = {}\ndata.object_min = {}\ndata.samples_per_class = {}\ndata.seed = {}\n\
             data.speed_max = {}\ndata.speed_min = {}\n",
            self.clip_frames,
            self.frame_size,
            self.noise_std,
            self.num_classes,
            self.object_size_range.1,
            self.object_size_range.0,
            self.samples_per_class,
            self.seed,
            self.speed_range.1,
            self.speed_range.0,
        )
    }
}

/// Generate the synthetic dataset: one moving square per clip, constant
/// per-class velocity direction, toroidal wrap, optional Gaussian pixel noise
/// clamped back into [0, 1]. Deterministic given the spec seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let f = spec.frame_size;
    let t = spec.clip_frames;
    let mut clips = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
    let noise_dist = if spec.noise_std > 0.0 {
        Some(Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidConfig(e.to_string()))?)
    } else {
        None
    };

    let mut index = 0usize;
    for class in 0..spec.num_classes {
        let (dy, dx) = DIRECTIONS[class];
        for _ in 0..spec.samples_per_class {
            let mut r = rng::stream(spec.seed, "data", &[index as u64]);
            let size = r.gen_range(spec.object_size_range.0..=spec.object_size_range.1);
            let speed = r.gen_range(spec.speed_range.0..=spec.speed_range.1) as i64;
            let gray = r.gen_range(0.25..1.0);
            let y0 = r.gen_range(0..f) as i64;
            let x0 = r.gen_range(0..f) as i64;

            let mut data = vec![0.0f64; 3 * t * f * f];
            for ti in 0..t {
                let ty = y0 + dy * speed * ti as i64;
                let tx = x0 + dx * speed * ti as i64;
                for oy in 0..size {
                    let y = (ty + oy as i64).rem_euclid(f as i64) as usize;
                    for ox in 0..size {
                        let x = (tx + ox as i64).rem_euclid(f as i64) as usize;
                        for c in 0..3 {
                            data[((c * t + ti) * f + y) * f + x] = gray;
                        }
                    }
                }
            }
            if let Some(dist) = &noise_dist {
                for v in &mut data {
                    *v = (*v + dist.sample(&mut r)).clamp(0.0, 1.0);
                }
            }
            clips.push(VideoClip {
                id: format!("clip{index:05}"),
                frames: Tensor::new(vec![3, t, f, f], data)?,
                label: class,
            });
            index += 1;
        }
    }

    // Header stats come from the training split only.
    let mut sum = vec![0.0; 3];
    let mut sumsq = vec![0.0; 3];
    let mut count = vec![0usize; 3];
    for clip in clips.iter().filter(|c| !Dataset::is_validation(&c.id)) {
        let per_chan = t * f * f;
        for ci in 0..3 {
            let chunk = &clip.frames.data()[ci * per_chan..(ci + 1) * per_chan];
            sum[ci] += chunk.iter().sum::<f64>();
            sumsq[ci] += chunk.iter().map(|v| v * v).sum::<f64>();
            count[ci] += per_chan;
        }
    }
    let stats = finalize_stats(&sum, &sumsq, &count);
    Ok(Dataset { clips, num_classes: spec.num_classes, stats })
}

// ---------------------------------------------------------------------------
// Dataset file I/O (bit-exact)
// ---------------------------------------------------------------------------

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Write a dataset file: magic, `u32` clip count / C / T / H / W /
/// num_classes, `2C` f64 normalization stats (means then stds), then per clip
/// a `u32` label, `u32` id length, id bytes, and `C*T*H*W` little-endian f32
/// values in `[C, T, H, W]` row-major order.
pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let (c, t, h, w) = ds.dims();
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(DATASET_MAGIC)?;
    for v in [ds.clips.len(), c, t, h, w, ds.num_classes] {
        put_u32(&mut out, v as u32)?;
    }
    for m in &ds.stats.mean {
        out.write_all(&m.to_le_bytes())?;
    }
    for s in &ds.stats.std {
        out.write_all(&s.to_le_bytes())?;
    }
    for clip in &ds.clips {
        if clip.frames.shape() != [c, t, h, w] {
            return Err(Error::ShapeMismatch(format!(
                "clip {} has shape {:?}, dataset is [{c}, {t}, {h}, {w}]",
                clip.id,
                clip.frames.shape()
            )));
        }
        put_u32(&mut out, clip.label as u32)?;
        put_u32(&mut out, clip.id.len() as u32)?;
        out.write_all(clip.id.as_bytes())?;
        let mut buf = Vec::with_capacity(clip.frames.numel() * 4);
        for &v in clip.frames.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format(format!(
            "bad dataset magic {:?} in {}",
            magic,
            path.display()
        )));
    }
    let clip_count = get_u32(&mut r)? as usize;
    let c = get_u32(&mut r)? as usize;
    let t = get_u32(&mut r)? as usize;
    let h = get_u32(&mut r)? as usize;
    let w = get_u32(&mut r)? as usize;
    let num_classes = get_u32(&mut r)? as usize;
    if c == 0 || t == 0 || h == 0 || w == 0 || num_classes == 0 {
        return Err(Error::Format("dataset header has a zero extent".into()));
    }
    let mut mean = Vec::with_capacity(c);
    let mut std = Vec::with_capacity(c);
    for _ in 0..c {
        mean.push(get_f64(&mut r)?);
    }
    for _ in 0..c {
        std.push(get_f64(&mut r)?);
    }

    let numel = c * t * h * w;
    let mut clips = Vec::with_capacity(clip_count);
    let mut raw = vec![0u8; numel * 4];
    for _ in 0..clip_count {
        let label = get_u32(&mut r)? as usize;
        if label >= num_classes {
            return Err(Error::Format(format!("label {label} out of range for {num_classes} classes")));
        }
        let id_len = get_u32(&mut r)? as usize;
        let mut id_bytes = vec![0u8; id_len];
        r.read_exact(&mut id_bytes)?;
        let id = String::from_utf8(id_bytes).map_err(|e| Error::Format(e.to_string()))?;
        r.read_exact(&mut raw)?;
        let mut data = Vec::with_capacity(numel);
        for chunk in raw.chunks_exact(4) {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64;
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Format(format!("clip {id} has a value outside [0, 1]: {v}")));
            }
            data.push(v);
        }
        clips.push(VideoClip { id, frames: Tensor::new(vec![c, t, h, w], data)?, label });
    }
    Ok(Dataset { clips, num_classes, stats: ChannelStats { mean, std } })
}

// ---------------------------------------------------------------------------
// Clip sampling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplePolicy {
    Random,
    Center,
    /// Ten independently sampled windows (the default protocol reading).
    TenRandom,
    /// Ten windows starting at consecutive positions (the alternative
    /// reading, behind this policy flag).
    TenConsecutive,
}

fn extract_window(frames: &Tensor, start: usize, out_frames: usize, stride: usize) -> Tensor {
    let s = frames.shape();
    let (c, t, h, w) = (s[0], s[1], s[2], s[3]);
    let hw = h * w;
    let mut data = vec![0.0; c * out_frames * hw];
    for ci in 0..c {
        for i in 0..out_frames {
            let src_t = (start + i * stride) % t;
            let src = (ci * t + src_t) * hw;
            let dst = (ci * out_frames + i) * hw;
            data[dst..dst + hw].copy_from_slice(&frames.data()[src..src + hw]);
        }
    }
    Tensor::new(vec![c, out_frames, h, w], data).expect("window shape")
}

/// Sample one or more consecutive windows of `out_frames` frames at the given
/// stride. Videos shorter than the required span are looped cyclically.
pub fn sample_clip(
    frames: &Tensor,
    out_frames: usize,
    stride: usize,
    policy: SamplePolicy,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Tensor>> {
    if out_frames == 0 {
        return Err(Error::InvalidConfig("out_frames must be positive".into()));
    }
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be positive".into()));
    }
    let t = frames.shape()[1];
    let span = (out_frames - 1) * stride + 1;
    let start_space = if span <= t { t - span + 1 } else { t };
    let draw = |rng: &mut ChaCha8Rng| rng.gen_range(0..start_space);
    let starts: Vec<usize> = match policy {
        SamplePolicy::Center => vec![if span <= t { (t - span) / 2 } else { 0 }],
        SamplePolicy::Random => vec![draw(rng)],
        SamplePolicy::TenRandom => (0..10).map(|_| draw(rng)).collect(),
        SamplePolicy::TenConsecutive => {
            let s0 = draw(rng);
            (0..10).map(|i| (s0 + i) % start_space).collect()
        }
    };
    Ok(starts.into_iter().map(|s| extract_window(frames, s, out_frames, stride)).collect())
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub base_size: usize,
    pub scale_range: (f64, f64),
    pub crop_size: usize,
    pub horizontal_flip_prob: f64,
    pub lighting_jitter: f64,
    pub contrast_jitter: f64,
    pub corner_crop: bool,
    pub reverse_prob: f64,
    pub stride_choices: Vec<usize>,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        // crop_size = floor(base_size * scale_range.0) so even the smallest
        // scaled frame admits the crop.
        AugmentConfig {
            base_size: 112,
            scale_range: (0.8, 1.25),
            crop_size: 89,
            horizontal_flip_prob: 0.5,
            lighting_jitter: 0.1,
            contrast_jitter: 0.2,
            corner_crop: true,
            reverse_prob: 0.5,
            stride_choices: vec![1, 2],
            seed: 42,
        }
    }
}

impl AugmentConfig {
    /// A no-op configuration at the given native size.
    pub fn identity(size: usize) -> Self {
        AugmentConfig {
            base_size: size,
            scale_range: (1.0, 1.0),
            crop_size: size,
            horizontal_flip_prob: 0.0,
            lighting_jitter: 0.0,
            contrast_jitter: 0.0,
            corner_crop: false,
            reverse_prob: 0.0,
            stride_choices: vec![1],
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_size == 0 || self.crop_size == 0 {
            return Err(Error::InvalidConfig("sizes must be positive".into()));
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidConfig(format!("bad scale_range ({lo}, {hi})")));
        }
        if self.crop_size > (self.base_size as f64 * lo).floor() as usize {
            return Err(Error::InvalidConfig(format!(
                "crop_size {} exceeds floor(base_size * scale_min) = {}",
                self.crop_size,
                (self.base_size as f64 * lo).floor() as usize
            )));
        }
        for p in [self.horizontal_flip_prob, self.reverse_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("probability {p} outside [0, 1]")));
            }
        }
        if self.stride_choices.is_empty() || self.stride_choices.iter().any(|&s| s != 1 && s != 2) {
            return Err(Error::InvalidConfig("stride_choices must be a non-empty subset of {1, 2}".into()));
        }
        Ok(())
    }

    /// RNG for the augmentation decisions of one (epoch, sample) pair.
    pub fn decision_rng(&self, epoch: usize, sample_index: usize) -> ChaCha8Rng {
        rng::stream(self.seed, "augment", &[epoch as u64, sample_index as u64])
    }

    pub fn pick_stride(&self, rng: &mut ChaCha8Rng) -> usize {
        self.stride_choices[rng.gen_range(0..self.stride_choices.len())]
    }

    pub fn canonical_text(&self) -> String {
        format!(
            "augment.base_size = {}\naugment.contrast = {}\naugment.corner_crop = {}\naugment.crop_size = {}\n\
             augment.hflip_prob = {}\naugment.lighting = {}\naugment.reverse_prob = {}\naugment.scale_max = {}\n\
             augment.scale_min = {}\naugment.strides = {}\n",
            self.base_size,
            self.contrast_jitter,
            self.corner_crop,
            self.crop_size,
            self.horizontal_flip_prob,
            self.lighting_jitter,
            self.reverse_prob,
            self.scale_range.1,
            self.scale_range.0,
            self.stride_choices.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        )
    }

    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<bool> {
        let v = value.trim();
        let fnum = |k: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| Error::InvalidConfig(format!("bad value for {k}: `{v}`")))
        };
        match key {
            "augment.base_size" => {
                self.base_size =
                    v.parse().map_err(|_| Error::InvalidConfig(format!("bad value for {key}: `{v}`")))?
            }
            "augment.crop_size" => {
                self.crop_size =
                    v.parse().map_err(|_| Error::InvalidConfig(format!("bad value for {key}: `{v}`")))?
            }
            "augment.scale_min" => self.scale_range.0 = fnum(key)?,
            "augment.scale_max" => self.scale_range.1 = fnum(key)?,
            "augment.hflip_prob" => self.horizontal_flip_prob = fnum(key)?,
            "augment.lighting" => self.lighting_jitter = fnum(key)?,
            "augment.contrast" => self.contrast_jitter = fnum(key)?,
            "augment.reverse_prob" => self.reverse_prob = fnum(key)?,
            "augment.corner_crop" => {
                self.corner_crop = match v {
                    "true" | "1" | "on" => true,
                    "false" | "0" | "off" => false,
                    _ => return Err(Error::InvalidConfig(format!("bad bool for {key}: `{v}`"))),
                }
            }
            "augment.strides" => {
                self.stride_choices = v
                    .split(',')
                    .map(|p| p.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::InvalidConfig(format!("bad strides `{v}`")))?;
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Bilinear resize of every frame to `(out_h, out_w)`, pixel-center aligned.
pub fn resize_bilinear(clip: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let s = clip.shape();
    let (c, t, h, w) = (s[0], s[1], s[2], s[3]);
    if h == out_h && w == out_w {
        return clip.clone();
    }
    let mut out = vec![0.0; c * t * out_h * out_w];
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    for ct in 0..c * t {
        let src = &clip.data()[ct * h * w..(ct + 1) * h * w];
        let dst = &mut out[ct * out_h * out_w..(ct + 1) * out_h * out_w];
        for oy in 0..out_h {
            let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let wy = fy - y0 as f64;
            for ox in 0..out_w {
                let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let wx = fx - x0 as f64;
                let top = src[y0 * w + x0] * (1.0 - wx) + src[y0 * w + x1] * wx;
                let bot = src[y1 * w + x0] * (1.0 - wx) + src[y1 * w + x1] * wx;
                dst[oy * out_w + ox] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    Tensor::new(vec![c, t, out_h, out_w], out).expect("resize shape")
}

/// Crop a `size x size` window at (top, left) from every frame.
pub fn crop(clip: &Tensor, top: usize, left: usize, size: usize) -> Result<Tensor> {
    let s = clip.shape();
    let (c, t, h, w) = (s[0], s[1], s[2], s[3]);
    if top + size > h || left + size > w {
        return Err(Error::ShapeMismatch(format!(
            "crop ({top}, {left}) + {size} exceeds frame {h}x{w}"
        )));
    }
    let mut out = vec![0.0; c * t * size * size];
    for ct in 0..c * t {
        let src = &clip.data()[ct * h * w..(ct + 1) * h * w];
        let dst = &mut out[ct * size * size..(ct + 1) * size * size];
        for oy in 0..size {
            let row = (top + oy) * w + left;
            dst[oy * size..(oy + 1) * size].copy_from_slice(&src[row..row + size]);
        }
    }
    Tensor::new(vec![c, t, size, size], out)
}

pub fn center_crop(clip: &Tensor, size: usize) -> Result<Tensor> {
    let s = clip.shape();
    crop(clip, (s[2] - size) / 2, (s[3] - size) / 2, size)
}

/// Mirror every frame left-right.
pub fn hflip(clip: &Tensor) -> Tensor {
    let s = clip.shape();
    let (c, t, h, w) = (s[0], s[1], s[2], s[3]);
    let mut out = vec![0.0; clip.numel()];
    for cth in 0..c * t * h {
        let src = &clip.data()[cth * w..(cth + 1) * w];
        let dst = &mut out[cth * w..(cth + 1) * w];
        for x in 0..w {
            dst[x] = src[w - 1 - x];
        }
    }
    Tensor::new(s.to_vec(), out).expect("hflip shape")
}

/// Reverse the temporal axis: `out[:, t] = in[:, T-1-t]`.
pub fn reverse_clip(clip: &Tensor) -> Tensor {
    let s = clip.shape();
    let (c, t, h, w) = (s[0], s[1], s[2], s[3]);
    let hw = h * w;
    let mut out = vec![0.0; clip.numel()];
    for ci in 0..c {
        for ti in 0..t {
            let src = (ci * t + (t - 1 - ti)) * hw;
            let dst = (ci * t + ti) * hw;
            out[dst..dst + hw].copy_from_slice(&clip.data()[src..src + hw]);
        }
    }
    Tensor::new(s.to_vec(), out).expect("reverse shape")
}

/// Temporal concatenation of a clip with its own reversal: length `2T`, a
/// temporal palindrome.
pub fn concat_normal_reverse(clip: &Tensor) -> Tensor {
    let rev = reverse_clip(clip);
    let s = clip.shape();
    let (c, t, h, w) = (s[0], s[1], s[2], s[3]);
    let hw = h * w;
    let mut out = vec![0.0; 2 * clip.numel()];
    for ci in 0..c {
        let dst = ci * 2 * t * hw;
        out[dst..dst + t * hw].copy_from_slice(&clip.data()[ci * t * hw..(ci + 1) * t * hw]);
        out[dst + t * hw..dst + 2 * t * hw].copy_from_slice(&rev.data()[ci * t * hw..(ci + 1) * t * hw]);
    }
    Tensor::new(vec![c, 2 * t, h, w], out).expect("concat shape")
}

/// Train-mode augmentation chain, in fixed order: random scale, crop
/// (random or corner/center), horizontal flip, lighting jitter, contrast
/// jitter, clamp to [0, 1], temporal reverse. Eval mode resizes to base and
/// center-crops (variant-specific crops live in the evaluation code).
pub fn augment(clip: &Tensor, cfg: &AugmentConfig, train: bool, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    cfg.validate()?;
    if !train {
        let resized = resize_bilinear(clip, cfg.base_size, cfg.base_size);
        return center_crop(&resized, cfg.crop_size);
    }
    let (lo, hi) = cfg.scale_range;
    let s = if lo == hi { lo } else { rng.gen_range(lo..hi) };
    let target = ((cfg.base_size as f64 * s).round() as usize).max(cfg.crop_size);
    let mut out = resize_bilinear(clip, target, target);

    let room = target - cfg.crop_size;
    let (top, left) = if cfg.corner_crop {
        match rng.gen_range(0..5u32) {
            0 => (0, 0),
            1 => (0, room),
            2 => (room, 0),
            3 => (room, room),
            _ => (room / 2, room / 2),
        }
    } else {
        (rng.gen_range(0..=room), rng.gen_range(0..=room))
    };
    out = crop(&out, top, left, cfg.crop_size)?;

    if rng.gen_bool(cfg.horizontal_flip_prob) {
        out = hflip(&out);
    }
    let offset = if cfg.lighting_jitter > 0.0 {
        rng.gen_range(-cfg.lighting_jitter..cfg.lighting_jitter)
    } else {
        0.0
    };
    let factor = if cfg.contrast_jitter > 0.0 {
        rng.gen_range(1.0 - cfg.contrast_jitter..1.0 + cfg.contrast_jitter)
    } else {
        1.0
    };
    if offset != 0.0 || factor != 1.0 {
        let n = out.numel() as f64;
        let lit_mean = (out.data().iter().sum::<f64>() + offset * n) / n;
        for v in out.data_mut() {
            *v = (lit_mean + factor * (*v + offset - lit_mean)).clamp(0.0, 1.0);
        }
    } else {
        for v in out.data_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
    if rng.gen_bool(cfg.reverse_prob) {
        out = reverse_clip(&out);
    }
    Ok(out)
}

/// Convert a sampled clip to the model input tensor `[C, T', H, W]`:
/// `diff` mode takes residual frames first (so callers sample one extra
/// frame), then both modes normalize per channel.
pub fn to_model_input(clip: &Tensor, mode: InputMode, stats: &ChannelStats) -> Result<Tensor> {
    let mut x = match mode {
        InputMode::Rgb => clip.clone(),
        InputMode::Diff => residual_frames(clip)?,
    };
    let s = x.shape().to_vec();
    let c = s[0];
    if stats.mean.len() != c || stats.std.len() != c {
        return Err(Error::ShapeMismatch(format!(
            "stats for {} channels applied to {c}-channel clip",
            stats.mean.len()
        )));
    }
    let per_chan: usize = s[1..].iter().product();
    for ci in 0..c {
        let (m, sd) = (stats.mean[ci], stats.std[ci]);
        for v in &mut x.data_mut()[ci * per_chan..(ci + 1) * per_chan] {
            *v = (*v - m) / sd;
        }
    }
    Ok(x)
}

/// Stack per-clip tensors `[C, T, H, W]` into a batch `[N, C, T, H, W]`.
pub fn stack_batch(clips: &[Tensor]) -> Result<Tensor> {
    if clips.is_empty() {
        return Err(Error::InvalidConfig("cannot stack an empty batch".into()));
    }
    let s = clips[0].shape().to_vec();
    let mut data = Vec::with_capacity(clips.len() * clips[0].numel());
    for c in clips {
        if c.shape() != s {
            return Err(Error::ShapeMismatch(format!(
                "batch clip shape {:?} differs from {:?}",
                c.shape(),
                s
            )));
        }
        data.extend_from_slice(c.data());
    }
    let mut shape = vec![clips.len()];
    shape.extend_from_slice(&s);
    Tensor::new(shape, data)
}
