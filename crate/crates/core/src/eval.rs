//! Evaluation: the ten-clip protocol, test-time-augmentation variants,
//! pre-softmax logit records, and weighted logit ensembling.
//!
//! All clip- and member-averaging goes through baseline-shifted accumulation
//! (first vector plus the weighted mean of differences), which is
//! mathematically the weighted mean and returns identical inputs exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;

use crate::data::{
    center_crop, concat_normal_reverse, crop, hflip, resize_bilinear, reverse_clip, sample_clip,
    stack_batch, to_model_input, ChannelStats, SamplePolicy, VideoClip,
};
use crate::error::{Error, Result};
use crate::models::{InputMode, Model};
use crate::rng;

pub const LOGIT_HEADER_TAG: &str = "#TGLOGITS";

// ---------------------------------------------------------------------------
// Variants
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum VariantKind {
    CenterCrop,
    HorizontalFlip,
    RandomCrop,
    ReverseOrder,
    NormalReverseConcat,
}

impl VariantKind {
    pub const ALL: [VariantKind; 5] = [
        VariantKind::CenterCrop,
        VariantKind::HorizontalFlip,
        VariantKind::RandomCrop,
        VariantKind::ReverseOrder,
        VariantKind::NormalReverseConcat,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "center-crop" => Ok(VariantKind::CenterCrop),
            "horizontal-flip" => Ok(VariantKind::HorizontalFlip),
            "random-crop" => Ok(VariantKind::RandomCrop),
            "reverse-order" => Ok(VariantKind::ReverseOrder),
            "normal-reverse-concat" => Ok(VariantKind::NormalReverseConcat),
            _ => Err(Error::InvalidConfig(format!(
                "unknown variant `{s}`; valid names: {}",
                VariantKind::ALL.map(|v| v.name()).join(", ")
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::CenterCrop => "center-crop",
            VariantKind::HorizontalFlip => "horizontal-flip",
            VariantKind::RandomCrop => "random-crop",
            VariantKind::ReverseOrder => "reverse-order",
            VariantKind::NormalReverseConcat => "normal-reverse-concat",
        }
    }
}

impl std::fmt::Display for VariantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One evaluation-time transform chain: a named crop/temporal variant plus
/// the sampling stride and the input mode it was produced under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TTAVariant {
    pub kind: VariantKind,
    pub stride: usize,
    pub input_mode: InputMode,
}

/// Per-(video, model, variant) pre-softmax score vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitRecord {
    pub video_id: String,
    pub model_id: String,
    pub variant: VariantKind,
    pub stride: usize,
    pub input_mode: InputMode,
    pub weight: f64,
    pub logits: Vec<f64>,
}

impl LogitRecord {
    fn sort_key(&self) -> (String, String, &'static str, usize, String) {
        (
            self.video_id.clone(),
            self.model_id.clone(),
            self.variant.name(),
            self.stride,
            self.input_mode.to_string(),
        )
    }
}

// ---------------------------------------------------------------------------
// Stable averaging
// ---------------------------------------------------------------------------

/// Weighted mean of equal-length vectors via baseline-shifted accumulation:
/// weights are normalized first, so identical inputs return the input
/// exactly and scaling every weight by a common integer factor leaves the
/// result bit-identical.
pub fn stable_weighted_mean(vectors: &[(&[f64], f64)]) -> Result<Vec<f64>> {
    if vectors.is_empty() {
        return Err(Error::InvalidConfig("cannot average zero vectors".into()));
    }
    let dim = vectors[0].0.len();
    let total: f64 = vectors.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(Error::InvalidConfig("weights must sum to a positive value".into()));
    }
    let coefs: Vec<f64> = vectors.iter().map(|(_, w)| w / total).collect();
    let base = vectors[0].0;
    let mut out = base.to_vec();
    for j in 0..dim {
        let mut acc = 0.0;
        for ((v, _), coef) in vectors.iter().zip(&coefs) {
            if v.len() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "cannot average vectors of lengths {dim} and {}",
                    v.len()
                )));
            }
            acc += coef * (v[j] - base[j]);
        }
        out[j] += acc;
    }
    Ok(out)
}

pub fn stable_mean(vectors: &[&[f64]]) -> Result<Vec<f64>> {
    let weighted: Vec<(&[f64], f64)> = vectors.iter().map(|v| (*v, 1.0)).collect();
    stable_weighted_mean(&weighted)
}

/// Index of the largest element (first on ties).
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of exact matches.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / predictions.len() as f64)
}

// ---------------------------------------------------------------------------
// Evaluation protocol
// ---------------------------------------------------------------------------

/// Spatial geometry for evaluation inputs.
#[derive(Debug, Clone, Copy)]
pub struct EvalGeometry {
    pub base_size: usize,
    pub crop_size: usize,
}

/// The ten-clip protocol: per video, `num_clips` windows are sampled, the
/// variant transform chain is applied, and the mean of the pre-softmax logits
/// across windows becomes the video's record. Per-video randomness is keyed
/// by the video id, so accuracy is invariant to the order of the split.
pub fn evaluate(
    model: &Model,
    clips: &[&VideoClip],
    stats: &ChannelStats,
    variant: TTAVariant,
    geometry: EvalGeometry,
    num_clips: usize,
    seed: u64,
    consecutive_windows: bool,
) -> Result<(f64, Vec<LogitRecord>)> {
    evaluate_with_permutation(model, clips, stats, variant, geometry, num_clips, seed, consecutive_windows, None)
}

/// As [`evaluate`], optionally remapping logits through a class permutation.
/// When an input transform permutes the label space (a horizontal flip swaps
/// left and right motion, temporal reversal swaps up and down), the score the
/// variant contributes for class `c` is the raw logit at `permutation[c]`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_with_permutation(
    model: &Model,
    clips: &[&VideoClip],
    stats: &ChannelStats,
    variant: TTAVariant,
    geometry: EvalGeometry,
    num_clips: usize,
    seed: u64,
    consecutive_windows: bool,
    logit_permutation: Option<&[usize]>,
) -> Result<(f64, Vec<LogitRecord>)> {
    if clips.is_empty() {
        return Err(Error::InvalidConfig("evaluate requires a non-empty split".into()));
    }
    if num_clips == 0 {
        return Err(Error::InvalidConfig("num_clips must be positive".into()));
    }
    if variant.stride != 1 && variant.stride != 2 {
        return Err(Error::InvalidConfig(format!("stride must be 1 or 2, got {}", variant.stride)));
    }
    let clip_len = model.config.clip_len;
    let base_frames = if variant.kind == VariantKind::NormalReverseConcat {
        if clip_len % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "normal-reverse-concat needs an even clip_len, got {clip_len}"
            )));
        }
        clip_len / 2
    } else {
        clip_len
    };
    let sample_frames = base_frames + if model.config.input_mode == InputMode::Diff { 1 } else { 0 };
    if let Some(p) = logit_permutation {
        let mut seen = vec![false; p.len()];
        let valid = p.len() == model.config.num_classes
            && p.iter().all(|&i| i < p.len() && !std::mem::replace(&mut seen[i], true));
        if !valid {
            return Err(Error::InvalidConfig(format!(
                "logit permutation {p:?} is not a permutation of {} classes",
                model.config.num_classes
            )));
        }
    }
    let model_id = model.config.default_model_id();

    let mut records = Vec::with_capacity(clips.len());
    let mut predictions = Vec::with_capacity(clips.len());
    let mut labels = Vec::with_capacity(clips.len());
    for clip in clips {
        let mut r = rng::stream(seed, "eval", &[rng::hash_str(&clip.id)]);
        let policy = if num_clips == 1 {
            SamplePolicy::Random
        } else if consecutive_windows {
            SamplePolicy::TenConsecutive
        } else {
            SamplePolicy::TenRandom
        };
        let mut windows = Vec::new();
        // The ten-window policies produce exactly 10; draw until num_clips.
        while windows.len() < num_clips {
            let batch = sample_clip(&clip.frames, sample_frames, variant.stride, policy, &mut r)?;
            for w in batch {
                if windows.len() < num_clips {
                    windows.push(w);
                }
            }
        }

        let mut inputs = Vec::with_capacity(num_clips);
        for w in &windows {
            let resized = resize_bilinear(w, geometry.base_size, geometry.base_size);
            let spatial = match variant.kind {
                VariantKind::HorizontalFlip => hflip(&center_crop(&resized, geometry.crop_size)?),
                VariantKind::RandomCrop => {
                    let room = geometry.base_size - geometry.crop_size;
                    let (top, left) = (r.gen_range(0..=room), r.gen_range(0..=room));
                    crop(&resized, top, left, geometry.crop_size)?
                }
                _ => center_crop(&resized, geometry.crop_size)?,
            };
            let temporal = match variant.kind {
                VariantKind::ReverseOrder => reverse_clip(&spatial),
                VariantKind::NormalReverseConcat => concat_normal_reverse(&spatial),
                _ => spatial,
            };
            inputs.push(to_model_input(&temporal, model.config.input_mode, stats)?);
        }
        let batch = stack_batch(&inputs)?;
        let logits = model.eval_logits(&batch)?;
        let c = logits.shape()[1];
        let rows: Vec<&[f64]> = (0..num_clips).map(|i| &logits.data()[i * c..(i + 1) * c]).collect();
        let mut fused = stable_mean(&rows)?;
        if let Some(p) = logit_permutation {
            fused = (0..c).map(|i| fused[p[i]]).collect();
        }
        predictions.push(argmax(&fused));
        labels.push(clip.label);
        records.push(LogitRecord {
            video_id: clip.id.clone(),
            model_id: model_id.clone(),
            variant: variant.kind,
            stride: variant.stride,
            input_mode: variant.input_mode,
            weight: 1.0,
            logits: fused,
        });
    }
    let acc = accuracy(&predictions, &labels)?;
    Ok((acc, records))
}

// ---------------------------------------------------------------------------
// Logit files
// ---------------------------------------------------------------------------

fn format_f64(v: f64) -> String {
    // 17 significant digits: enough for exact f64 round-trips.
    format!("{v:.16e}")
}

/// Append records to a line-delimited logit file, creating it (with its
/// header) if needed. Records are written in deterministic
/// (video, model, variant) order.
pub fn export_logits(records: &[LogitRecord], path: &Path) -> Result<()> {
    let num_classes = match records.first() {
        Some(r) => r.logits.len(),
        None => {
            // An empty record list yields an empty file (no header).
            OpenOptions::new().create(true).append(true).open(path)?;
            return Ok(());
        }
    };
    for r in records {
        if r.logits.len() != num_classes {
            return Err(Error::ShapeMismatch(format!(
                "record {} has {} classes but the first record has {num_classes}",
                r.video_id,
                r.logits.len()
            )));
        }
    }
    let existing = std::fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
    if existing && num_classes > 0 {
        let (file_classes, _) = read_logits(path)?;
        if file_classes != num_classes {
            return Err(Error::Format(format!(
                "logit file carries {file_classes} classes, records have {num_classes}"
            )));
        }
    }
    let mut sorted: Vec<&LogitRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.sort_key());

    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if !existing {
        writeln!(f, "{LOGIT_HEADER_TAG} 1 {num_classes}")?;
    }
    for r in sorted {
        let logits: Vec<String> = r.logits.iter().map(|&v| format_f64(v)).collect();
        writeln!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.video_id,
            r.model_id,
            r.variant.name(),
            r.stride,
            r.input_mode,
            format_f64(r.weight),
            logits.join("\t")
        )?;
    }
    Ok(())
}

/// Read a logit file back: returns (num_classes, records).
pub fn read_logits(path: &Path) -> Result<(usize, Vec<LogitRecord>)> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{} is empty", path.display())))??;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != LOGIT_HEADER_TAG || parts[1] != "1" {
        return Err(Error::Format(format!("bad logit header `{header}`")));
    }
    let num_classes: usize =
        parts[2].parse().map_err(|_| Error::Format(format!("bad class count in `{header}`")))?;
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 + num_classes {
            return Err(Error::Format(format!(
                "line {}: expected {} fields, got {}",
                lineno + 2,
                6 + num_classes,
                fields.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Format(format!("bad float `{s}` on line {}", lineno + 2)))
        };
        records.push(LogitRecord {
            video_id: fields[0].to_string(),
            model_id: fields[1].to_string(),
            variant: VariantKind::parse(fields[2])?,
            stride: fields[3]
                .parse()
                .map_err(|_| Error::Format(format!("bad stride `{}`", fields[3])))?,
            input_mode: match fields[4] {
                "rgb" => InputMode::Rgb,
                "diff" => InputMode::Diff,
                other => return Err(Error::Format(format!("bad input mode `{other}`"))),
            },
            weight: parse_f(fields[5])?,
            logits: fields[6..].iter().map(|s| parse_f(s)).collect::<Result<Vec<_>>>()?,
        });
    }
    Ok((num_classes, records))
}

// ---------------------------------------------------------------------------
// Ensembling
// ---------------------------------------------------------------------------

/// One ensemble member: a (model, variant) pair with an integer multiplicity
/// acting as its weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsembleMember {
    pub model_id: String,
    pub variant: VariantKind,
    pub stride: usize,
    pub input_mode: InputMode,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EnsembleSpec {
    pub members: Vec<EnsembleMember>,
}

impl EnsembleSpec {
    /// Parse a members file: one member per line,
    /// `model_id variant stride mode multiplicity`, `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut members = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 5 {
                return Err(Error::InvalidConfig(format!(
                    "ensemble member line {} needs `model variant stride mode multiplicity`, got `{line}`",
                    lineno + 1
                )));
            }
            let multiplicity: usize = parts[4]
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad multiplicity `{}`", parts[4])))?;
            if multiplicity == 0 {
                return Err(Error::InvalidConfig("multiplicity must be >= 1".into()));
            }
            members.push(EnsembleMember {
                model_id: parts[0].to_string(),
                variant: VariantKind::parse(parts[1])?,
                stride: parts[2]
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad stride `{}`", parts[2])))?,
                input_mode: match parts[3] {
                    "rgb" => InputMode::Rgb,
                    "diff" => InputMode::Diff,
                    other => return Err(Error::InvalidConfig(format!("bad input mode `{other}`"))),
                },
                multiplicity,
            });
        }
        if members.is_empty() {
            return Err(Error::InvalidConfig("ensemble spec has no members".into()));
        }
        Ok(EnsembleSpec { members })
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleOutcome {
    /// Per-video fused logits in video-id order.
    pub fused: Vec<(String, Vec<f64>)>,
    pub predictions: Vec<(String, usize)>,
    pub accuracy: f64,
}

type MemberKey = (String, VariantKind, usize, String);

fn member_key(m: &EnsembleMember) -> MemberKey {
    (m.model_id.clone(), m.variant, m.stride, m.input_mode.to_string())
}

fn record_key(r: &LogitRecord) -> MemberKey {
    (r.model_id.clone(), r.variant, r.stride, r.input_mode.to_string())
}

/// Multiplicity-weighted pre-softmax fusion:
/// `fused(video) = sum(mult * logits) / sum(mult)`, prediction by argmax.
/// Every member must be present for every video in the record set.
pub fn ensemble(
    spec: &EnsembleSpec,
    records: &[LogitRecord],
    labels: &BTreeMap<String, usize>,
) -> Result<EnsembleOutcome> {
    if spec.members.is_empty() {
        return Err(Error::InvalidConfig("ensemble spec has no members".into()));
    }
    // Canonical member order makes fusion independent of the order members
    // were listed in.
    let mut members = spec.members.clone();
    members.sort_by_key(|m| (member_key(m), m.multiplicity));
    let mut by_member: BTreeMap<MemberKey, BTreeMap<&str, &LogitRecord>> = BTreeMap::new();
    let mut videos: BTreeSet<&str> = BTreeSet::new();
    for r in records {
        videos.insert(&r.video_id);
        by_member.entry(record_key(r)).or_default().insert(&r.video_id, r);
    }
    if videos.is_empty() {
        return Err(Error::InvalidConfig("no logit records supplied".into()));
    }

    let mut fused = Vec::with_capacity(videos.len());
    let mut predictions = Vec::with_capacity(videos.len());
    let mut pred_indices = Vec::with_capacity(videos.len());
    let mut label_vec = Vec::with_capacity(videos.len());
    for video in &videos {
        let mut weighted: Vec<(&[f64], f64)> = Vec::with_capacity(members.len());
        for m in &members {
            let rec = by_member
                .get(&member_key(m))
                .and_then(|per_video| per_video.get(video))
                .ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "missing logits for video `{video}`, model `{}`, variant `{}` (stride {}, {})",
                        m.model_id,
                        m.variant.name(),
                        m.stride,
                        m.input_mode
                    ))
                })?;
            weighted.push((&rec.logits, m.multiplicity as f64 * rec.weight));
        }
        let f = stable_weighted_mean(&weighted)?;
        let p = argmax(&f);
        let label = *labels
            .get(*video)
            .ok_or_else(|| Error::InvalidConfig(format!("no label known for video `{video}`")))?;
        fused.push((video.to_string(), f));
        predictions.push((video.to_string(), p));
        pred_indices.push(p);
        label_vec.push(label);
    }
    let acc = accuracy(&pred_indices, &label_vec)?;
    Ok(EnsembleOutcome { fused, predictions, accuracy: acc })
}
