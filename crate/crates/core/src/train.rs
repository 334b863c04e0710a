//! Staged training: per-stage clip length, shift enablement, optimizer
//! schedule, and augmentation, with promotion thresholds for advancing early.
//! Every source of randomness is a pure function of (seed, stage, epoch,
//! sample), so interrupted runs resume to bit-identical metrics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::checkpoint::Checkpoint;
use crate::data::{augment, sample_clip, stack_batch, to_model_input, AugmentConfig, ChannelStats, Dataset, SamplePolicy, VideoClip};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layers::{apply_bn_updates, Mode};
use crate::models::{build_model, InputMode, Model, ModelConfig};
use crate::ops;
use crate::optim::{sgd_step, OptimConfig};
use crate::rng;

/// One curriculum stage.
#[derive(Debug, Clone)]
pub struct StageSpec {
    pub clip_len: usize,
    pub shift_enabled: bool,
    pub epochs: usize,
    pub optim: OptimConfig,
    pub augment: AugmentConfig,
    /// Advance to the next stage early once validation accuracy reaches this.
    pub promotion_threshold: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainPlan {
    pub stages: Vec<StageSpec>,
    pub eval_every: usize,
    pub checkpoint_dir: PathBuf,
    pub seed: u64,
    pub batch_size: usize,
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidConfig("train plan needs at least one stage".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be positive".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.epochs == 0 {
                return Err(Error::InvalidConfig(format!("stage {i} has zero epochs")));
            }
            s.optim.validate()?;
            s.augment.validate()?;
            if let Some(p) = s.promotion_threshold {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidConfig(format!("stage {i} promotion threshold {p}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// Global epoch index across stages.
    pub epoch: usize,
    pub stage: usize,
    pub lr: f64,
    pub loss: f64,
    pub val_acc: Option<f64>,
}

impl EpochMetrics {
    /// The pinned metrics-log line: `epoch <e> lr <v> loss <v> val_acc <v>`.
    pub fn line(&self) -> String {
        let mut s = String::new();
        write!(s, "epoch {} lr {} loss {:.17e} val_acc ", self.epoch, self.lr, self.loss).unwrap();
        match self.val_acc {
            Some(a) => write!(s, "{a}").unwrap(),
            None => s.push('-'),
        }
        s
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub metrics: Vec<EpochMetrics>,
    pub final_checkpoint: PathBuf,
    pub metrics_path: PathBuf,
    /// Last validation accuracy per stage.
    pub stage_final_acc: Vec<f64>,
}

fn stats_for(dataset: &Dataset, mode: InputMode) -> ChannelStats {
    match mode {
        InputMode::Rgb => dataset.stats.clone(),
        InputMode::Diff => dataset.diff_stats(),
    }
}

/// Center-window, center-crop, single-clip validation accuracy (the cheap
/// in-training protocol; the full ten-clip protocol lives in `eval`).
pub fn quick_validation(
    model: &Model,
    clips: &[&VideoClip],
    stats: &ChannelStats,
    geometry: (usize, usize),
    batch_size: usize,
) -> Result<f64> {
    if clips.is_empty() {
        return Err(Error::InvalidConfig("validation split is empty".into()));
    }
    let sample_frames =
        model.config.clip_len + if model.config.input_mode == InputMode::Diff { 1 } else { 0 };
    let mut correct = 0usize;
    let mut r = rng::stream(0, "quick-val", &[]);
    for chunk in clips.chunks(batch_size.max(1)) {
        let mut inputs = Vec::with_capacity(chunk.len());
        for clip in chunk {
            let w = &sample_clip(&clip.frames, sample_frames, 1, SamplePolicy::Center, &mut r)?[0];
            let resized = crate::data::resize_bilinear(w, geometry.0, geometry.0);
            let cropped = crate::data::center_crop(&resized, geometry.1)?;
            inputs.push(to_model_input(&cropped, model.config.input_mode, stats)?);
        }
        let batch = stack_batch(&inputs)?;
        let logits = model.eval_logits(&batch)?;
        let c = logits.shape()[1];
        for (i, clip) in chunk.iter().enumerate() {
            if crate::eval::argmax(&logits.data()[i * c..(i + 1) * c]) == clip.label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / clips.len() as f64)
}

/// Run the full plan. `resume` continues from a checkpoint (same plan and
/// model config) at the recorded stage and epoch.
pub fn train(
    plan: &TrainPlan,
    model_config: &ModelConfig,
    dataset: &Dataset,
    resume: Option<&Checkpoint>,
) -> Result<TrainOutcome> {
    plan.validate()?;
    model_config.validate()?;
    if dataset.num_classes != model_config.num_classes {
        return Err(Error::InvalidConfig(format!(
            "dataset has {} classes but the model expects {}",
            dataset.num_classes, model_config.num_classes
        )));
    }
    std::fs::create_dir_all(&plan.checkpoint_dir)?;

    let train_clips = dataset.train_clips();
    let val_clips = dataset.val_clips();
    if train_clips.is_empty() || val_clips.is_empty() {
        return Err(Error::InvalidConfig("dataset is too small to split into train and validation".into()));
    }
    let stats = stats_for(dataset, model_config.input_mode);

    let (mut model, start_stage, start_epoch) = match resume {
        Some(ckpt) => {
            if ckpt.stage >= plan.stages.len() {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint is at stage {} but the plan has {} stages",
                    ckpt.stage,
                    plan.stages.len()
                )));
            }
            ckpt.verify_config(&stage_config(model_config, &plan.stages[ckpt.stage])?)?;
            let model = crate::checkpoint::model_from_checkpoint(ckpt)?;
            (model, ckpt.stage, ckpt.epoch)
        }
        None => (build_model(&stage_config(model_config, &plan.stages[0])?, plan.seed)?, 0, 0),
    };

    let mut metrics: Vec<EpochMetrics> = Vec::new();
    let metrics_path = plan.checkpoint_dir.join("metrics.log");
    // A resumed run appends to the existing log.
    let mut log_lines: Vec<String> = Vec::new();
    let mut stage_final_acc = Vec::new();
    let mut global_epoch = resume.map(|c| c.global_epoch).unwrap_or(0);

    for (si, stage) in plan.stages.iter().enumerate().skip(start_stage) {
        let cfg = stage_config(model_config, stage)?;
        model.with_stage(stage.clip_len, stage.shift_enabled)?;
        let geometry = (stage.augment.base_size, stage.augment.crop_size);
        let sample_frames =
            stage.clip_len + if model_config.input_mode == InputMode::Diff { 1 } else { 0 };
        let first_epoch = if si == start_stage { start_epoch } else { 0 };
        let mut last_acc = f64::NAN;

        for e in first_epoch..stage.epochs {
            let mut order: Vec<usize> = (0..train_clips.len()).collect();
            let mut shuffle_rng = rng::stream(plan.seed, "shuffle", &[si as u64, e as u64]);
            for i in (1..order.len()).rev() {
                let j = rand::Rng::gen_range(&mut shuffle_rng, 0..=i);
                order.swap(i, j);
            }

            let mut epoch_loss = 0.0;
            let mut batches = 0usize;
            for (bi, batch_ids) in order.chunks(plan.batch_size).enumerate() {
                let mut inputs = Vec::with_capacity(batch_ids.len());
                let mut labels = Vec::with_capacity(batch_ids.len());
                for &idx in batch_ids {
                    let clip = train_clips[idx];
                    let mut dr = stage.augment.decision_rng(e, idx);
                    let stride = stage.augment.pick_stride(&mut dr);
                    let window =
                        sample_clip(&clip.frames, sample_frames, stride, SamplePolicy::Random, &mut dr)?;
                    let augmented = augment(&window[0], &stage.augment, true, &mut dr)?;
                    inputs.push(to_model_input(&augmented, model_config.input_mode, &stats)?);
                    labels.push(clip.label);
                }
                let batch = stack_batch(&inputs)?;

                let mut g = Graph::new();
                let x = g.leaf(batch);
                let mut updates = Vec::new();
                let logits = model.forward(&mut g, x, Mode::Train, &mut updates)?;
                let loss_node = ops::cross_entropy(&mut g, logits, &labels)?;
                let loss = g.value(loss_node)[0];
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss diverged at stage {si} epoch {e} batch {bi}"
                    )));
                }
                g.backward(loss_node)?;
                g.sync_param_grads(model.store_mut());
                drop(g);
                sgd_step(model.store_mut(), &stage.optim, e)?;
                apply_bn_updates(model.store_mut(), &updates);
                epoch_loss += loss;
                batches += 1;
            }
            epoch_loss /= batches.max(1) as f64;

            let eval_point = (e + 1) % plan.eval_every == 0 || e + 1 == stage.epochs;
            let val_acc = if eval_point {
                let acc = quick_validation(&model, &val_clips, &stats, geometry, plan.batch_size)?;
                last_acc = acc;
                Some(acc)
            } else {
                None
            };
            let m = EpochMetrics {
                epoch: global_epoch,
                stage: si,
                lr: stage.optim.effective_lr(e),
                loss: epoch_loss,
                val_acc,
            };
            log_lines.push(m.line());
            metrics.push(m);
            global_epoch += 1;

            if eval_point {
                let path = plan.checkpoint_dir.join(format!("stage{si}-epoch{}.ckpt", e + 1));
                save_stage_checkpoint(&model, &cfg, si, e + 1, global_epoch, &path)?;
            }
            if let (Some(threshold), Some(acc)) = (stage.promotion_threshold, val_acc) {
                if acc >= threshold {
                    break;
                }
            }
        }
        stage_final_acc.push(last_acc);
    }

    let final_path = plan.checkpoint_dir.join("final.ckpt");
    let last_stage = plan.stages.len() - 1;
    let last_cfg = stage_config(model_config, &plan.stages[last_stage])?;
    save_stage_checkpoint(&model, &last_cfg, last_stage, plan.stages[last_stage].epochs, global_epoch, &final_path)?;

    let mut text = log_lines.join("\n");
    text.push('\n');
    if resume.is_some() && metrics_path.exists() {
        let mut existing = std::fs::read_to_string(&metrics_path)?;
        existing.push_str(&text);
        std::fs::write(&metrics_path, existing)?;
    } else {
        std::fs::write(&metrics_path, text)?;
    }

    Ok(TrainOutcome {
        model,
        metrics,
        final_checkpoint: final_path,
        metrics_path,
        stage_final_acc,
    })
}

/// The model config as seen by a stage: its clip length, with the shift
/// zeroed when disabled.
pub fn stage_config(base: &ModelConfig, stage: &StageSpec) -> Result<ModelConfig> {
    let mut cfg = base.clone();
    cfg.clip_len = stage.clip_len;
    if !stage.shift_enabled {
        cfg.shift = crate::video::ShiftSpec::none();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn save_stage_checkpoint(
    model: &Model,
    _cfg: &ModelConfig,
    stage: usize,
    epoch_in_stage: usize,
    global_epoch: usize,
    path: &Path,
) -> Result<()> {
    crate::checkpoint::save_checkpoint_full(model, epoch_in_stage, stage, global_epoch, path)
}
