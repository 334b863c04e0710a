//! Flat `key = value` run configuration: one line per setting, `#` comments,
//! UTF-8. Every run writes its fully-resolved configuration (defaults
//! included) next to its outputs so runs are self-describing. Unknown keys
//! are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::data::{AugmentConfig, SyntheticSpec};
use crate::error::{Error, Result};
use crate::models::ModelConfig;
use crate::optim::OptimConfig;
use crate::train::{StageSpec, TrainPlan};

/// Parsed `key = value` pairs in file order.
#[derive(Debug, Clone, Default)]
pub struct FlatConfig {
    pairs: Vec<(String, String)>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected `key = value`, got `{raw}`", lineno + 1))
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(FlatConfig { pairs })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::InvalidConfig(format!("bad value for {key}: `{v}`")))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| Error::InvalidConfig(format!("bad value for {key}: `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("bad bool for {key}: `{v}`"))),
    }
}

/// A fully-resolved run: model, training plan, dataset spec, and the
/// identifier used in logit records.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub plan: TrainPlan,
    pub data: SyntheticSpec,
    pub model_id: Option<String>,
}

/// Resolve a training run config. `seed` comes from the CLI `--seed` flag
/// and feeds every sub-stream; `checkpoint_dir` is where outputs land.
pub fn resolve_run_config(flat: &FlatConfig, seed: u64, checkpoint_dir: PathBuf) -> Result<RunConfig> {
    // Model defaults depend on the kind, so find it first.
    let mut model = match flat.get("model.kind") {
        Some("slowfast") => ModelConfig::slowfast_micro(),
        Some("tsm") | None => ModelConfig::tsm_micro(),
        Some(other) => return Err(Error::InvalidConfig(format!("unknown model.kind `{other}`"))),
    };
    let mut data = SyntheticSpec { seed, ..SyntheticSpec::default() };
    let mut augment = AugmentConfig { seed: crate::rng::derive(seed, "augment", &[]), ..AugmentConfig::identity(32) };
    let mut model_id = None;

    let stage_count = flat.get("train.stages").map(|v| parse_usize("train.stages", v)).transpose()?.unwrap_or(1);
    if stage_count == 0 {
        return Err(Error::InvalidConfig("train.stages must be at least 1".into()));
    }
    let mut batch_size = 16usize;
    let mut eval_every = 1usize;
    #[derive(Clone)]
    struct StageDraft {
        clip_len: Option<usize>,
        shift: bool,
        epochs: usize,
        optim: OptimConfig,
        promotion: Option<f64>,
    }
    let default_draft = StageDraft {
        clip_len: None,
        shift: true,
        epochs: 10,
        optim: OptimConfig::default(),
        promotion: None,
    };
    let mut stages = vec![default_draft.clone(); stage_count];

    let mut unknown = Vec::new();
    for (key, value) in flat.pairs() {
        let key = key.as_str();
        let value = value.as_str();
        if model.apply_key(key, value)? || data.apply_key(key, value)? || augment.apply_key(key, value)? {
            continue;
        }
        match key {
            "model.id" => model_id = Some(value.to_string()),
            "train.stages" => {}
            "train.batch_size" => batch_size = parse_usize(key, value)?,
            "train.eval_every" => eval_every = parse_usize(key, value)?,
            _ => {
                if let Some(rest) = key.strip_prefix("train.stage") {
                    if let Some((idx, field)) = rest.split_once('.') {
                        let i: usize = idx
                            .parse()
                            .map_err(|_| Error::InvalidConfig(format!("bad stage index in `{key}`")))?;
                        if i == 0 || i > stage_count {
                            return Err(Error::InvalidConfig(format!(
                                "stage index {i} out of range (1..={stage_count})"
                            )));
                        }
                        let s = &mut stages[i - 1];
                        match field {
                            "clip_len" => s.clip_len = Some(parse_usize(key, value)?),
                            "shift" => s.shift = parse_bool(key, value)?,
                            "epochs" => s.epochs = parse_usize(key, value)?,
                            "promotion_threshold" => s.promotion = Some(parse_f64(key, value)?),
                            "lr" => s.optim.learning_rate = parse_f64(key, value)?,
                            "momentum" => s.optim.momentum = parse_f64(key, value)?,
                            "weight_decay" => s.optim.weight_decay = parse_f64(key, value)?,
                            "lr_decay_factor" => s.optim.lr_decay_factor = parse_f64(key, value)?,
                            "lr_decay_every" => s.optim.lr_decay_every_epochs = parse_usize(key, value)?,
                            _ => unknown.push(key.to_string()),
                        }
                        continue;
                    }
                }
                unknown.push(key.to_string());
            }
        }
    }
    if !unknown.is_empty() {
        return Err(Error::InvalidConfig(format!("unknown config keys: {}", unknown.join(", "))));
    }

    let plan = TrainPlan {
        stages: stages
            .into_iter()
            .map(|d| StageSpec {
                clip_len: d.clip_len.unwrap_or(model.clip_len),
                shift_enabled: d.shift,
                epochs: d.epochs,
                optim: d.optim,
                augment: augment.clone(),
                promotion_threshold: d.promotion,
            })
            .collect(),
        eval_every,
        checkpoint_dir,
        seed,
        batch_size,
    };
    model.validate()?;
    data.validate()?;
    plan.validate()?;
    Ok(RunConfig { model, plan, data, model_id })
}

/// Resolve a data-generation spec (only `data.*` keys are accepted).
pub fn resolve_data_spec(flat: &FlatConfig, seed: u64) -> Result<SyntheticSpec> {
    let mut data = SyntheticSpec { seed, ..SyntheticSpec::default() };
    let mut unknown = Vec::new();
    for (key, value) in flat.pairs() {
        if !data.apply_key(key, value)? {
            unknown.push(key.clone());
        }
    }
    if !unknown.is_empty() {
        return Err(Error::InvalidConfig(format!("unknown config keys: {}", unknown.join(", "))));
    }
    data.validate()?;
    Ok(data)
}

impl RunConfig {
    /// The fully-resolved configuration text written next to run outputs.
    pub fn resolved_text(&self, seed: u64) -> String {
        let mut out = String::new();
        out.push_str(&self.model.canonical_text());
        if let Some(id) = &self.model_id {
            out.push_str(&format!("model.id = {id}\n"));
        }
        out.push_str(&self.data.canonical_text());
        out.push_str(&self.plan.stages[0].augment.canonical_text());
        out.push_str(&format!("seed = {seed}\n"));
        out.push_str(&format!("train.batch_size = {}\n", self.plan.batch_size));
        out.push_str(&format!("train.eval_every = {}\n", self.plan.eval_every));
        out.push_str(&format!("train.stages = {}\n", self.plan.stages.len()));
        for (i, s) in self.plan.stages.iter().enumerate() {
            let n = i + 1;
            out.push_str(&format!("train.stage{n}.clip_len = {}\n", s.clip_len));
            out.push_str(&format!("train.stage{n}.epochs = {}\n", s.epochs));
            out.push_str(&format!("train.stage{n}.lr = {}\n", s.optim.learning_rate));
            out.push_str(&format!("train.stage{n}.lr_decay_every = {}\n", s.optim.lr_decay_every_epochs));
            out.push_str(&format!("train.stage{n}.lr_decay_factor = {}\n", s.optim.lr_decay_factor));
            out.push_str(&format!("train.stage{n}.momentum = {}\n", s.optim.momentum));
            if let Some(p) = s.promotion_threshold {
                out.push_str(&format!("train.stage{n}.promotion_threshold = {p}\n"));
            }
            out.push_str(&format!("train.stage{n}.shift = {}\n", s.shift_enabled));
            out.push_str(&format!("train.stage{n}.weight_decay = {}\n", s.optim.weight_decay));
        }
        out
    }
}

/// Shared map form used when echoing configs into reports.
pub fn to_map(text: &str) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    #[test]
    fn parses_and_rejects_unknown_keys() {
        let flat = FlatConfig::parse("# comment\nmodel.kind = tsm\nmodel.clip_len = 8\n").unwrap();
        let rc = resolve_run_config(&flat, 1, PathBuf::from("/tmp/x")).unwrap();
        assert_eq!(rc.model.clip_len, 8);
        assert_eq!(rc.model.kind, ModelKind::Tsm);

        let bad = FlatConfig::parse("model.kin = tsm\n").unwrap();
        let err = resolve_run_config(&bad, 1, PathBuf::from("/tmp/x")).unwrap_err();
        assert!(err.to_string().contains("model.kin"));
    }

    #[test]
    fn stage_keys_apply() {
        let text = "model.kind = tsm\ntrain.stages = 2\ntrain.stage1.clip_len = 1\ntrain.stage1.shift = false\n\
                    train.stage1.epochs = 3\ntrain.stage1.promotion_threshold = 0.3\ntrain.stage2.clip_len = 16\n\
                    train.stage2.epochs = 5\ntrain.stage2.lr = 0.01\n";
        let flat = FlatConfig::parse(text).unwrap();
        let rc = resolve_run_config(&flat, 7, PathBuf::from("/tmp/x")).unwrap();
        assert_eq!(rc.plan.stages.len(), 2);
        assert_eq!(rc.plan.stages[0].clip_len, 1);
        assert!(!rc.plan.stages[0].shift_enabled);
        assert_eq!(rc.plan.stages[0].promotion_threshold, Some(0.3));
        assert_eq!(rc.plan.stages[1].optim.learning_rate, 0.01);
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(FlatConfig::parse("this has no equals sign\n").is_err());
    }
}
