//! Named parameter storage and SGD with momentum, weight decay, and a
//! step learning-rate schedule.

use crate::error::{Error, Result};

/// Handle to an entry in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// One named array: a trainable parameter or a non-trainable buffer
/// (batch-norm running statistics live here too, so checkpoints capture
/// everything a forward pass depends on).
#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub trainable: bool,
    pub grad: Option<Vec<f64>>,
    pub momentum: Option<Vec<f64>>,
}

/// Parameters in deterministic registration order with unique dotted names.
#[derive(Debug, Default, Clone)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        data: Vec<f64>,
        trainable: bool,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.entries.iter().any(|e| e.name == name) {
            return Err(Error::InvalidConfig(format!("duplicate parameter name `{name}`")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "parameter `{name}`: {} values for shape {shape:?}",
                data.len()
            )));
        }
        let id = ParamId(self.entries.len());
        self.entries.push(ParamEntry { name, shape, data, trainable, grad: None, momentum: None });
        Ok(id)
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn entry_mut(&mut self, id: ParamId) -> &mut ParamEntry {
        &mut self.entries[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn accumulate_grad(&mut self, id: ParamId, g: &[f64]) {
        let entry = &mut self.entries[id.0];
        match &mut entry.grad {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
            None => entry.grad = Some(g.to_vec()),
        }
    }

    pub fn clear_grads(&mut self) {
        for e in &mut self.entries {
            e.grad = None;
        }
    }

    /// Total element count over trainable parameters.
    pub fn count_trainable(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.data.len()).sum()
    }
}

/// SGD hyperparameters. The effective learning rate at epoch `e` is
/// `learning_rate * lr_decay_factor^floor(e / lr_decay_every_epochs)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every_epochs: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 0.001,
            momentum: 0.9,
            weight_decay: 0.0005,
            lr_decay_factor: 0.1,
            lr_decay_every_epochs: 20,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!("momentum must be in [0,1), got {}", self.momentum)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(Error::InvalidConfig(format!("lr_decay_factor must be in (0,1], got {}", self.lr_decay_factor)));
        }
        if self.lr_decay_every_epochs == 0 {
            return Err(Error::InvalidConfig("lr_decay_every_epochs must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_lr(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay_factor.powi((epoch / self.lr_decay_every_epochs) as i32)
    }
}

/// One SGD update over every trainable parameter:
/// `g <- grad + wd * w; v <- momentum * v + g; w <- w - lr(epoch) * v`.
/// Gradients are cleared afterwards. Rejects parameters with no gradient.
pub fn sgd_step(store: &mut ParamStore, config: &OptimConfig, epoch: usize) -> Result<()> {
    config.validate()?;
    let lr = config.effective_lr(epoch);
    for e in &mut store.entries {
        if !e.trainable {
            continue;
        }
        let grad = e
            .grad
            .take()
            .ok_or_else(|| Error::MissingGradient(e.name.clone()))?;
        let momentum = e.momentum.get_or_insert_with(|| vec![0.0; e.data.len()]);
        for ((w, v), g) in e.data.iter_mut().zip(momentum.iter_mut()).zip(&grad) {
            let g = g + config.weight_decay * *w;
            *v = config.momentum * *v + g;
            *w -= lr * *v;
        }
    }
    Ok(())
}
