//! Parameterized building blocks: convolution layers, batch norm, and the
//! linear head. Layers register their arrays in a [`ParamStore`] under dotted
//! names at construction time and only hold handles, so a model is a tree of
//! cheap structs over one store.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::ops;
use crate::optim::{ParamId, ParamStore};

/// Forward mode: train uses batch statistics (and reports running-stat
/// updates), eval uses recorded running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Batch-norm running statistics momentum and epsilon, pinned library-wide.
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPSILON: f64 = 1e-5;

/// Fan-in scaled uniform init: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
fn init_uniform<R: Rng>(rng: &mut R, numel: usize, fan_in: usize) -> Vec<f64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..numel).map(|_| rng.gen_range(-bound..bound)).collect()
}

#[derive(Debug, Clone)]
pub struct Conv3dLayer {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl Conv3dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
        bias: bool,
    ) -> Result<Self> {
        let fan_in = cin * kernel[0] * kernel[1] * kernel[2];
        let w = store.register(
            format!("{name}.weight"),
            vec![cout, cin, kernel[0], kernel[1], kernel[2]],
            init_uniform(rng, cout * fan_in, fan_in),
            true,
        )?;
        let b = if bias {
            Some(store.register(format!("{name}.bias"), vec![cout], vec![0.0; cout], true)?)
        } else {
            None
        };
        Ok(Conv3dLayer { weight: w, bias: b, stride, pad })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|id| g.param(store, id));
        ops::conv3d(g, x, w, b, self.stride, self.pad)
    }
}

#[derive(Debug, Clone)]
pub struct Conv2dLayer {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: [usize; 2],
    pub pad: [usize; 2],
}

impl Conv2dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        pad: [usize; 2],
        bias: bool,
    ) -> Result<Self> {
        let fan_in = cin * kernel[0] * kernel[1];
        let w = store.register(
            format!("{name}.weight"),
            vec![cout, cin, kernel[0], kernel[1]],
            init_uniform(rng, cout * fan_in, fan_in),
            true,
        )?;
        let b = if bias {
            Some(store.register(format!("{name}.bias"), vec![cout], vec![0.0; cout], true)?)
        } else {
            None
        };
        Ok(Conv2dLayer { weight: w, bias: b, stride, pad })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|id| g.param(store, id));
        ops::conv2d(g, x, w, b, self.stride, self.pad)
    }
}

/// Deferred running-stat update; the trainer applies these after the step so
/// the forward pass itself never mutates the model.
#[derive(Debug, Clone)]
pub struct BnUpdate {
    mean_id: ParamId,
    var_id: ParamId,
    count_id: ParamId,
    mean: Vec<f64>,
    var: Vec<f64>,
}

/// Apply pending batch-norm running-stat updates (exponential moving average).
pub fn apply_bn_updates(store: &mut ParamStore, updates: &[BnUpdate]) {
    for u in updates {
        let rm = &mut store.entry_mut(u.mean_id).data;
        for (r, b) in rm.iter_mut().zip(&u.mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
        let rv = &mut store.entry_mut(u.var_id).data;
        for (r, b) in rv.iter_mut().zip(&u.var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
        store.entry_mut(u.count_id).data[0] += 1.0;
    }
}

#[derive(Debug, Clone)]
pub struct BnLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
    count: ParamId,
}

impl BnLayer {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        let gamma = store.register(format!("{name}.gamma"), vec![channels], vec![1.0; channels], true)?;
        let beta = store.register(format!("{name}.beta"), vec![channels], vec![0.0; channels], true)?;
        let running_mean =
            store.register(format!("{name}.running_mean"), vec![channels], vec![0.0; channels], false)?;
        let running_var =
            store.register(format!("{name}.running_var"), vec![channels], vec![1.0; channels], false)?;
        let count = store.register(format!("{name}.count"), vec![1], vec![0.0], false)?;
        Ok(BnLayer { gamma, beta, running_mean, running_var, count })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        mode: Mode,
        updates: &mut Vec<BnUpdate>,
    ) -> Result<NodeId> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        match mode {
            Mode::Train => {
                let (node, mean, var) = ops::batchnorm_train(g, x, gamma, beta, BN_EPSILON)?;
                updates.push(BnUpdate {
                    mean_id: self.running_mean,
                    var_id: self.running_var,
                    count_id: self.count,
                    mean,
                    var,
                });
                Ok(node)
            }
            Mode::Eval => {
                if store.entry(self.count).data[0] < 1.0 {
                    return Err(Error::InvalidConfig(format!(
                        "batchnorm `{}` used in eval mode before any running stats were recorded",
                        store.entry(self.gamma).name.trim_end_matches(".gamma")
                    )));
                }
                let rm = store.entry(self.running_mean).data.clone();
                let rv = store.entry(self.running_var).data.clone();
                ops::batchnorm_eval(g, x, gamma, beta, &rm, &rv, BN_EPSILON)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearLayer {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl LinearLayer {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        in_features: usize,
        out_features: usize,
    ) -> Result<Self> {
        let w = store.register(
            format!("{name}.weight"),
            vec![out_features, in_features],
            init_uniform(rng, out_features * in_features, in_features),
            true,
        )?;
        let b = store.register(format!("{name}.bias"), vec![out_features], vec![0.0; out_features], true)?;
        Ok(LinearLayer { weight: w, bias: b })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        ops::linear(g, x, w, b)
    }
}
