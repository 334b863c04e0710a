//! Elementwise activations.

use crate::error::Result;
use crate::graph::{Graph, NodeId, Op};

/// Exponential linear unit: `x` for `x > 0`, `alpha * (exp(x) - 1)` otherwise.
pub fn elu(g: &mut Graph, x: NodeId, alpha: f64) -> Result<NodeId> {
    let out: Vec<f64> = g
        .value(x)
        .iter()
        .map(|&v| if v > 0.0 { v } else { alpha * (v.exp() - 1.0) })
        .collect();
    let shape = g.shape(x).to_vec();
    let needs = g.needs(x);
    Ok(g.push(shape, out, needs, Op::Elu { x, alpha }))
}

/// Rectified linear unit with subgradient 0 at the kink.
pub fn relu(g: &mut Graph, x: NodeId) -> Result<NodeId> {
    let out: Vec<f64> = g.value(x).iter().map(|&v| v.max(0.0)).collect();
    let shape = g.shape(x).to_vec();
    let needs = g.needs(x);
    Ok(g.push(shape, out, needs, Op::Relu { x }))
}

/// Activation selector used by model configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Relu,
    /// Pass-through, for blocks under algebraic tests.
    Identity,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        match self {
            Activation::Elu => elu(g, x, 1.0),
            Activation::Relu => relu(g, x),
            Activation::Identity => Ok(x),
        }
    }
}
