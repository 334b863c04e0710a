//! Reverse-mode automatic differentiation over a flat tape.
//!
//! Every operation appends one node holding its forward value and the
//! information its backward pass needs. A node participates in backward only
//! if a leaf with `requires_grad` (or a trainable parameter) feeds it.
//! Forward values are immutable once recorded; a graph is built, run backward
//! once, and dropped. Ops are pure functions, so distinct graphs are safe to
//! evaluate from multiple threads.

use crate::error::{Error, Result};
use crate::ops;
use crate::optim::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// Memory layout of a tensor carrying a temporal axis for the shift op.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftLayout {
    /// `[N, C, T, H, W]`
    ChannelMajor,
    /// `[N*T, C, H, W]` with frame index varying fastest in the leading axis.
    FrameMajor,
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Conv3d { x: NodeId, w: NodeId, b: Option<NodeId>, stride: [usize; 3], pad: [usize; 3] },
    Conv2d { x: NodeId, w: NodeId, b: Option<NodeId>, stride: [usize; 2], pad: [usize; 2] },
    MaxPool3d { x: NodeId, argmax: Vec<u32> },
    Elu { x: NodeId, alpha: f64 },
    Relu { x: NodeId },
    BatchNorm { x: NodeId, gamma: NodeId, beta: NodeId, mean: Vec<f64>, invstd: Vec<f64>, train: bool },
    Linear { x: NodeId, w: NodeId, b: NodeId },
    CrossEntropy { logits: NodeId, labels: Vec<usize> },
    Add { a: NodeId, b: NodeId },
    Reshape { x: NodeId },
    ConcatC { a: NodeId, b: NodeId },
    GlobalAvgPool { x: NodeId },
    FrameMean { x: NodeId, frames: usize },
    SubsampleT { x: NodeId, step: usize },
    TsmShift { x: NodeId, layout: ShiftLayout, frames: usize, cf: usize, cb: usize },
    FrameDiff { x: NodeId, lead: usize },
    FoldFrames { x: NodeId, frames: usize },
    ProbeSum { x: NodeId, probe: Vec<f64> },
}

pub(crate) struct Node {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
    pub needs: bool,
    pub op: Op,
}

/// A single forward/backward tape.
#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    bindings: Vec<(ParamId, NodeId)>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), bindings: Vec::new() }
    }

    pub(crate) fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, needs: bool, op: Op) -> NodeId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { shape, data, grad: None, needs, op });
        id
    }

    /// Insert a tensor as a leaf; it participates in backward iff
    /// `requires_grad` is set on it.
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        let needs = t.requires_grad;
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), needs, Op::Leaf)
    }

    /// Insert a parameter from a store, remembering the binding so gradients
    /// can be copied back after `backward`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        let entry = store.entry(id);
        let node = self.push(entry.shape.clone(), entry.data.clone(), entry.trainable, Op::Leaf);
        if entry.trainable {
            self.bindings.push((id, node));
        }
        node
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn output(&self, id: NodeId) -> Tensor {
        Tensor::new(self.nodes[id.0].shape.clone(), self.nodes[id.0].data.clone())
            .expect("node invariant")
    }

    pub(crate) fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs
    }

    /// Accumulate an owned contribution; the first one is adopted without a
    /// copy.
    fn add_grad(&mut self, id: NodeId, contribution: Vec<f64>) {
        let node = &mut self.nodes[id.0];
        match &mut node.grad {
            Some(g) => {
                for (a, b) in g.iter_mut().zip(&contribution) {
                    *a += b;
                }
            }
            None => node.grad = Some(contribution),
        }
    }

    /// Reverse sweep from a scalar node. Gradients accumulate on every node
    /// that needs them; parameter bindings can then be harvested with
    /// [`Graph::sync_param_grads`].
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "backward requires a scalar node, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        if !self.nodes[loss.0].data[0].is_finite() {
            return Err(Error::NonFinite("loss is not finite".into()));
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs || self.nodes[i].grad.is_none() {
                continue;
            }
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            let grad = std::mem::take(&mut self.nodes[i].grad).expect("checked above");
            let contributions = self.backward_step(i, &op, &grad);
            self.nodes[i].op = op;
            self.nodes[i].grad = Some(grad);
            for (target, contrib) in contributions {
                if self.nodes[target.0].needs {
                    self.add_grad(target, contrib);
                }
            }
        }
        Ok(())
    }

    /// Dispatch one node's backward; returns (input node, gradient contribution).
    fn backward_step(&self, i: usize, op: &Op, g: &[f64]) -> Vec<(NodeId, Vec<f64>)> {
        let out_shape = &self.nodes[i].shape;
        let out_data = &self.nodes[i].data;
        let data = |id: NodeId| self.nodes[id.0].data.as_slice();
        let shape = |id: NodeId| self.nodes[id.0].shape.as_slice();
        let mut res = Vec::new();
        match op {
            Op::Leaf => {}
            Op::Conv3d { x, w, b, stride, pad } => {
                let (xs, ws) = (shape(*x), shape(*w));
                if self.needs(*x) {
                    res.push((*x, ops::conv3::backward_input(g, out_shape, data(*w), ws, xs, *stride, *pad)));
                }
                if self.needs(*w) {
                    res.push((*w, ops::conv3::backward_weight(g, out_shape, data(*x), xs, ws, *stride, *pad)));
                }
                if let Some(b) = b {
                    if self.needs(*b) {
                        res.push((*b, ops::conv3::backward_bias(g, out_shape)));
                    }
                }
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let (xs, ws) = (shape(*x), shape(*w));
                if self.needs(*x) {
                    res.push((*x, ops::conv2::backward_input(g, out_shape, data(*w), ws, xs, *stride, *pad)));
                }
                if self.needs(*w) {
                    res.push((*w, ops::conv2::backward_weight(g, out_shape, data(*x), xs, ws, *stride, *pad)));
                }
                if let Some(b) = b {
                    if self.needs(*b) {
                        res.push((*b, ops::conv2::backward_bias(g, out_shape)));
                    }
                }
            }
            Op::MaxPool3d { x, argmax } => {
                if self.needs(*x) {
                    let mut dx = vec![0.0; self.nodes[x.0].data.len()];
                    for (gi, &src) in g.iter().zip(argmax.iter()) {
                        dx[src as usize] += gi;
                    }
                    res.push((*x, dx));
                }
            }
            Op::Elu { x, alpha } => {
                if self.needs(*x) {
                    let xs = data(*x);
                    let dx = g
                        .iter()
                        .zip(xs)
                        .map(|(gi, &v)| if v > 0.0 { *gi } else { gi * alpha * v.exp() })
                        .collect();
                    res.push((*x, dx));
                }
            }
            Op::Relu { x } => {
                if self.needs(*x) {
                    let xs = data(*x);
                    let dx = g.iter().zip(xs).map(|(gi, &v)| if v > 0.0 { *gi } else { 0.0 }).collect();
                    res.push((*x, dx));
                }
            }
            Op::BatchNorm { x, gamma, beta, mean, invstd, train } => {
                let (dx, dgamma, dbeta) = ops::norm::backward(
                    g,
                    data(*x),
                    shape(*x),
                    data(*gamma),
                    mean,
                    invstd,
                    *train,
                    self.needs(*x),
                );
                if self.needs(*x) {
                    res.push((*x, dx));
                }
                if self.needs(*gamma) {
                    res.push((*gamma, dgamma));
                }
                if self.needs(*beta) {
                    res.push((*beta, dbeta));
                }
            }
            Op::Linear { x, w, b } => {
                let (xs, ws) = (shape(*x), shape(*w));
                if self.needs(*x) {
                    res.push((*x, ops::dense::backward_input(g, data(*w), xs, ws)));
                }
                if self.needs(*w) {
                    res.push((*w, ops::dense::backward_weight(g, data(*x), xs, ws)));
                }
                if self.needs(*b) {
                    res.push((*b, ops::dense::backward_bias(g, xs, ws)));
                }
            }
            Op::CrossEntropy { logits, labels } => {
                if self.needs(*logits) {
                    let ls = shape(*logits);
                    let (n, c) = (ls[0], ls[1]);
                    let mut dl = ops::loss::softmax_minus_onehot(data(*logits), n, c, labels);
                    for v in &mut dl {
                        *v *= g[0] / n as f64;
                    }
                    res.push((*logits, dl));
                }
            }
            Op::Add { a, b } => {
                if self.needs(*a) {
                    res.push((*a, g.to_vec()));
                }
                if self.needs(*b) {
                    res.push((*b, g.to_vec()));
                }
            }
            Op::Reshape { x } => {
                if self.needs(*x) {
                    res.push((*x, g.to_vec()));
                }
            }
            Op::ConcatC { a, b } => {
                let (sa, sb) = (shape(*a), shape(*b));
                let lead = sa[0];
                let (ca, cb) = (sa[1..].iter().product::<usize>(), sb[1..].iter().product::<usize>());
                if self.needs(*a) {
                    let mut da = vec![0.0; lead * ca];
                    for n in 0..lead {
                        da[n * ca..(n + 1) * ca].copy_from_slice(&g[n * (ca + cb)..n * (ca + cb) + ca]);
                    }
                    res.push((*a, da));
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; lead * cb];
                    for n in 0..lead {
                        db[n * cb..(n + 1) * cb]
                            .copy_from_slice(&g[n * (ca + cb) + ca..(n + 1) * (ca + cb)]);
                    }
                    res.push((*b, db));
                }
            }
            Op::GlobalAvgPool { x } => {
                if self.needs(*x) {
                    let xs = shape(*x);
                    let rest: usize = xs[2..].iter().product();
                    let mut dx = vec![0.0; self.nodes[x.0].data.len()];
                    for (nc, chunk) in dx.chunks_mut(rest).enumerate() {
                        let v = g[nc] / rest as f64;
                        chunk.iter_mut().for_each(|e| *e = v);
                    }
                    res.push((*x, dx));
                }
            }
            Op::FrameMean { x, frames } => {
                if self.needs(*x) {
                    let c = out_shape[1];
                    let mut dx = vec![0.0; self.nodes[x.0].data.len()];
                    let t = *frames;
                    for (row, chunk) in dx.chunks_mut(c).enumerate() {
                        let n = row / t;
                        for (j, e) in chunk.iter_mut().enumerate() {
                            *e = g[n * c + j] / t as f64;
                        }
                    }
                    res.push((*x, dx));
                }
            }
            Op::SubsampleT { x, step } => {
                if self.needs(*x) {
                    let xs = shape(*x);
                    let (n, c, t) = (xs[0], xs[1], xs[2]);
                    let hw: usize = xs[3..].iter().product();
                    let to = out_shape[2];
                    let mut dx = vec![0.0; self.nodes[x.0].data.len()];
                    for ni in 0..n {
                        for ci in 0..c {
                            for k in 0..to {
                                let src = ((ni * c + ci) * to + k) * hw;
                                let dst = ((ni * c + ci) * t + k * step) * hw;
                                dx[dst..dst + hw].copy_from_slice(&g[src..src + hw]);
                            }
                        }
                    }
                    res.push((*x, dx));
                }
            }
            Op::TsmShift { x, layout, frames, cf, cb } => {
                if self.needs(*x) {
                    res.push((
                        *x,
                        ops::temporal::shift_backward(g, shape(*x), *layout, *frames, *cf, *cb),
                    ));
                }
            }
            Op::FrameDiff { x, lead } => {
                if self.needs(*x) {
                    let xs = shape(*x);
                    let t = xs[xs.len() - 3];
                    let hw: usize = xs[xs.len() - 2..].iter().product();
                    let mut dx = vec![0.0; self.nodes[x.0].data.len()];
                    // out[., t] = x[., t+1] - x[., t]
                    for l in 0..*lead {
                        for ti in 0..t - 1 {
                            let go = &g[(l * (t - 1) + ti) * hw..(l * (t - 1) + ti + 1) * hw];
                            let plus = (l * t + ti + 1) * hw;
                            let minus = (l * t + ti) * hw;
                            for k in 0..hw {
                                dx[plus + k] += go[k];
                                dx[minus + k] -= go[k];
                            }
                        }
                    }
                    res.push((*x, dx));
                }
            }
            Op::FoldFrames { x, frames } => {
                if self.needs(*x) {
                    let xs = shape(*x);
                    let (n, c, t) = (xs[0], xs[1], *frames);
                    let hw = xs[3] * xs[4];
                    let mut dx = vec![0.0; self.nodes[x.0].data.len()];
                    for ni in 0..n {
                        for ci in 0..c {
                            for ti in 0..t {
                                let dst = ((ni * c + ci) * t + ti) * hw;
                                let src = ((ni * t + ti) * c + ci) * hw;
                                dx[dst..dst + hw].copy_from_slice(&g[src..src + hw]);
                            }
                        }
                    }
                    res.push((*x, dx));
                }
            }
            Op::ProbeSum { x, probe } => {
                if self.needs(*x) {
                    let dx = probe.iter().map(|p| p * g[0]).collect();
                    res.push((*x, dx));
                }
            }
        }
        let _ = out_data;
        res
    }

    /// Copy accumulated parameter gradients back into the store (adding to
    /// whatever is already there).
    pub fn sync_param_grads(&self, store: &mut ParamStore) {
        for &(pid, node) in &self.bindings {
            if let Some(g) = self.grad(node) {
                store.accumulate_grad(pid, g);
            }
        }
    }
}
