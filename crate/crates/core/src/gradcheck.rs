//! Finite-difference gradient checking.
//!
//! Every differentiable surface is reduced to a scalar through a fixed
//! random-probe dot product, then reverse-mode gradients are compared against
//! central finite differences element by element. The probe head (rather
//! than a plain sum) makes the comparison sensitive to gradients that merely
//! redistribute mass.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::layers::Mode;
use crate::models::{build_model, ConvStyle, DownsampleStyle, ModelConfig};
use crate::ops::{self, Activation};
use crate::optim::ParamStore;
use crate::rng;
use crate::tensor::Tensor;
use crate::video::{Conv2Plus1D, Conv2Plus1DSpec, Frac, LateralFuse, MidChannels, ShiftSpec};

pub const DEFAULT_EPSILON: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_finite(vals: &[f64], what: &str) -> Result<()> {
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} contains a non-finite value")));
    }
    Ok(())
}

/// Gradient check for an op over explicit input tensors (all of which are
/// treated as differentiable). Returns the max relative error between
/// reverse-mode and central-difference gradients.
pub fn gradcheck_inputs<F>(build: &F, inputs: &[Tensor], seed: u64, epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    // Analytic pass.
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone().with_grad())).collect();
    let out = build(&mut g, &ids)?;
    check_finite(g.value(out), "forward output")?;
    let mut probe_rng = rng::stream(seed, "gradcheck-probe", &[]);
    let probe: Vec<f64> = (0..g.value(out).len()).map(|_| probe_rng.gen_range(-1.0..1.0)).collect();
    let head = ops::probe_sum(&mut g, out, probe.clone())?;
    g.backward(head)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| g.grad(id).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; g.value(id).len()]))
        .collect();
    for a in &analytic {
        check_finite(a, "reverse-mode gradient")?;
    }

    let eval = |tensors: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = tensors.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &ids)?;
        check_finite(g.value(out), "forward output")?;
        Ok(dot(g.value(out), &probe))
    };

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut max_err: f64 = 0.0;
    for k in 0..work.len() {
        for j in 0..work[k].numel() {
            let orig = work[k].data()[j];
            work[k].data_mut()[j] = orig + epsilon;
            let fp = eval(&work)?;
            work[k].data_mut()[j] = orig - epsilon;
            let fm = eval(&work)?;
            work[k].data_mut()[j] = orig;
            let numeric = (fp - fm) / (2.0 * epsilon);
            if !numeric.is_finite() {
                return Err(Error::NonFinite("finite-difference estimate".into()));
            }
            max_err = max_err.max(rel_err(analytic[k][j], numeric));
        }
    }
    Ok(max_err)
}

/// Gradient check for an op given input shapes: inputs are sampled uniformly
/// from [-1, 1) and a sum head is appended to reduce the output.
pub fn gradcheck_op<F>(build: &F, input_shapes: &[Vec<usize>], seed: u64, epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let mut r = rng::stream(seed, "gradcheck-input", &[]);
    let inputs: Vec<Tensor> = input_shapes
        .iter()
        .map(|s| {
            let mut t = Tensor::zeros(s);
            t.fill_uniform(&mut r, -1.0, 1.0);
            t
        })
        .collect();
    gradcheck_inputs(build, &inputs, seed, epsilon)
}

/// Gradient check over a parameter store plus one input tensor: reverse-mode
/// gradients of every trainable entry (and the input) are compared against
/// central differences obtained by perturbing the store in place.
pub fn gradcheck_with_store<F>(
    store: &mut ParamStore,
    forward: &F,
    input: &Tensor,
    seed: u64,
    epsilon: f64,
) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore, NodeId) -> Result<NodeId>,
{
    store.clear_grads();
    let mut g = Graph::new();
    let x = g.leaf(input.clone().with_grad());
    let out = forward(&mut g, store, x)?;
    check_finite(g.value(out), "forward output")?;
    let mut probe_rng = rng::stream(seed, "gradcheck-probe", &[]);
    let probe: Vec<f64> = (0..g.value(out).len()).map(|_| probe_rng.gen_range(-1.0..1.0)).collect();
    let head = ops::probe_sum(&mut g, out, probe.clone())?;
    g.backward(head)?;
    let input_grad = g.grad(x).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; input.numel()]);
    g.sync_param_grads(store);
    let param_grads: Vec<Option<Vec<f64>>> = store.iter().map(|e| e.grad.clone()).collect();
    store.clear_grads();
    drop(g);

    let eval = |store: &ParamStore, inp: &Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.leaf(inp.clone());
        let out = forward(&mut g, store, x)?;
        check_finite(g.value(out), "forward output")?;
        Ok(dot(g.value(out), &probe))
    };

    let mut max_err: f64 = 0.0;
    let mut work = input.clone();
    for j in 0..work.numel() {
        let orig = work.data()[j];
        work.data_mut()[j] = orig + epsilon;
        let fp = eval(store, &work)?;
        work.data_mut()[j] = orig - epsilon;
        let fm = eval(store, &work)?;
        work.data_mut()[j] = orig;
        let numeric = (fp - fm) / (2.0 * epsilon);
        max_err = max_err.max(rel_err(input_grad[j], numeric));
    }

    for id in store.ids().collect::<Vec<_>>() {
        if !store.entry(id).trainable {
            continue;
        }
        let analytic = param_grads[id.0]
            .clone()
            .unwrap_or_else(|| vec![0.0; store.entry(id).data.len()]);
        for j in 0..store.entry(id).data.len() {
            let orig = store.entry(id).data[j];
            store.entry_mut(id).data[j] = orig + epsilon;
            let fp = eval(store, input)?;
            store.entry_mut(id).data[j] = orig - epsilon;
            let fm = eval(store, input)?;
            store.entry_mut(id).data[j] = orig;
            let numeric = (fp - fm) / (2.0 * epsilon);
            if !numeric.is_finite() {
                return Err(Error::NonFinite("finite-difference estimate".into()));
            }
            max_err = max_err.max(rel_err(analytic[j], numeric));
        }
    }
    Ok(max_err)
}

// ---------------------------------------------------------------------------
// Named check registry (drives the CLI suite and the acceptance criteria)
// ---------------------------------------------------------------------------

pub struct CheckCase {
    pub name: &'static str,
    pub threshold: f64,
    pub run: fn(u64) -> Result<f64>,
}

fn uniform(r: &mut impl Rng, shape: &[usize]) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.fill_uniform(r, -1.0, 1.0);
    t
}

/// Values bounded away from zero by `margin` (for kinked activations).
fn away_from_zero(r: &mut impl Rng, shape: &[usize], margin: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        let mag = margin + (1.0 - margin) * r.gen_range(0.0..1.0);
        *v = if r.gen_bool(0.5) { mag } else { -mag };
    }
    t
}

/// Well-separated values (a shuffled lattice) so max-pool windows have no
/// near-ties within finite-difference reach.
fn separated(r: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = r.gen_range(0..=i);
        idx.swap(i, j);
    }
    let data: Vec<f64> = idx.iter().map(|&i| (2.0 * i as f64 + 1.0) / n as f64 - 1.0).collect();
    Tensor::new(shape.to_vec(), data).expect("lattice tensor")
}

fn check_linear(seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, "case", &[]);
    let inputs = [uniform(&mut r, &[3, 5]), uniform(&mut r, &[4, 5]), uniform(&mut r, &[4])];
    gradcheck_inputs(&|g, ids| ops::linear(g, ids[0], ids[1], ids[2]), &inputs, seed, DEFAULT_EPSILON)
}

fn check_conv2d(seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, "case", &[]);
    let inputs = [uniform(&mut r, &[2, 3, 5, 6]), uniform(&mut r, &[4, 3, 3, 3]), uniform(&mut r, &[4])];
    gradcheck_inputs(
        &|g, ids| ops::conv2d(g, ids[0], ids[1], Some(ids[2]), [1, 1], [1, 1]),
        &inputs,
        seed,
        DEFAULT_EPSILON,
    )
}

fn check_conv2d_strided(seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, "case", &[]);
    let inputs = [uniform(&mut r, &[1, 2, 7, 6]), uniform(&mut r, &[3, 2, 3, 2]), uniform(&mut r, &[3])];
    gradcheck_inputs(
        &|g, ids| ops::conv2d(g, ids[0], ids[1], Some(ids[2]), [2, 2], [1, 0]),
        &inputs,
        seed,
        DEFAULT_EPSILON,
    )
}

fn check_conv3d(seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, "case", &[]);
    let inputs = [uniform(&mut r, &[1, 2, 3, 5, 5]), uniform(&mut r, &[3, 2, 3, 3, 3]), uniform(&mut r, &[3])];
    gradcheck_inputs(
        &|g, ids| ops::conv3d(g, ids[0], ids[1], Some(ids[2]), [1, 1, 1], [1, 1, 1]),
        &inputs,
        seed,
        DEFAULT_EPSILON,
    )
}

fn check_conv3d_strided(seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, "case", &[]);
    let inputs = [uniform(&mut r, &[1, 2, 5, 5, 4]), uniform(&mut r, &[2, 2, 3, 3, 3]), uniform(&mut r, &[2])];
    gradcheck_inputs(
        &|g, ids| ops::conv3d(g, ids[0], ids[1], Some(ids[2]), [2, 2, 1], [1, 0, 1]),
        &inputs,
        seed,
        DEFAULT_EPSILON,
    )
}

fn check_maxpool3d(seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, "case", &[]);
    let inputs = [separated(&mut r, &[1, 2, 4, 4, 4])];
    gradcheck_inputs(&|g, ids| ops::maxpool3d(g, ids[0], [2, 2, 2], [2, 2, 2]), &inputs, seed, DEFAULT_EPSILON)
}

fn check_elu(seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, "case", &[]);
    let inputs = [away_from_zero(&mut r, &[2, 3, 4], 0.01)];
    gradcheck_inputs(&|g, ids| ops::elu(g, ids[0], 1.0), &inputs, seed, DEFAULT_EPSILON)
}

fn check_relu(seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, "case", &[]);
    let inputs = [away_from_zero(&mut r, &[2, 3, 4], 0.01)];
    gradcheck_inputs(&|g, ids| ops::relu(g, ids[0]), &inputs, seed, DEFAULT_EPSILON)
}

fn check_batchnorm_train(seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, "case", &[]);
    let inputs = [uniform(&mut r, &[4, 3, 2, 2]), uniform(&mut r, &[3]), uniform(&mut r, &[3])];
    gradcheck_inputs(
        &|g, ids| ops::batchnorm_train(g, ids[0], ids[1], ids[2], 1e-5).map(|(n, _, _)| n),
        &inputs,
        seed,
        DEFAULT_EPSILON,
    )
}

fn check_batchnorm_eval(seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, "case", &[]);
    let inputs = [uniform(&mut r, &[4, 3, 2, 2]), uniform(&mut r, &[3]), uniform(&mut r, &[3])];
    let mean = vec![0.2, -0.1, 0.05];
    let var = vec![1.3, 0.8, 1.1];
    gradcheck_inputs(
        &move |g, ids| ops::batchnorm_eval(g, ids[0], ids[1], ids[2], &mean, &var, 1e-5),
        &inputs,
        seed,
        DEFAULT_EPSILON,
    )
}

fn check_softmax_cross_entropy(seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, "case", &[]);
    let inputs = [uniform(&mut r, &[4, 5])];
    let labels: Vec<usize> = (0..4).map(|_| r.gen_range(0..5)).collect();
    gradcheck_inputs(
        &move |g, ids| ops::cross_entropy(g, ids[0], &labels),
        &inputs,
        seed,
        DEFAULT_EPSILON,
    )
}

fn check_tsm_shift(seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, "case", &[]);
    let inputs = [uniform(&mut r, &[2, 8, 4, 3, 3])];
    let spec = ShiftSpec {
        fraction_forward: Frac { num: 1, den: 4 },
        fraction_backward: Frac { num: 1, den: 4 },
        residual_embedding: true,
    };
    gradcheck_inputs(
        &move |g, ids| crate::video::tsm_shift(g, ids[0], &spec, None),
        &inputs,
        seed,
        DEFAULT_EPSILON,
    )
}

fn check_tsm_shift_frame_major(seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, "case", &[]);
    let inputs = [uniform(&mut r, &[8, 8, 3, 3])];
    let spec = ShiftSpec::default();
    gradcheck_inputs(
        &move |g, ids| crate::video::tsm_shift(g, ids[0], &spec, Some(4)),
        &inputs,
        seed,
        DEFAULT_EPSILON,
    )
}

fn check_residual_frames(seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, "case", &[]);
    let inputs = [uniform(&mut r, &[3, 4, 3, 3])];
    gradcheck_inputs(&|g, ids| ops::frame_diff(g, ids[0]), &inputs, seed, DEFAULT_EPSILON)
}

fn check_plumbing(seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, "case", &[]);
    let inputs = [uniform(&mut r, &[2, 3, 4, 2, 2]), uniform(&mut r, &[2, 3, 4, 2, 2])];
    gradcheck_inputs(
        &|g, ids| {
            let folded = ops::fold_frames(g, ids[0])?;
            let summed = ops::add(g, folded, folded)?;
            let cat = ops::concat_channels(g, summed, folded)?;
            let gap = ops::global_avg_pool(g, cat)?;
            let consensus = ops::frame_mean(g, gap, 4)?;
            let sub = ops::subsample_temporal(g, ids[1], 2)?;
            let sub_folded = ops::fold_frames(g, sub)?;
            let gap2 = ops::global_avg_pool(g, sub_folded)?;
            let gap2 = ops::reshape(g, gap2, vec![4, 3])?;
            let consensus2 = ops::frame_mean(g, gap2, 2)?;
            ops::concat_channels(g, consensus, consensus2)
        },
        &inputs,
        seed,
        DEFAULT_EPSILON,
    )
}

fn check_conv2plus1d(seed: u64) -> Result<f64> {
    let mut store = ParamStore::new();
    let mut r = rng::stream(seed, "case", &[]);
    let spec = Conv2Plus1DSpec { in_channels: 2, out_channels: 3, k: 3, mid_channels: MidChannels::Matched };
    let block = Conv2Plus1D::new(&mut store, &mut r, "block", spec, true, Activation::Elu, 1)?;
    let input = uniform(&mut r, &[2, 2, 3, 4, 4]);
    gradcheck_with_store(
        &mut store,
        &|g, store, x| block.forward(g, store, x, Mode::Train, &mut Vec::new()),
        &input,
        seed,
        DEFAULT_EPSILON,
    )
}

fn check_lateral_fuse(seed: u64) -> Result<f64> {
    let mut store = ParamStore::new();
    let mut r = rng::stream(seed, "case", &[]);
    let fuse = LateralFuse::new(&mut store, &mut r, "fuse", 2, 4)?;
    let fast = uniform(&mut r, &[1, 2, 8, 3, 3]);
    let slow_data = uniform(&mut r, &[1, 3, 2, 3, 3]);
    gradcheck_with_store(
        &mut store,
        &move |g, store, x| {
            let slow = g.leaf(slow_data.clone().with_grad());
            fuse.forward(g, store, x, slow)
        },
        &fast,
        seed,
        DEFAULT_EPSILON,
    )
}

fn model_case(config: ModelConfig, input_shape: &[usize], seed: u64) -> Result<f64> {
    let model = build_model(&config, seed)?;
    let mut r = rng::stream(seed, "case", &[]);
    let input = uniform(&mut r, input_shape);
    let mut store = model.store().clone();
    gradcheck_with_store(
        &mut store,
        &|g, store, x| model.forward_on(g, store, x, Mode::Train, &mut Vec::new()),
        &input,
        seed,
        DEFAULT_EPSILON,
    )
}

fn check_tsm_micro(seed: u64) -> Result<f64> {
    let mut cfg = ModelConfig::tsm_micro();
    cfg.stem_channels = 4;
    cfg.stage_blocks = vec![1];
    cfg.clip_len = 4;
    cfg.num_classes = 3;
    cfg.shift = ShiftSpec {
        fraction_forward: Frac { num: 1, den: 4 },
        fraction_backward: Frac { num: 1, den: 4 },
        residual_embedding: true,
    };
    model_case(cfg, &[2, 3, 4, 8, 8], seed)
}

fn check_tsm_micro_strided(seed: u64) -> Result<f64> {
    let mut cfg = ModelConfig::tsm_micro();
    cfg.stem_channels = 4;
    cfg.stage_blocks = vec![1, 1];
    cfg.clip_len = 2;
    cfg.num_classes = 2;
    cfg.downsample = DownsampleStyle::StridedConv;
    model_case(cfg, &[1, 3, 2, 8, 8], seed)
}

fn check_slowfast_micro(seed: u64) -> Result<f64> {
    let mut cfg = ModelConfig::slowfast_micro();
    cfg.stem_channels = 4;
    cfg.stage_blocks = vec![1];
    cfg.clip_len = 4;
    cfg.alpha = 2;
    cfg.num_classes = 3;
    model_case(cfg, &[1, 3, 4, 8, 8], seed)
}

fn check_slowfast_micro_full3d(seed: u64) -> Result<f64> {
    let mut cfg = ModelConfig::slowfast_micro();
    cfg.stem_channels = 4;
    cfg.stage_blocks = vec![1];
    cfg.clip_len = 4;
    cfg.alpha = 2;
    cfg.num_classes = 2;
    cfg.conv_style = ConvStyle::Full3d;
    model_case(cfg, &[1, 3, 4, 8, 8], seed)
}

/// A deliberately wrong pairing (reverse-mode gradients of one op against
/// finite differences of another); enabled through an environment variable so
/// the CLI suite can be shown to fail loudly. Test hook only.
fn check_corrupted(seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, "case", &[]);
    let input = away_from_zero(&mut r, &[2, 3], 0.05);

    let mut g = Graph::new();
    let x = g.leaf(input.clone().with_grad());
    let out = ops::relu(&mut g, x)?;
    let mut probe_rng = rng::stream(seed, "gradcheck-probe", &[]);
    let probe: Vec<f64> = (0..g.value(out).len()).map(|_| probe_rng.gen_range(-1.0..1.0)).collect();
    let head = ops::probe_sum(&mut g, out, probe.clone())?;
    g.backward(head)?;
    let analytic = g.grad(x).map(|s| s.to_vec()).unwrap_or_default();

    let eval = |inp: &Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.leaf(inp.clone());
        let out = ops::elu(&mut g, x, 1.0)?;
        Ok(dot(g.value(out), &probe))
    };
    let mut work = input;
    let mut max_err: f64 = 0.0;
    for j in 0..work.numel() {
        let orig = work.data()[j];
        work.data_mut()[j] = orig + DEFAULT_EPSILON;
        let fp = eval(&work)?;
        work.data_mut()[j] = orig - DEFAULT_EPSILON;
        let fm = eval(&work)?;
        work.data_mut()[j] = orig;
        max_err = max_err.max(rel_err(analytic[j], (fp - fm) / (2.0 * DEFAULT_EPSILON)));
    }
    Ok(max_err)
}

/// All named gradient checks with their thresholds.
pub fn registry() -> Vec<CheckCase> {
    let mut cases = vec![
        CheckCase { name: "linear", threshold: 1e-7, run: check_linear },
        CheckCase { name: "conv2d", threshold: 1e-5, run: check_conv2d },
        CheckCase { name: "conv2d_strided", threshold: 1e-5, run: check_conv2d_strided },
        CheckCase { name: "conv3d", threshold: 1e-5, run: check_conv3d },
        CheckCase { name: "conv3d_strided", threshold: 1e-5, run: check_conv3d_strided },
        CheckCase { name: "maxpool3d", threshold: 1e-6, run: check_maxpool3d },
        CheckCase { name: "elu", threshold: 1e-6, run: check_elu },
        CheckCase { name: "relu", threshold: 1e-6, run: check_relu },
        CheckCase { name: "batchnorm_train", threshold: 1e-5, run: check_batchnorm_train },
        CheckCase { name: "batchnorm_eval", threshold: 1e-6, run: check_batchnorm_eval },
        CheckCase { name: "softmax_cross_entropy", threshold: 1e-6, run: check_softmax_cross_entropy },
        CheckCase { name: "tsm_shift", threshold: 1e-7, run: check_tsm_shift },
        CheckCase { name: "tsm_shift_frame_major", threshold: 1e-7, run: check_tsm_shift_frame_major },
        CheckCase { name: "residual_frames", threshold: 1e-7, run: check_residual_frames },
        CheckCase { name: "plumbing", threshold: 1e-7, run: check_plumbing },
        CheckCase { name: "conv2plus1d", threshold: 1e-4, run: check_conv2plus1d },
        CheckCase { name: "lateral_fuse", threshold: 1e-4, run: check_lateral_fuse },
        CheckCase { name: "tsm_micro", threshold: 1e-4, run: check_tsm_micro },
        CheckCase { name: "tsm_micro_strided", threshold: 1e-4, run: check_tsm_micro_strided },
        CheckCase { name: "slowfast_micro", threshold: 1e-4, run: check_slowfast_micro },
        CheckCase { name: "slowfast_micro_full3d", threshold: 1e-4, run: check_slowfast_micro_full3d },
    ];
    if std::env::var("SHIFTFAST_GRADCHECK_CORRUPT").is_ok() {
        cases.push(CheckCase { name: "corrupted_negative_control", threshold: 1e-4, run: check_corrupted });
    }
    cases
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_is_tight() {
        let err = check_linear(42).unwrap();
        assert!(err < 1e-7, "linear gradcheck error {err}");
    }

    #[test]
    fn conv3d_within_bound() {
        let err = check_conv3d(42).unwrap();
        assert!(err < 1e-5, "conv3d gradcheck error {err}");
    }

    #[test]
    fn elu_bounded_away_from_kink() {
        let err = check_elu(42).unwrap();
        assert!(err < 1e-6, "elu gradcheck error {err}");
    }

    #[test]
    fn corrupted_pairing_is_detected() {
        let err = check_corrupted(42).unwrap();
        assert!(err > 1e-2, "corrupted check should report a large error, got {err}");
    }
}
