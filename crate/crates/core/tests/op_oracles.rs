//! Oracle equivalence for the numeric ops: direct nested-loop reference
//! implementations (written from the definitions, independent of the library
//! kernels) must agree with the library to 1e-12 absolute, and the worked
//! examples must hold exactly.

use rand::Rng;
use shiftfast_core::graph::Graph;
use shiftfast_core::ops;
use shiftfast_core::rng;
use shiftfast_core::tensor::Tensor;

// ---------------------------------------------------------------------------
// Reference implementations
// ---------------------------------------------------------------------------

/// Seven nested loops straight from the convolution definition.
#[allow(clippy::too_many_arguments)]
fn naive_conv3d(
    x: &[f64],
    (n, cin, t, h, w): (usize, usize, usize, usize, usize),
    wgt: &[f64],
    (cout, kt, kh, kw): (usize, usize, usize, usize),
    bias: Option<&[f64]>,
    stride: (usize, usize, usize),
    pad: (usize, usize, usize),
) -> (Vec<f64>, (usize, usize, usize)) {
    let to = (t + 2 * pad.0 - kt) / stride.0 + 1;
    let ho = (h + 2 * pad.1 - kh) / stride.1 + 1;
    let wo = (w + 2 * pad.2 - kw) / stride.2 + 1;
    let mut out = vec![0.0; n * cout * to * ho * wo];
    for ni in 0..n {
        for co in 0..cout {
            for toi in 0..to {
                for hoi in 0..ho {
                    for woi in 0..wo {
                        let mut acc = bias.map(|b| b[co]).unwrap_or(0.0);
                        for ci in 0..cin {
                            for kti in 0..kt {
                                for khi in 0..kh {
                                    for kwi in 0..kw {
                                        let ti = (toi * stride.0 + kti) as isize - pad.0 as isize;
                                        let hi = (hoi * stride.1 + khi) as isize - pad.1 as isize;
                                        let wi = (woi * stride.2 + kwi) as isize - pad.2 as isize;
                                        if ti >= 0
                                            && ti < t as isize
                                            && hi >= 0
                                            && hi < h as isize
                                            && wi >= 0
                                            && wi < w as isize
                                        {
                                            let xv = x[(((ni * cin + ci) * t + ti as usize) * h
                                                + hi as usize)
                                                * w
                                                + wi as usize];
                                            let wv = wgt[(((co * cin + ci) * kt + kti) * kh + khi) * kw + kwi];
                                            acc += xv * wv;
                                        }
                                    }
                                }
                            }
                        }
                        out[(((ni * cout + co) * to + toi) * ho + hoi) * wo + woi] = acc;
                    }
                }
            }
        }
    }
    (out, (to, ho, wo))
}

fn naive_conv2d(
    x: &[f64],
    (n, cin, h, w): (usize, usize, usize, usize),
    wgt: &[f64],
    (cout, kh, kw): (usize, usize, usize),
    bias: Option<&[f64]>,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Vec<f64> {
    // Reuse the 3D reference with a unit temporal axis.
    let (out, _) = naive_conv3d(
        x,
        (n, cin, 1, h, w),
        wgt,
        (cout, 1, kh, kw),
        bias,
        (1, stride.0, stride.1),
        (0, pad.0, pad.1),
    );
    out
}

fn naive_maxpool3d(
    x: &[f64],
    (n, c, t, h, w): (usize, usize, usize, usize, usize),
    kernel: (usize, usize, usize),
    stride: (usize, usize, usize),
) -> Vec<f64> {
    let to = (t - kernel.0) / stride.0 + 1;
    let ho = (h - kernel.1) / stride.1 + 1;
    let wo = (w - kernel.2) / stride.2 + 1;
    let mut out = Vec::with_capacity(n * c * to * ho * wo);
    for nc in 0..n * c {
        for toi in 0..to {
            for hoi in 0..ho {
                for woi in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    for kt in 0..kernel.0 {
                        for kh in 0..kernel.1 {
                            for kw in 0..kernel.2 {
                                let v = x[((nc * t + toi * stride.0 + kt) * h + hoi * stride.1 + kh) * w
                                    + woi * stride.2
                                    + kw];
                                best = best.max(v);
                            }
                        }
                    }
                    out.push(best);
                }
            }
        }
    }
    out
}

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.fill_uniform(&mut rng::stream(seed, "oracle", &[]), -1.0, 1.0);
    t
}

fn run_conv3d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: [usize; 3], pad: [usize; 3]) -> Tensor {
    let mut g = Graph::new();
    let xn = g.leaf(x.clone());
    let wn = g.leaf(w.clone());
    let bn = b.map(|b| g.leaf(b.clone()));
    let out = ops::conv3d(&mut g, xn, wn, bn, stride, pad).unwrap();
    g.output(out)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// conv3d
// ---------------------------------------------------------------------------

#[test]
fn conv3d_all_ones_cube_sums_to_27() {
    let x = Tensor::filled(&[1, 1, 3, 3, 3], 1.0);
    let w = Tensor::filled(&[1, 1, 3, 3, 3], 1.0);
    let out = run_conv3d(&x, &w, None, [1, 1, 1], [0, 0, 0]);
    assert_eq!(out.shape(), &[1, 1, 1, 1, 1]);
    assert_eq!(out.data(), &[27.0]);
}

#[test]
fn conv3d_single_tap_identity() {
    let x = rand_tensor(&[2, 3, 4, 5, 5], 1);
    let mut w = Tensor::zeros(&[3, 3, 1, 1, 1]);
    for c in 0..3 {
        w.data_mut()[c * 3 + c] = 1.0;
    }
    let out = run_conv3d(&x, &w, None, [1, 1, 1], [0, 0, 0]);
    assert_eq!(out.data(), x.data());
}

#[test]
fn conv3d_matches_naive_loop_oracle() {
    let x = rand_tensor(&[1, 2, 4, 5, 5], 2);
    let w = rand_tensor(&[3, 2, 3, 3, 3], 3);
    let b = rand_tensor(&[3], 4);
    let out = run_conv3d(&x, &w, Some(&b), [1, 1, 1], [1, 1, 1]);
    let (expect, dims) = naive_conv3d(
        x.data(),
        (1, 2, 4, 5, 5),
        w.data(),
        (3, 3, 3, 3),
        Some(b.data()),
        (1, 1, 1),
        (1, 1, 1),
    );
    assert_eq!(out.shape(), &[1, 3, dims.0, dims.1, dims.2]);
    assert!(max_abs_diff(out.data(), &expect) < 1e-12);
}

#[test]
fn conv3d_rejects_channel_mismatch_naming_extents() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::zeros(&[1, 4, 3, 3, 3]));
    let w = g.leaf(Tensor::zeros(&[2, 3, 1, 1, 1]));
    let err = ops::conv3d(&mut g, x, w, None, [1, 1, 1], [0, 0, 0]).unwrap_err().to_string();
    assert!(err.contains('4') && err.contains('3'), "diagnostic must name both extents: {err}");
}

#[test]
fn conv_oracle_equivalence_randomized_shapes() {
    // Many random small shapes, strides, and paddings against the reference.
    let mut r = rng::stream(99, "shapes", &[]);
    for trial in 0..40u64 {
        let (n, cin, cout) = (r.gen_range(1..=2), r.gen_range(1..=3), r.gen_range(1..=3));
        let (kt, kh, kw) = (r.gen_range(1..=3), r.gen_range(1..=3), r.gen_range(1..=3));
        let (pt, ph, pw) = (r.gen_range(0..=1), r.gen_range(0..=1), r.gen_range(0..=1));
        let (st, sh, sw) = (r.gen_range(1..=2), r.gen_range(1..=2), r.gen_range(1..=2));
        let t = r.gen_range(kt.max(2)..=6);
        let h = r.gen_range(kh.max(2)..=6);
        let w = r.gen_range(kw.max(2)..=6);
        let x = rand_tensor(&[n, cin, t, h, w], 1000 + trial);
        let wt = rand_tensor(&[cout, cin, kt, kh, kw], 2000 + trial);
        let b = rand_tensor(&[cout], 3000 + trial);
        let out = run_conv3d(&x, &wt, Some(&b), [st, sh, sw], [pt, ph, pw]);
        let (expect, _) = naive_conv3d(
            x.data(),
            (n, cin, t, h, w),
            wt.data(),
            (cout, kt, kh, kw),
            Some(b.data()),
            (st, sh, sw),
            (pt, ph, pw),
        );
        let d = max_abs_diff(out.data(), &expect);
        assert!(d < 1e-12, "trial {trial}: diff {d}");
    }
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

#[test]
fn conv2d_all_ones_is_nine_and_scaling_tap_doubles() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::filled(&[1, 1, 3, 3], 1.0));
    let w = g.leaf(Tensor::filled(&[1, 1, 3, 3], 1.0));
    let out = ops::conv2d(&mut g, x, w, None, [1, 1], [0, 0]).unwrap();
    assert_eq!(g.value(out), &[9.0]);

    let x2 = rand_tensor(&[1, 1, 4, 4], 7);
    let mut g = Graph::new();
    let xn = g.leaf(x2.clone());
    let wn = g.leaf(Tensor::filled(&[1, 1, 1, 1], 2.0));
    let out = ops::conv2d(&mut g, xn, wn, None, [1, 1], [0, 0]).unwrap();
    let doubled: Vec<f64> = x2.data().iter().map(|v| v * 2.0).collect();
    assert_eq!(g.value(out), doubled.as_slice());
}

#[test]
fn conv2d_matches_naive_loop_oracle() {
    let mut r = rng::stream(55, "shapes", &[]);
    for trial in 0..30u64 {
        let (n, cin, cout) = (r.gen_range(1..=2), r.gen_range(1..=3), r.gen_range(1..=3));
        let (kh, kw) = (r.gen_range(1..=3), r.gen_range(1..=3));
        let (ph, pw) = (r.gen_range(0..=1), r.gen_range(0..=1));
        let (sh, sw) = (r.gen_range(1..=2), r.gen_range(1..=2));
        let h = r.gen_range(kh.max(2)..=6);
        let w = r.gen_range(kw.max(2)..=6);
        let x = rand_tensor(&[n, cin, h, w], 4000 + trial);
        let wt = rand_tensor(&[cout, cin, kh, kw], 5000 + trial);
        let mut g = Graph::new();
        let xn = g.leaf(x.clone());
        let wn = g.leaf(wt.clone());
        let out = ops::conv2d(&mut g, xn, wn, None, [sh, sw], [ph, pw]).unwrap();
        let expect = naive_conv2d(x.data(), (n, cin, h, w), wt.data(), (cout, kh, kw), None, (sh, sw), (ph, pw));
        let d = max_abs_diff(g.value(out), &expect);
        assert!(d < 1e-12, "trial {trial}: diff {d}");
    }
}

// ---------------------------------------------------------------------------
// maxpool3d
// ---------------------------------------------------------------------------

#[test]
fn maxpool_enumeration_and_constant_cases() {
    let x = Tensor::new(vec![1, 1, 2, 2, 2], (1..=8).map(f64::from).collect()).unwrap();
    let mut g = Graph::new();
    let xn = g.leaf(x);
    let out = ops::maxpool3d(&mut g, xn, [2, 2, 2], [2, 2, 2]).unwrap();
    assert_eq!(g.value(out), &[8.0]);

    let c = Tensor::filled(&[1, 2, 4, 4, 4], 0.25);
    let mut g = Graph::new();
    let cn = g.leaf(c);
    let out = ops::maxpool3d(&mut g, cn, [2, 2, 2], [2, 2, 2]).unwrap();
    assert!(g.value(out).iter().all(|&v| v == 0.25));
}

#[test]
fn maxpool_matches_window_enumeration_oracle_exactly() {
    let mut r = rng::stream(77, "shapes", &[]);
    for trial in 0..30u64 {
        let (n, c) = (r.gen_range(1..=2), r.gen_range(1..=3));
        let (kt, kh, kw) = (r.gen_range(1..=3), r.gen_range(1..=3), r.gen_range(1..=3));
        let (st, sh, sw) = (r.gen_range(1..=2), r.gen_range(1..=2), r.gen_range(1..=2));
        let t = r.gen_range(kt..=6);
        let h = r.gen_range(kh..=6);
        let w = r.gen_range(kw..=6);
        let x = rand_tensor(&[n, c, t, h, w], 6000 + trial);
        let mut g = Graph::new();
        let xn = g.leaf(x.clone());
        let out = ops::maxpool3d(&mut g, xn, [kt, kh, kw], [st, sh, sw]).unwrap();
        let expect = naive_maxpool3d(x.data(), (n, c, t, h, w), (kt, kh, kw), (st, sh, sw));
        assert_eq!(g.value(out), expect.as_slice(), "trial {trial}");
    }
}

#[test]
fn maxpool_rejects_oversized_kernel() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::zeros(&[1, 1, 2, 2, 2]));
    assert!(ops::maxpool3d(&mut g, x, [3, 1, 1], [1, 1, 1]).is_err());
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

#[test]
fn elu_worked_values() {
    let x = Tensor::new(vec![3], vec![0.0, 2.0, -1.0]).unwrap();
    let mut g = Graph::new();
    let xn = g.leaf(x);
    let out = ops::elu(&mut g, xn, 1.0).unwrap();
    let v = g.value(out);
    assert_eq!(v[0], 0.0);
    assert_eq!(v[1], 2.0);
    assert!((v[2] - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
    assert!((v[2] - (-0.632120558829)).abs() < 1e-12);
}

#[test]
fn relu_matches_elementwise_max_oracle() {
    let x = rand_tensor(&[64], 8);
    let mut g = Graph::new();
    let xn = g.leaf(x.clone());
    let out = ops::relu(&mut g, xn).unwrap();
    let expect: Vec<f64> = x.data().iter().map(|&v| v.max(0.0)).collect();
    assert_eq!(g.value(out), expect.as_slice());
    assert_eq!(expect.iter().filter(|&&v| v == 0.0).count() > 0, true);
}

// ---------------------------------------------------------------------------
// Batch norm
// ---------------------------------------------------------------------------

#[test]
fn batchnorm_standardized_input_passes_through_and_gamma_zero_gives_beta() {
    // Per-channel mean 0, variance 1 input: output equals input up to the
    // epsilon-induced scale.
    let x = Tensor::new(vec![2, 1, 2], vec![-1.0, 1.0, 1.0, -1.0]).unwrap();
    let mut g = Graph::new();
    let xn = g.leaf(x.clone());
    let gamma = g.leaf(Tensor::filled(&[1], 1.0));
    let beta = g.leaf(Tensor::zeros(&[1]));
    let (out, _, _) = ops::batchnorm_train(&mut g, xn, gamma, beta, 1e-5).unwrap();
    for (a, b) in g.value(out).iter().zip(x.data()) {
        assert!((a - b).abs() < 1e-5);
    }

    let y = rand_tensor(&[3, 2, 4], 5);
    let mut g = Graph::new();
    let yn = g.leaf(y);
    let gamma = g.leaf(Tensor::zeros(&[2]));
    let beta = g.leaf(Tensor::new(vec![2], vec![0.5, -0.25]).unwrap());
    let (out, _, _) = ops::batchnorm_train(&mut g, yn, gamma, beta, 1e-5).unwrap();
    let v = g.value(out);
    for ni in 0..3 {
        for ci in 0..2 {
            for k in 0..4 {
                let expect = if ci == 0 { 0.5 } else { -0.25 };
                assert_eq!(v[(ni * 2 + ci) * 4 + k], expect);
            }
        }
    }
}

#[test]
fn batchnorm_train_requires_two_values_per_channel() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::zeros(&[1, 3, 1]));
    let gamma = g.leaf(Tensor::filled(&[3], 1.0));
    let beta = g.leaf(Tensor::zeros(&[3]));
    assert!(ops::batchnorm_train(&mut g, x, gamma, beta, 1e-5).is_err());
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

#[test]
fn linear_identity_zero_and_matmul_oracle() {
    // Identity weight, zero bias: passthrough.
    let x = rand_tensor(&[2, 3], 11);
    let mut w = Tensor::zeros(&[3, 3]);
    for i in 0..3 {
        w.data_mut()[i * 3 + i] = 1.0;
    }
    let mut g = Graph::new();
    let xn = g.leaf(x.clone());
    let wn = g.leaf(w);
    let bn = g.leaf(Tensor::zeros(&[3]));
    let out = ops::linear(&mut g, xn, wn, bn).unwrap();
    assert_eq!(g.value(out), x.data());

    // Zero weight: bias broadcast.
    let mut g = Graph::new();
    let xn = g.leaf(x.clone());
    let wn = g.leaf(Tensor::zeros(&[4, 3]));
    let bias = Tensor::new(vec![4], vec![1.0, -1.0, 2.0, 0.5]).unwrap();
    let bn = g.leaf(bias.clone());
    let out = ops::linear(&mut g, xn, wn, bn).unwrap();
    for row in 0..2 {
        assert_eq!(&g.value(out)[row * 4..(row + 1) * 4], bias.data());
    }

    // Random case against a triple-loop product.
    let x = rand_tensor(&[3, 5], 12);
    let w = rand_tensor(&[4, 5], 13);
    let b = rand_tensor(&[4], 14);
    let mut expect = vec![0.0; 3 * 4];
    for ni in 0..3 {
        for ci in 0..4 {
            let mut acc = b.data()[ci];
            for f in 0..5 {
                acc += x.data()[ni * 5 + f] * w.data()[ci * 5 + f];
            }
            expect[ni * 4 + ci] = acc;
        }
    }
    let mut g = Graph::new();
    let (xn, wn, bn) = (g.leaf(x), g.leaf(w), g.leaf(b));
    let out = ops::linear(&mut g, xn, wn, bn).unwrap();
    assert!(max_abs_diff(g.value(out), &expect) < 1e-12);
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy
// ---------------------------------------------------------------------------

#[test]
fn cross_entropy_uniform_saturated_and_label_validation() {
    // Uniform logits over 4 classes: loss = ln 4.
    let (loss, _) = ops::softmax_cross_entropy(&[0.0; 8], 2, 4, &[1, 3]).unwrap();
    assert!((loss - 4.0f64.ln()).abs() < 1e-12);
    assert!((loss - 1.3862943611).abs() < 1e-9);

    // A huge logit at the true class saturates to ~zero loss.
    let logits = vec![1000.0, 0.0, 0.0];
    let (loss, grad) = ops::softmax_cross_entropy(&logits, 1, 3, &[0]).unwrap();
    assert!(loss.abs() < 1e-12);
    assert!(grad.iter().all(|v| v.is_finite()));

    assert!(ops::softmax_cross_entropy(&[0.0; 4], 1, 4, &[4]).is_err());
}

#[test]
fn cross_entropy_gradient_matches_central_differences() {
    let logits = rand_tensor(&[12], 21);
    let labels = [2usize, 0, 3];
    let (_, grad) = ops::softmax_cross_entropy(logits.data(), 3, 4, &labels).unwrap();
    let eps = 1e-6;
    let mut max_rel: f64 = 0.0;
    for j in 0..12 {
        let mut plus = logits.data().to_vec();
        plus[j] += eps;
        let mut minus = logits.data().to_vec();
        minus[j] -= eps;
        let (lp, _) = ops::softmax_cross_entropy(&plus, 3, 4, &labels).unwrap();
        let (lm, _) = ops::softmax_cross_entropy(&minus, 3, 4, &labels).unwrap();
        let numeric = (lp - lm) / (2.0 * eps);
        let rel = (grad[j] - numeric).abs() / grad[j].abs().max(numeric.abs()).max(1.0);
        max_rel = max_rel.max(rel);
    }
    assert!(max_rel < 1e-6, "max relative error {max_rel}");
}

// ---------------------------------------------------------------------------
// Determinism
// ---------------------------------------------------------------------------

#[test]
fn forward_passes_are_bit_deterministic() {
    let x = rand_tensor(&[2, 3, 4, 8, 8], 31);
    let w = rand_tensor(&[4, 3, 3, 3, 3], 32);
    let run = || {
        let mut g = Graph::new();
        let xn = g.leaf(x.clone());
        let wn = g.leaf(w.clone());
        let out = ops::conv3d(&mut g, xn, wn, None, [1, 1, 1], [1, 1, 1]).unwrap();
        g.output(out)
    };
    let a = run();
    for _ in 0..3 {
        assert_eq!(run().data(), a.data());
    }
}
