//! Reference implementations shared by the oracle and acceptance suites.
//! Written straight from the op definitions, independent of the library
//! kernels.

use shiftfast_core::rng;
use shiftfast_core::tensor::Tensor;

/// Seven nested loops straight from the convolution definition.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv3d(
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
                                            let wv = wgt
                                                [(((co * cin + ci) * kt + kti) * kh + khi) * kw + kwi];
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

pub fn naive_conv2d(
    x: &[f64],
    (n, cin, h, w): (usize, usize, usize, usize),
    wgt: &[f64],
    (cout, kh, kw): (usize, usize, usize),
    bias: Option<&[f64]>,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Vec<f64> {
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

pub fn naive_maxpool3d(
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

pub fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.fill_uniform(&mut rng::stream(seed, "oracle", &[]), -1.0, 1.0);
    t
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
