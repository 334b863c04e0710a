//! Batch normalization over the channel axis (axis 1) of `[N, C, ...]`.
//!
//! Train mode normalizes with biased batch statistics and reports them so the
//! owning layer can fold them into its running estimates; eval mode consumes
//! running statistics. Both modes are fully differentiable (train mode
//! backpropagates through the batch statistics).

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Op};

fn check(xs: &[usize], gamma_len: usize, beta_len: usize) -> Result<(usize, usize, usize)> {
    if xs.len() < 2 {
        return Err(Error::ShapeMismatch(format!("batchnorm expects [N, C, ...], got {xs:?}")));
    }
    let (n, c) = (xs[0], xs[1]);
    let rest: usize = xs[2..].iter().product();
    if gamma_len != c || beta_len != c {
        return Err(Error::ShapeMismatch(format!(
            "batchnorm gamma/beta lengths ({gamma_len}, {beta_len}) do not match {c} channels"
        )));
    }
    Ok((n, c, rest))
}

fn normalize(
    x: &[f64],
    n: usize,
    c: usize,
    rest: usize,
    gamma: &[f64],
    beta: &[f64],
    mean: &[f64],
    invstd: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for ci in 0..c {
        let (m, inv, ga, be) = (mean[ci], invstd[ci], gamma[ci], beta[ci]);
        for ni in 0..n {
            let base = (ni * c + ci) * rest;
            for k in base..base + rest {
                out[k] = (x[k] - m) * inv * ga + be;
            }
        }
    }
    out
}

/// Train-mode batchnorm. Returns the node plus the biased batch mean and
/// variance per channel (for running-stat updates by the caller).
pub fn batchnorm_train(
    g: &mut Graph,
    x: NodeId,
    gamma: NodeId,
    beta: NodeId,
    eps: f64,
) -> Result<(NodeId, Vec<f64>, Vec<f64>)> {
    let xs = g.shape(x).to_vec();
    let (n, c, rest) = check(&xs, g.value(gamma).len(), g.value(beta).len())?;
    let m = n * rest;
    if m < 2 {
        return Err(Error::InvalidConfig(format!(
            "batchnorm train mode needs at least 2 values per channel, got {m}"
        )));
    }
    let xv = g.value(x);
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ci in 0..c {
        let mut s = 0.0;
        for ni in 0..n {
            let base = (ni * c + ci) * rest;
            s += xv[base..base + rest].iter().sum::<f64>();
        }
        mean[ci] = s / m as f64;
        let mut v = 0.0;
        for ni in 0..n {
            let base = (ni * c + ci) * rest;
            for k in base..base + rest {
                let d = xv[k] - mean[ci];
                v += d * d;
            }
        }
        var[ci] = v / m as f64;
    }
    let invstd: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
    let out = normalize(xv, n, c, rest, g.value(gamma), g.value(beta), &mean, &invstd);
    let needs = g.needs(x) || g.needs(gamma) || g.needs(beta);
    let node = g.push(
        xs,
        out,
        needs,
        Op::BatchNorm { x, gamma, beta, mean: mean.clone(), invstd, train: true },
    );
    Ok((node, mean, var))
}

/// Eval-mode batchnorm using running statistics.
pub fn batchnorm_eval(
    g: &mut Graph,
    x: NodeId,
    gamma: NodeId,
    beta: NodeId,
    running_mean: &[f64],
    running_var: &[f64],
    eps: f64,
) -> Result<NodeId> {
    let xs = g.shape(x).to_vec();
    let (n, c, rest) = check(&xs, g.value(gamma).len(), g.value(beta).len())?;
    if running_mean.len() != c || running_var.len() != c {
        return Err(Error::ShapeMismatch(format!(
            "running stats length ({}, {}) does not match {c} channels",
            running_mean.len(),
            running_var.len()
        )));
    }
    let invstd: Vec<f64> = running_var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
    let out = normalize(g.value(x), n, c, rest, g.value(gamma), g.value(beta), running_mean, &invstd);
    let needs = g.needs(x) || g.needs(gamma) || g.needs(beta);
    Ok(g.push(
        xs,
        out,
        needs,
        Op::BatchNorm { x, gamma, beta, mean: running_mean.to_vec(), invstd, train: false },
    ))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    g: &[f64],
    x: &[f64],
    xs: &[usize],
    gamma: &[f64],
    mean: &[f64],
    invstd: &[f64],
    train: bool,
    need_dx: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (n, c) = (xs[0], xs[1]);
    let rest: usize = xs[2..].iter().product();
    let m = (n * rest) as f64;
    let mut dx = vec![0.0; if need_dx { x.len() } else { 0 }];
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for ci in 0..c {
        let (mu, inv, ga) = (mean[ci], invstd[ci], gamma[ci]);
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for ni in 0..n {
            let base = (ni * c + ci) * rest;
            for k in base..base + rest {
                let xhat = (x[k] - mu) * inv;
                sum_g += g[k];
                sum_gx += g[k] * xhat;
            }
        }
        dgamma[ci] = sum_gx;
        dbeta[ci] = sum_g;
        if !need_dx {
            continue;
        }
        if train {
            let mean_g = sum_g / m;
            let mean_gx = sum_gx / m;
            let scale = ga * inv;
            for ni in 0..n {
                let base = (ni * c + ci) * rest;
                for k in base..base + rest {
                    let xhat = (x[k] - mu) * inv;
                    dx[k] = scale * (g[k] - mean_g - xhat * mean_gx);
                }
            }
        } else {
            for ni in 0..n {
                let base = (ni * c + ci) * rest;
                for k in base..base + rest {
                    dx[k] = g[k] * ga * inv;
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}
