//! Softmax cross-entropy, stabilized by max-subtraction.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Op};

fn validate_labels(n: usize, c: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for a batch of {n}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidConfig(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    Ok(())
}

/// `(softmax(logits) - onehot(labels))` per row, before the 1/N scaling.
pub(crate) fn softmax_minus_onehot(logits: &[f64], n: usize, c: usize, labels: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; n * c];
    for ni in 0..n {
        let row = &logits[ni * c..(ni + 1) * c];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &v in row {
            denom += (v - max).exp();
        }
        for ci in 0..c {
            out[ni * c + ci] = (row[ci] - max).exp() / denom;
        }
        out[ni * c + labels[ni]] -= 1.0;
    }
    out
}

/// Mean negative log-likelihood of the labels under `softmax(logits)`,
/// together with its gradient `(softmax - onehot) / N`. This is the
/// standalone form; [`cross_entropy`] records the same computation on a graph.
pub fn softmax_cross_entropy(logits: &[f64], n: usize, c: usize, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    validate_labels(n, c, labels)?;
    let mut loss = 0.0;
    for ni in 0..n {
        let row = &logits[ni * c..(ni + 1) * c];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &v in row {
            denom += (v - max).exp();
        }
        loss -= row[labels[ni]] - max - denom.ln();
    }
    loss /= n as f64;
    let mut grad = softmax_minus_onehot(logits, n, c, labels);
    for v in &mut grad {
        *v /= n as f64;
    }
    Ok((loss, grad))
}

/// Graph op producing the scalar mean cross-entropy over the batch.
pub fn cross_entropy(g: &mut Graph, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
    let ls = g.shape(logits).to_vec();
    if ls.len() != 2 {
        return Err(Error::ShapeMismatch(format!("cross_entropy expects [N, C] logits, got {ls:?}")));
    }
    let (n, c) = (ls[0], ls[1]);
    let (loss, _) = softmax_cross_entropy(g.value(logits), n, c, labels)?;
    let needs = g.needs(logits);
    Ok(g.push(vec![1], vec![loss], needs, Op::CrossEntropy { logits, labels: labels.to_vec() }))
}

/// Row-wise softmax of a logit matrix; plain function for evaluation-side
/// consumers (the ensemble monotonicity checks).
pub fn softmax_rows(logits: &[f64], n: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * c];
    for ni in 0..n {
        let row = &logits[ni * c..(ni + 1) * c];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &v in row {
            denom += (v - max).exp();
        }
        for ci in 0..c {
            out[ni * c + ci] = (row[ci] - max).exp() / denom;
        }
    }
    out
}
