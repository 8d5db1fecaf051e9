use std::collections::HashSet;

use rand::Rng;

use super::BoundError;
use crate::graphio::GraphDataset;
use crate::numcore::{log_sum_exp, Tape, Tensor, Var};

fn masked_nodes(
    n: usize,
    labels: &[usize],
    mask: &[bool],
    k: usize,
) -> Result<Vec<usize>, BoundError> {
    if labels.len() != n || mask.len() != n {
        return Err(BoundError::Shape {
            what: "labels and mask",
            expected: n,
            got: labels.len().min(mask.len()),
        });
    }
    let nodes: Vec<usize> = (0..n).filter(|&v| mask[v]).collect();
    if nodes.is_empty() {
        return Err(BoundError::EmptyMask);
    }
    if let Some(&v) = nodes.iter().find(|&&v| labels[v] >= k) {
        return Err(BoundError::OutOfRange {
            what: "label",
            value: labels[v] as f64,
        });
    }
    Ok(nodes)
}

fn log_h(row: &[f64], y: usize) -> f64 {
    row[y] - log_sum_exp(row.iter().copied())
}

/// Mean over masked nodes of `-ln softmax(logits_v)[y_v]`.
pub fn ce_bound(logits: &Tensor, labels: &[usize], mask: &[bool]) -> Result<f64, BoundError> {
    let nodes = masked_nodes(logits.leading(), labels, mask, logits.last_dim())?;
    let total: f64 = nodes
        .iter()
        .map(|&v| -log_h(logits.row(v), labels[v]))
        .sum();
    Ok(total / nodes.len() as f64)
}

/// `-Σ_v [ln h_v - ln(h_v + h'_v)]` with `h_v = softmax(logits_v)[y_v]` and
/// `h'_v` the same score under a random structure.
pub fn contrastive_bound(
    logits: &Tensor,
    logits_random: &Tensor,
    labels: &[usize],
    mask: &[bool],
) -> Result<f64, BoundError> {
    if logits.shape() != logits_random.shape() {
        return Err(BoundError::Shape {
            what: "random-structure logits",
            expected: logits.numel(),
            got: logits_random.numel(),
        });
    }
    let nodes = masked_nodes(logits.leading(), labels, mask, logits.last_dim())?;
    Ok(nodes
        .iter()
        .map(|&v| {
            let a = log_h(logits.row(v), labels[v]);
            let b = log_h(logits_random.row(v), labels[v]);
            -(a - log_sum_exp([a, b].into_iter()))
        })
        .sum())
}

/// One-hot rows for masked nodes, zero rows elsewhere.
fn one_hot(n: usize, k: usize, labels: &[usize], nodes: &[usize], weight: f64) -> Tensor {
    let mut data = vec![0.0; n * k];
    for &v in nodes {
        data[v * k + labels[v]] = weight;
    }
    Tensor::new(vec![n, k], data).expect("n*k entries")
}

/// Mean cross-entropy recorded on the tape.
pub fn ce_on(
    tape: &mut Tape,
    logits: Var,
    labels: &[usize],
    mask: &[bool],
) -> Result<Var, BoundError> {
    let (n, k) = (tape.value(logits).leading(), tape.value(logits).last_dim());
    let nodes = masked_nodes(n, labels, mask, k)?;
    let ls = tape.log_softmax_rows(logits)?;
    let sel = tape.constant(one_hot(n, k, labels, &nodes, 1.0 / nodes.len() as f64));
    let picked = tape.mul(ls, sel)?;
    let s = tape.sum(picked);
    Ok(tape.neg(s)?)
}

/// Contrastive bound on the tape, averaged over masked nodes.
pub fn contrastive_on(
    tape: &mut Tape,
    logits: Var,
    logits_random: Var,
    labels: &[usize],
    mask: &[bool],
) -> Result<Var, BoundError> {
    let (n, k) = (tape.value(logits).leading(), tape.value(logits).last_dim());
    let nodes = masked_nodes(n, labels, mask, k)?;
    let sel = tape.constant(one_hot(n, k, labels, &nodes, 1.0));
    let ones = tape.constant(Tensor::full(&[k, 1], 1.0));
    let mut scores = Vec::with_capacity(2);
    for l in [logits, logits_random] {
        let ls = tape.log_softmax_rows(l)?;
        let picked = tape.mul(ls, sel)?;
        scores.push(tape.matmul(picked, ones)?);
    }
    let both = tape.concat(&scores)?;
    let lse = tape.log_sum_exp_rows(both)?;
    let own = tape.reshape(scores[0], vec![n])?;
    let diff = tape.sub(own, lse)?;
    let mut mvec = vec![0.0; n];
    for &v in &nodes {
        mvec[v] = -1.0 / nodes.len() as f64;
    }
    let mvec = tape.constant(Tensor::vector(mvec));
    let weighted = tape.mul(diff, mvec)?;
    Ok(tape.sum(weighted))
}

/// Same nodes and attributes with `|E|` edges drawn uniformly among all
/// non-loop pairs.
pub fn random_structure<R: Rng + ?Sized>(
    g: &GraphDataset,
    rng: &mut R,
) -> Result<GraphDataset, BoundError> {
    let n = g.num_nodes();
    let want = g.num_edges();
    let capacity = n * n.saturating_sub(1) / 2;
    if want > capacity {
        return Err(BoundError::EdgeCountMismatch {
            expected: want,
            got: capacity,
        });
    }
    let mut seen = HashSet::with_capacity(want);
    let mut edges = Vec::with_capacity(want);
    while edges.len() < want {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v && seen.insert((u.min(v), u.max(v))) {
            edges.push((u.min(v), u.max(v)));
        }
    }
    let out = g.with_edges(edges)?;
    if out.num_edges() != want {
        return Err(BoundError::EdgeCountMismatch {
            expected: want,
            got: out.num_edges(),
        });
    }
    Ok(out)
}
