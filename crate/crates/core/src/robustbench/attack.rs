use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::RobustError;
use crate::graphio::GraphDataset;

/// Mean over nodes of the largest feature value.
pub fn feature_scale(g: &GraphDataset) -> f64 {
    let x = g.features();
    let n = x.leading();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = (0..n)
        .map(|v| x.row(v).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    total / n as f64
}

/// Adds independent `lambda * r * N(0, 1)` noise to every feature entry,
/// with `r` from [`feature_scale`].
pub fn feature_noise_attack<R: Rng + ?Sized>(
    g: &GraphDataset,
    lambda: f64,
    rng: &mut R,
) -> Result<GraphDataset, RobustError> {
    if !(lambda >= 0.0) {
        return Err(RobustError::Spec {
            field: "lambda",
            message: format!("must be non-negative, got {lambda}"),
        });
    }
    if lambda == 0.0 {
        return Ok(g.clone());
    }
    let scale = lambda * feature_scale(g);
    let mut x = g.features().clone();
    for v in x.data_mut() {
        let eps: f64 = rng.sample(StandardNormal);
        *v += scale * eps;
    }
    Ok(g.with_features(x)?)
}

/// Connects `target` to `budget` distinct, previously unconnected nodes of
/// another class, chosen uniformly.
///
/// The chosen endpoints are a prefix of one shuffled candidate list, so the
/// same rng state gives nested edge sets for growing budgets.
pub fn proxy_structural_attack<R: Rng + ?Sized>(
    g: &GraphDataset,
    target: usize,
    budget: usize,
    rng: &mut R,
) -> Result<GraphDataset, RobustError> {
    let n = g.num_nodes();
    if target >= n {
        return Err(crate::graphio::GraphError::NodeOutOfRange { node: target, n }.into());
    }
    if budget == 0 {
        return Err(RobustError::Spec {
            field: "budget",
            message: "structural attacks need a budget of at least 1".into(),
        });
    }
    let y = g.labels()[target];
    let mut eligible: Vec<usize> = (0..n)
        .filter(|&u| u != target && g.labels()[u] != y && !g.has_edge(target, u))
        .collect();
    if eligible.len() < budget {
        return Err(RobustError::InsufficientEligible {
            target,
            budget,
            available: eligible.len(),
        });
    }
    eligible.shuffle(rng);
    let added = eligible[..budget].iter().map(|&u| (target, u));
    Ok(g.with_edges(g.edges().iter().copied().chain(added))?)
}
