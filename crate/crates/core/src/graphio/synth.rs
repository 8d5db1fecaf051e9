//! Seeded synthetic graphs for tests and desk-scale experiments.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GraphDataset, GraphError, SplitIds};
use crate::numcore::Tensor;

/// Contextual stochastic block model with sparse binary bag-of-words features.
///
/// Each class owns a block of `topic_words` vocabulary entries. A node draws
/// `words_per_node` distinct words, each from its class block with
/// probability `signal` and uniformly from the vocabulary otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsbmSpec {
    pub nodes: usize,
    pub classes: usize,
    pub features: usize,
    pub topic_words: usize,
    pub words_per_node: usize,
    pub signal: f64,
    pub avg_degree: f64,
    pub homophily: f64,
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl CsbmSpec {
    /// Scaled-down graph with the class count, density, label homophily and
    /// split proportions of the Cora citation graph.
    pub fn cora_like(nodes: usize, seed: u64) -> Self {
        let scale = nodes as f64 / 2708.0;
        Self {
            nodes,
            classes: 7,
            features: ((1433.0 * scale).round() as usize).max(70),
            topic_words: ((60.0 * scale).round() as usize).max(6),
            words_per_node: 18,
            signal: 0.35,
            avg_degree: 3.9,
            homophily: 0.81,
            train_per_class: 20,
            val: (500.0 * scale).round() as usize,
            test: (1000.0 * scale).round() as usize,
            seed,
        }
    }

    pub fn generate(&self) -> Result<GraphDataset, GraphError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.nodes;
        let k = self.classes.max(1);
        let labels: Vec<usize> = (0..n)
            .map(|i| if i < k { i } else { rng.random_range(0..k) })
            .collect();
        let mut by_class = vec![Vec::new(); k];
        for (v, &y) in labels.iter().enumerate() {
            by_class[y].push(v);
        }

        let target = ((n as f64) * self.avg_degree / 2.0).round() as usize;
        let mut seen = HashSet::new();
        let mut edges = Vec::new();
        let mut attempts = 0;
        while edges.len() < target && attempts < target * 50 {
            attempts += 1;
            let u = rng.random_range(0..n);
            let v = if rng.random_bool(self.homophily.clamp(0.0, 1.0)) || k == 1 {
                *by_class[labels[u]].choose(&mut rng).expect("class has u")
            } else {
                let mut c = rng.random_range(0..k - 1);
                if c >= labels[u] {
                    c += 1;
                }
                match by_class[c].choose(&mut rng) {
                    Some(&v) => v,
                    None => continue,
                }
            };
            if u != v && seen.insert((u.min(v), u.max(v))) {
                edges.push((u, v));
            }
        }

        let f = self.features;
        let block = self.topic_words.min(f / k).max(1);
        let mut x = vec![0.0; n * f];
        for v in 0..n {
            let words = self.words_per_node.min(f);
            let mut placed = 0;
            let mut guard = 0;
            while placed < words && guard < words * 100 {
                guard += 1;
                let w = if rng.random_bool(self.signal.clamp(0.0, 1.0)) {
                    labels[v] * block + rng.random_range(0..block)
                } else {
                    rng.random_range(0..f)
                };
                if x[v * f + w] == 0.0 {
                    x[v * f + w] = 1.0;
                    placed += 1;
                }
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut train = Vec::new();
        let mut per_class = vec![0; k];
        let mut rest = Vec::new();
        for v in order {
            if per_class[labels[v]] < self.train_per_class {
                per_class[labels[v]] += 1;
                train.push(v);
            } else {
                rest.push(v);
            }
        }
        let val_end = self.val.min(rest.len());
        let test_end = (val_end + self.test).min(rest.len());
        let mut splits = SplitIds {
            train,
            val: rest[..val_end].to_vec(),
            test: rest[val_end..test_end].to_vec(),
            num_classes: Some(k),
        };
        splits.train.sort_unstable();
        splits.val.sort_unstable();
        splits.test.sort_unstable();
        let features = Tensor::new(vec![n, f], x).expect("feature buffer sized n*f");
        GraphDataset::from_split_ids(edges, features, labels, k, &splits)
    }
}

/// Two dense communities joined by one bridge edge, with class-aligned
/// two-dimensional features. Nodes `0..half` are class 0.
pub fn two_communities(half: usize, seed: u64) -> Result<GraphDataset, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * half;
    let mut edges = Vec::new();
    for c in 0..2 {
        let base = c * half;
        for i in 0..half {
            edges.push((base + i, base + (i + 1) % half));
            let j = rng.random_range(0..half);
            if j != i {
                edges.push((base + i, base + j));
            }
        }
    }
    edges.push((half - 1, half));
    let labels: Vec<usize> = (0..n).map(|v| v / half).collect();
    let mut x = Vec::with_capacity(n * 2);
    for &y in &labels {
        let noise: f64 = rng.random_range(-0.5..0.5);
        x.push(if y == 0 { 1.0 } else { 0.0 } + noise);
        x.push(if y == 1 { 1.0 } else { 0.0 } - noise);
    }
    let splits = SplitIds {
        train: vec![0, 1, half, half + 1],
        val: vec![2, half + 2],
        test: (3..half).chain(half + 3..n).collect(),
        num_classes: Some(2),
    };
    GraphDataset::from_split_ids(
        edges,
        Tensor::new(vec![n, 2], x).expect("n*2 features"),
        labels,
        2,
        &splits,
    )
}
