use std::collections::VecDeque;

use super::{GraphDataset, GraphError, Permutation};

/// Per-node shortest-path shells `V_vt` for `t = 1..=max_hop`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HopSets {
    max_hop: usize,
    sets: Vec<Vec<Vec<usize>>>,
}

impl HopSets {
    pub fn max_hop(&self) -> usize {
        self.max_hop
    }

    pub fn num_nodes(&self) -> usize {
        self.sets.len()
    }

    /// Nodes at distance exactly `t` from `v`, ascending. `t` is 1-based.
    pub fn get(&self, v: usize, t: usize) -> &[usize] {
        &self.sets[v][t - 1]
    }

    /// Total number of `(v, t, u)` triples.
    pub fn total_pairs(&self) -> usize {
        self.sets.iter().flatten().map(Vec::len).sum()
    }

    /// Relabels every node through `p`, keeping each shell sorted.
    pub fn relabel(&self, p: &Permutation) -> Result<Self, GraphError> {
        if p.len() != self.sets.len() {
            return Err(GraphError::SizeMismatch {
                what: "permutation size",
                expected: self.sets.len(),
                got: p.len(),
            });
        }
        let mut sets = vec![Vec::new(); self.sets.len()];
        for (v, shells) in self.sets.iter().enumerate() {
            sets[p.apply(v)] = shells
                .iter()
                .map(|shell| {
                    let mut s: Vec<usize> = shell.iter().map(|&u| p.apply(u)).collect();
                    s.sort_unstable();
                    s
                })
                .collect();
        }
        Ok(Self {
            max_hop: self.max_hop,
            sets,
        })
    }
}

/// BFS from every node, truncated at depth `max_hop`.
pub fn build_hop_sets(g: &GraphDataset, max_hop: usize) -> Result<HopSets, GraphError> {
    if max_hop == 0 {
        return Err(GraphError::ZeroMaxHop);
    }
    let n = g.num_nodes();
    let mut dist = vec![usize::MAX; n];
    let mut touched = Vec::new();
    let mut queue = VecDeque::new();
    let mut sets = Vec::with_capacity(n);
    for v in 0..n {
        let mut shells = vec![Vec::new(); max_hop];
        dist[v] = 0;
        touched.push(v);
        queue.push_back(v);
        while let Some(u) = queue.pop_front() {
            let d = dist[u];
            if d == max_hop {
                continue;
            }
            for &w in g.neighbors(u) {
                if dist[w] == usize::MAX {
                    dist[w] = d + 1;
                    touched.push(w);
                    shells[d].push(w);
                    queue.push_back(w);
                }
            }
        }
        for &u in &touched {
            dist[u] = usize::MAX;
        }
        touched.clear();
        for s in &mut shells {
            s.sort_unstable();
        }
        sets.push(shells);
    }
    Ok(HopSets { max_hop, sets })
}
