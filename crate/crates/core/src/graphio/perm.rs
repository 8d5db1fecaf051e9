use rand::seq::SliceRandom;
use rand::Rng;

use super::{GraphDataset, GraphError, Split};
use crate::numcore::Tensor;

/// Bijection on `0..n`; node `v` moves to `apply(v)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self, GraphError> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &m in &map {
            if m >= n || seen[m] {
                return Err(GraphError::NotBijective(format!(
                    "image {m} repeated or out of range for {n} nodes"
                )));
            }
            seen[m] = true;
        }
        Ok(Self { map })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        map.shuffle(rng);
        Self { map }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn apply(&self, v: usize) -> usize {
        self.map[v]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (v, &m) in self.map.iter().enumerate() {
            inv[m] = v;
        }
        Self { map: inv }
    }

    /// Rows reordered so that row `apply(v)` of the result is row `v` of `x`.
    pub fn permute_rows(&self, x: &Tensor) -> Result<Tensor, GraphError> {
        let rows = x.shape().first().copied().unwrap_or(0);
        if rows != self.map.len() {
            return Err(GraphError::SizeMismatch {
                what: "permutation size",
                expected: rows,
                got: self.map.len(),
            });
        }
        let width = x.numel() / rows.max(1);
        let mut out = vec![0.0; x.numel()];
        for (v, &m) in self.map.iter().enumerate() {
            out[m * width..(m + 1) * width].copy_from_slice(&x.data()[v * width..(v + 1) * width]);
        }
        Ok(Tensor::new(x.shape().to_vec(), out).expect("same shape"))
    }

    fn permute_vec<T: Clone>(&self, xs: &[T]) -> Vec<T> {
        let mut out = xs.to_vec();
        for (v, &m) in self.map.iter().enumerate() {
            out[m] = xs[v].clone();
        }
        out
    }
}

/// Relabels nodes of `g` through `p`: features, labels, masks and edges.
pub fn permute(g: &GraphDataset, p: &Permutation) -> Result<GraphDataset, GraphError> {
    if p.len() != g.num_nodes() {
        return Err(GraphError::SizeMismatch {
            what: "permutation size",
            expected: g.num_nodes(),
            got: p.len(),
        });
    }
    let edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .map(|&(u, v)| (p.apply(u), p.apply(v)))
        .collect();
    GraphDataset::new(
        edges,
        p.permute_rows(g.features())?,
        p.permute_vec(g.labels()),
        g.num_classes(),
        [
            p.permute_vec(g.mask(Split::Train)),
            p.permute_vec(g.mask(Split::Val)),
            p.permute_vec(g.mask(Split::Test)),
        ],
    )
}
