use crate::graphio::HopSets;
use crate::numcore::Segments;

/// Flattened `(v, t, u)` candidate triples, sorted by center, hop, candidate.
///
/// Segment `v·T + t` holds the candidates of `V_v,t+1`; empty segments are kept
/// so that segment ids line up with `(v, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairIndex {
    pub n: usize,
    pub max_hop: usize,
    pub center: Vec<usize>,
    pub candidate: Vec<usize>,
    pub hop: Vec<usize>,
    pub segments: Segments,
    /// `v·T + t` per pair.
    pub center_slot: Vec<usize>,
    /// `u·T + t` per pair.
    pub candidate_slot: Vec<usize>,
}

impl PairIndex {
    /// With `include_self`, `v` joins its own hop-1 pool.
    pub fn new(hops: &HopSets, include_self: bool) -> Self {
        let n = hops.num_nodes();
        let t_max = hops.max_hop();
        let mut center = Vec::new();
        let mut candidate = Vec::new();
        let mut hop = Vec::new();
        let mut lengths = Vec::with_capacity(n * t_max);
        for v in 0..n {
            for t in 0..t_max {
                let shell = hops.get(v, t + 1);
                let mut pool: Vec<usize> = shell.to_vec();
                if include_self && t == 0 {
                    let at = pool.partition_point(|&u| u < v);
                    pool.insert(at, v);
                }
                lengths.push(pool.len());
                for u in pool {
                    center.push(v);
                    candidate.push(u);
                    hop.push(t);
                }
            }
        }
        let center_slot = center
            .iter()
            .zip(&hop)
            .map(|(&v, &t)| v * t_max + t)
            .collect();
        let candidate_slot = candidate
            .iter()
            .zip(&hop)
            .map(|(&u, &t)| u * t_max + t)
            .collect();
        Self {
            n,
            max_hop: t_max,
            center,
            candidate,
            hop,
            segments: Segments::from_lengths(lengths),
            center_slot,
            candidate_slot,
        }
    }

    pub fn len(&self) -> usize {
        self.center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.center.is_empty()
    }
}
