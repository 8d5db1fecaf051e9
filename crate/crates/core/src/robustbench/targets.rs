use rand::seq::SliceRandom;
use rand::Rng;

use super::RobustError;
use crate::gibnn::{logits, GibConfig, Mode, ModelInput, ModelParams, Noise};
use crate::graphio::{GraphDataset, Split};
use crate::numcore::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetCounts {
    pub hi: usize,
    pub lo: usize,
    pub rand: usize,
}

impl Default for TargetCounts {
    /// Ten confident, ten borderline, twenty random.
    fn default() -> Self {
        Self {
            hi: 10,
            lo: 10,
            rand: 20,
        }
    }
}

impl TargetCounts {
    pub fn total(&self) -> usize {
        self.hi + self.lo + self.rand
    }
}

/// True-class logit minus the best other logit, per node.
pub fn margins(logits: &Tensor, labels: &[usize]) -> Vec<f64> {
    (0..logits.leading())
        .map(|v| {
            let row = logits.row(v);
            let y = labels[v];
            let other = row
                .iter()
                .enumerate()
                .filter(|&(c, _)| c != y)
                .map(|(_, &x)| x)
                .fold(f64::NEG_INFINITY, f64::max);
            row[y] - other
        })
        .collect()
}

/// Picks attack targets from the test split: the `hi` correctly classified
/// nodes with the largest margin, the `lo` correct ones with the smallest,
/// then `rand` uniformly from the remaining test nodes. Ties go to the
/// lower node index.
pub fn select_targets<R: Rng + ?Sized>(
    params: &ModelParams,
    g: &GraphDataset,
    input: &ModelInput,
    cfg: &GibConfig,
    counts: TargetCounts,
    rng: &mut R,
) -> Result<Vec<usize>, RobustError> {
    let l = logits(input, params, cfg, Mode::Deterministic, &mut Noise::new(0))?;
    pick_targets(
        &margins(&l, g.labels()),
        &g.split_ids(Split::Test),
        counts,
        rng,
    )
}

/// Target choice from precomputed margins; a node is correct when its
/// margin is positive.
pub fn pick_targets<R: Rng + ?Sized>(
    margins: &[f64],
    test: &[usize],
    counts: TargetCounts,
    rng: &mut R,
) -> Result<Vec<usize>, RobustError> {
    let m = margins;
    let mut correct: Vec<usize> = test.iter().copied().filter(|&v| m[v] > 0.0).collect();
    let needed = counts.hi + counts.lo;
    if correct.len() < needed {
        return Err(RobustError::InsufficientCorrect {
            needed,
            available: correct.len(),
        });
    }
    correct.sort_by(|&a, &b| m[b].total_cmp(&m[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = correct[..counts.hi].to_vec();
    let mut low = correct[counts.hi..].to_vec();
    low.sort_by(|&a, &b| m[a].total_cmp(&m[b]).then(a.cmp(&b)));
    chosen.extend_from_slice(&low[..counts.lo]);

    let mut rest: Vec<usize> = test
        .iter()
        .copied()
        .filter(|v| !chosen.contains(v))
        .collect();
    rest.sort_unstable();
    if rest.len() < counts.rand {
        return Err(RobustError::Spec {
            field: "targets",
            message: format!(
                "{} random targets requested, {} test nodes left",
                counts.rand,
                rest.len()
            ),
        });
    }
    rest.shuffle(rng);
    chosen.extend_from_slice(&rest[..counts.rand]);
    Ok(chosen)
}
