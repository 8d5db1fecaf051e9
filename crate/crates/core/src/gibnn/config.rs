use serde::{Deserialize, Serialize};

use super::GibError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Cat,
    Bern,
    GatBaseline,
    AibOnly,
    XibOnly,
}

/// Neighbor sampler used by the `aib_only` variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Cat,
    Bern,
}

/// How neighbor weights are produced from attention logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Structure {
    Categorical,
    Bernoulli,
    /// Softmax attention used directly as weights.
    Attention,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EvalMode {
    Deterministic,
    Stochastic { samples: usize },
}

/// Scale applied to the regularizer sums before they join the mean
/// cross-entropy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegReduction {
    /// Unscaled sums over all nodes.
    Sum,
    /// Divided by the number of training nodes, which keeps the balance of a
    /// summed cross-entropy against summed regularizers.
    PerTrainNode,
    /// Divided by the number of nodes.
    PerNode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    CrossEntropy,
    /// Contrast against a forward pass on a random edge set of equal size.
    Contrastive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibConfig {
    pub variant: Variant,
    pub sampler: Sampler,
    pub layers: usize,
    /// Per-head hidden width `f'`.
    pub hidden: usize,
    pub heads: usize,
    pub max_hop: usize,
    pub k: usize,
    pub alpha: f64,
    pub gumbel_temperature: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub mixture_components: usize,
    /// 1-based layer indices regularized by the structure term.
    pub s_a: Vec<usize>,
    /// 1-based layer indices regularized by the feature term.
    pub s_x: Vec<usize>,
    pub dropout: f64,
    pub attention_dropout: f64,
    pub leaky_slope: f64,
    pub include_self: bool,
    pub reg_reduction: RegReduction,
    pub objective: Objective,
    pub eval_mode: EvalMode,
}

impl Default for GibConfig {
    fn default() -> Self {
        Self::gib_cat()
    }
}

impl GibConfig {
    /// Categorical sampler with the structural-attack Cora setting.
    pub fn gib_cat() -> Self {
        Self {
            variant: Variant::Cat,
            sampler: Sampler::Cat,
            layers: 2,
            hidden: 8,
            heads: 8,
            max_hop: 2,
            k: 3,
            alpha: 0.5,
            gumbel_temperature: 1.0,
            beta1: 0.001,
            beta2: 0.01,
            mixture_components: 100,
            s_a: vec![1, 2],
            s_x: vec![1],
            dropout: 0.6,
            attention_dropout: 0.0,
            leaky_slope: 0.2,
            include_self: false,
            reg_reduction: RegReduction::PerTrainNode,
            objective: Objective::CrossEntropy,
            eval_mode: EvalMode::Deterministic,
        }
    }

    pub fn gib_bern() -> Self {
        Self {
            variant: Variant::Bern,
            sampler: Sampler::Bern,
            gumbel_temperature: 0.1,
            ..Self::gib_cat()
        }
    }

    /// Deterministic attention over the one-hop neighborhood plus self.
    pub fn gat_baseline() -> Self {
        Self {
            variant: Variant::GatBaseline,
            max_hop: 1,
            include_self: true,
            attention_dropout: 0.6,
            beta1: 0.0,
            beta2: 0.0,
            ..Self::gib_cat()
        }
    }

    /// Preset hyperparameters for a variant. The ablations start from the
    /// categorical preset.
    pub fn preset(variant: Variant) -> Self {
        match variant {
            Variant::Cat => Self::gib_cat(),
            Variant::Bern => Self::gib_bern(),
            Variant::GatBaseline => Self::gat_baseline(),
            Variant::AibOnly | Variant::XibOnly => Self {
                variant,
                ..Self::gib_cat()
            },
        }
    }

    pub fn structure(&self) -> Structure {
        match (self.variant, self.sampler) {
            (Variant::Cat, _) | (Variant::AibOnly, Sampler::Cat) => Structure::Categorical,
            (Variant::Bern, _) | (Variant::AibOnly, Sampler::Bern) => Structure::Bernoulli,
            (Variant::GatBaseline | Variant::XibOnly, _) => Structure::Attention,
        }
    }

    /// Whether layer outputs are sampled around their mean in training.
    pub fn gaussian_features(&self) -> bool {
        matches!(
            self.variant,
            Variant::Cat | Variant::Bern | Variant::XibOnly
        )
    }

    pub fn uses_aib(&self) -> bool {
        matches!(
            self.variant,
            Variant::Cat | Variant::Bern | Variant::AibOnly
        )
    }

    pub fn uses_xib(&self) -> bool {
        matches!(
            self.variant,
            Variant::Cat | Variant::Bern | Variant::XibOnly
        )
    }

    /// Layers (1-based) that carry a mixture marginal.
    pub fn mixture_layers(&self) -> Vec<usize> {
        if self.uses_xib() {
            self.s_x.clone()
        } else {
            Vec::new()
        }
    }

    pub fn hidden_total(&self) -> usize {
        self.hidden * self.heads
    }

    pub fn validate(&self) -> Result<(), GibError> {
        let bad = |field: &'static str, message: String| Err(GibError::Config { field, message });
        if self.layers == 0 {
            return bad("layers", "must be at least 1".into());
        }
        if self.hidden == 0 {
            return bad("hidden", "must be at least 1".into());
        }
        if self.heads == 0 {
            return bad("heads", "must be at least 1".into());
        }
        if self.max_hop == 0 {
            return bad("max_hop", "must be at least 1".into());
        }
        if self.k == 0 {
            return bad("k", "must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", format!("must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.gumbel_temperature > 0.0) || !self.gumbel_temperature.is_finite() {
            return bad(
                "gumbel_temperature",
                format!("must be positive, got {}", self.gumbel_temperature),
            );
        }
        for (field, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b >= 0.0) || !b.is_finite() {
                return bad(
                    field,
                    format!("must be a finite non-negative number, got {b}"),
                );
            }
        }
        for (field, p) in [
            ("dropout", self.dropout),
            ("attention_dropout", self.attention_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return bad(field, format!("must lie in [0, 1), got {p}"));
            }
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky_slope", "must be finite".into());
        }
        if let EvalMode::Stochastic { samples: 0 } = self.eval_mode {
            return bad(
                "eval_mode",
                "stochastic evaluation needs at least one sample".into(),
            );
        }
        for (field, set) in [("s_a", &self.s_a), ("s_x", &self.s_x)] {
            if let Some(&l) = set.iter().find(|&&l| l == 0 || l > self.layers) {
                return bad(
                    field,
                    format!("layer index {l} outside 1..={}", self.layers),
                );
            }
            let mut sorted = set.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != set.len() {
                return bad(field, "repeated layer index".into());
            }
        }
        if self.variant != Variant::GatBaseline {
            let Some(&top) = self.s_x.iter().max() else {
                return bad("s_x", "must be nonempty".into());
            };
            if let Some(l) = (top + 1..=self.layers).find(|l| !self.s_a.contains(l)) {
                return bad(
                    "s_a",
                    format!("must contain every layer above max(s_x) = {top}; missing {l}"),
                );
            }
        }
        if self.uses_xib() && self.mixture_components == 0 {
            return bad("mixture_components", "must be at least 1".into());
        }
        Ok(())
    }
}
