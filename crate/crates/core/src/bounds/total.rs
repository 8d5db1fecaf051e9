use serde::{Deserialize, Serialize};

use super::{
    aib_bern, aib_bern_on, aib_cat, aib_cat_on, ce_bound, ce_on, contrastive_on, xib, xib_on,
    BoundError,
};
use crate::gibnn::{
    BoundParams, ForwardTrace, ForwardVars, GibConfig, ModelInput, ModelParams, Objective,
    RegReduction, Structure,
};
use crate::numcore::{Tape, Var};

/// One evaluation of the objective.
///
/// `total = ce + reg_scale · (beta1 · Σ aib + beta2 · Σ xib)`, where `aib`
/// and `xib` are the raw per-layer sums over nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch: Option<usize>,
    pub ce: f64,
    pub aib: Vec<f64>,
    pub xib: Vec<f64>,
    pub reg_scale: f64,
    pub total: f64,
    pub beta1: f64,
    pub beta2: f64,
    #[serde(default)]
    pub aib_saturated: usize,
}

impl LossReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// Recomputes the total from its parts.
    pub fn composed_total(&self) -> f64 {
        let a: f64 = self.aib.iter().sum();
        let x: f64 = self.xib.iter().sum();
        self.ce + self.reg_scale * (self.beta1 * a + self.beta2 * x)
    }
}

/// Tape handles of the loss terms.
#[derive(Clone, Debug)]
pub struct LossVars {
    pub total: Var,
    pub ce: Var,
    pub aib: Vec<Var>,
    pub xib: Vec<Var>,
    pub reg_scale: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl LossVars {
    pub fn report(&self, tape: &Tape) -> LossReport {
        LossReport {
            epoch: None,
            ce: tape.value(self.ce).item(),
            aib: self.aib.iter().map(|&v| tape.value(v).item()).collect(),
            xib: self.xib.iter().map(|&v| tape.value(v).item()).collect(),
            reg_scale: self.reg_scale,
            total: tape.value(self.total).item(),
            beta1: self.beta1,
            beta2: self.beta2,
            aib_saturated: 0,
        }
    }
}

fn reg_scale(cfg: &GibConfig, n: usize, mask: &[bool]) -> f64 {
    match cfg.reg_reduction {
        RegReduction::Sum => 1.0,
        RegReduction::PerTrainNode => 1.0 / mask.iter().filter(|&&b| b).count().max(1) as f64,
        RegReduction::PerNode => 1.0 / n.max(1) as f64,
    }
}

fn layer_sets(cfg: &GibConfig) -> (Vec<usize>, Vec<usize>) {
    let mut s_a = if cfg.uses_aib() {
        cfg.s_a.clone()
    } else {
        Vec::new()
    };
    let mut s_x = if cfg.uses_xib() {
        cfg.s_x.clone()
    } else {
        Vec::new()
    };
    s_a.sort_unstable();
    s_x.sort_unstable();
    (s_a, s_x)
}

/// Records the objective on the tape. `random_logits` must be given when the
/// configured objective is contrastive.
#[allow(clippy::too_many_arguments)]
pub fn total_loss_on(
    tape: &mut Tape,
    fwd: &ForwardVars,
    bound: &BoundParams,
    input: &ModelInput,
    labels: &[usize],
    mask: &[bool],
    cfg: &GibConfig,
    beta1: f64,
    beta2: f64,
    random_logits: Option<Var>,
) -> Result<LossVars, BoundError> {
    cfg.validate()?;
    let ce = match (cfg.objective, random_logits) {
        (Objective::CrossEntropy, _) => ce_on(tape, fwd.logits, labels, mask)?,
        (Objective::Contrastive, Some(r)) => contrastive_on(tape, fwd.logits, r, labels, mask)?,
        (Objective::Contrastive, None) => {
            return Err(BoundError::InvalidTable(
                "contrastive objective needs random-structure logits".into(),
            ))
        }
    };
    let (s_a, s_x) = layer_sets(cfg);
    let mut aib = Vec::with_capacity(s_a.len());
    for &l in &s_a {
        let logits = fwd.layers[l - 1].logits;
        aib.push(match cfg.structure() {
            Structure::Categorical => aib_cat_on(tape, logits, &input.pairs.segments)?,
            Structure::Bernoulli => aib_bern_on(tape, logits, cfg.alpha)?,
            Structure::Attention => unreachable!("attention variants carry no structure term"),
        });
    }
    let mut xibs = Vec::with_capacity(s_x.len());
    for &l in &s_x {
        let lv = fwd.layers[l - 1];
        let &(_, logits, means, raw) = bound
            .mixtures
            .iter()
            .find(|m| m.0 == l)
            .ok_or_else(|| BoundError::InvalidTable(format!("no mixture for layer {l}")))?;
        xibs.push(xib_on(tape, lv.z, lv.mu, lv.sigma2, logits, means, raw)?);
    }
    let scale = reg_scale(cfg, input.num_nodes(), mask);
    let mut total = ce;
    for (terms, beta) in [(&aib, beta1), (&xibs, beta2)] {
        if beta == 0.0 {
            continue;
        }
        for &t in terms.iter() {
            let w = tape.scale(t, beta * scale);
            total = tape.add(total, w)?;
        }
    }
    Ok(LossVars {
        total,
        ce,
        aib,
        xib: xibs,
        reg_scale: scale,
        beta1,
        beta2,
    })
}

/// Value-level objective from a recorded trace (cross-entropy objective only).
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    trace: &ForwardTrace,
    params: &ModelParams,
    input: &ModelInput,
    labels: &[usize],
    mask: &[bool],
    cfg: &GibConfig,
    beta1: f64,
    beta2: f64,
) -> Result<LossReport, BoundError> {
    cfg.validate()?;
    let ce = ce_bound(&trace.logits, labels, mask)?;
    let (s_a, s_x) = layer_sets(cfg);
    let mut saturated = 0;
    let mut aib = Vec::new();
    for &l in &s_a {
        let phi = &trace.layers[l - 1].phi;
        aib.push(match cfg.structure() {
            Structure::Categorical => aib_cat(phi, &input.pairs.segments)?,
            Structure::Bernoulli => {
                let r = aib_bern(phi, cfg.alpha)?;
                saturated += r.saturated;
                r.value
            }
            Structure::Attention => unreachable!("attention variants carry no structure term"),
        });
    }
    let mut xibs = Vec::new();
    for &l in &s_x {
        let t = &trace.layers[l - 1];
        let mix = params
            .mixtures
            .iter()
            .find(|m| m.layer == l)
            .ok_or_else(|| BoundError::InvalidTable(format!("no mixture for layer {l}")))?;
        xibs.push(xib(
            &t.z,
            &t.mu,
            &t.sigma2,
            &mix.weights(),
            &mix.means,
            &mix.stddevs(),
        )?);
    }
    let mut report = LossReport {
        epoch: None,
        ce,
        aib,
        xib: xibs,
        reg_scale: reg_scale(cfg, input.num_nodes(), mask),
        total: 0.0,
        beta1,
        beta2,
        aib_saturated: saturated,
    };
    report.total = report.composed_total();
    Ok(report)
}
