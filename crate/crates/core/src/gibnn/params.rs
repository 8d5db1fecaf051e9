use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{GibConfig, GibError};
use crate::numcore::{Tape, Tensor, Var};

/// Floor added to mixture standard deviations.
pub const MIXTURE_STD_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    /// Per head, `in × 2f'`.
    pub w: Vec<Tensor>,
    /// Per head, `T × 4f'`.
    pub a: Vec<Tensor>,
}

/// Learnable Gaussian-mixture marginal over one layer's outputs.
///
/// Weights are a softmax over `logits`; standard deviations are
/// `softplus(raw_std) + MIXTURE_STD_FLOOR`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureParams {
    pub layer: usize,
    pub logits: Tensor,
    pub means: Tensor,
    pub raw_std: Tensor,
}

impl MixtureParams {
    pub fn weights(&self) -> Vec<f64> {
        let l = self.logits.data();
        let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = l.iter().map(|x| (x - max).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|x| x / s).collect()
    }

    pub fn stddevs(&self) -> Tensor {
        self.raw_std
            .map(|r| crate::numcore::softplus_value(r) + MIXTURE_STD_FLOOR)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<LayerParams>,
    pub w_out: Tensor,
    pub mixtures: Vec<MixtureParams>,
}

/// Raw value whose softplus is `y`.
fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("rows*cols entries")
}

/// Glorot-uniform weights, uniform mixture weights, standard-normal mixture
/// means and unit mixture deviations, all drawn from one seeded stream.
pub fn init_params(
    cfg: &GibConfig,
    in_features: usize,
    num_classes: usize,
    seed: u64,
) -> Result<ModelParams, GibError> {
    cfg.validate()?;
    if in_features == 0 || num_classes == 0 {
        return Err(GibError::Config {
            field: "dimensions",
            message: format!(
                "input width {in_features} and class count {num_classes} must be positive"
            ),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = cfg.hidden;
    let layers = (0..cfg.layers)
        .map(|l| {
            let in_dim = if l == 0 {
                in_features
            } else {
                cfg.hidden_total()
            };
            LayerParams {
                w: (0..cfg.heads)
                    .map(|_| glorot(in_dim, 2 * f, &mut rng))
                    .collect(),
                a: (0..cfg.heads)
                    .map(|_| glorot(cfg.max_hop, 4 * f, &mut rng))
                    .collect(),
            }
        })
        .collect();
    let w_out = glorot(cfg.hidden_total(), num_classes, &mut rng);
    let d = cfg.hidden_total();
    let m = cfg.mixture_components;
    let mixtures = cfg
        .mixture_layers()
        .into_iter()
        .map(|layer| MixtureParams {
            layer,
            logits: Tensor::zeros(&[m]),
            means: Tensor::new(
                vec![m, d],
                (0..m * d).map(|_| rng.sample(StandardNormal)).collect(),
            )
            .expect("m*d entries"),
            raw_std: Tensor::full(&[m, d], softplus_inverse(1.0 - MIXTURE_STD_FLOOR)),
        })
        .collect();
    Ok(ModelParams {
        layers,
        w_out,
        mixtures,
    })
}

/// Tape handles for every parameter tensor, in [`ModelParams::tensors`] order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub layers: Vec<(Vec<Var>, Vec<Var>)>,
    pub w_out: Var,
    pub mixtures: Vec<(usize, Var, Var, Var)>,
}

impl BoundParams {
    /// Regroups handles given in [`ModelParams::tensors`] order.
    pub fn from_vars(layout: &ModelParams, vars: &[Var]) -> Result<Self, GibError> {
        if vars.len() != layout.tensors().len() {
            return Err(GibError::Layout(format!(
                "expected {} parameter handles, got {}",
                layout.tensors().len(),
                vars.len()
            )));
        }
        let mut it = vars.iter().copied();
        let layers = layout
            .layers
            .iter()
            .map(|l| {
                let w = it.by_ref().take(l.w.len()).collect();
                let a = it.by_ref().take(l.a.len()).collect();
                (w, a)
            })
            .collect();
        let w_out = it.next().expect("counted");
        let mixtures = layout
            .mixtures
            .iter()
            .map(|m| {
                let (l, mu, s) = (it.next(), it.next(), it.next());
                (
                    m.layer,
                    l.expect("counted"),
                    mu.expect("counted"),
                    s.expect("counted"),
                )
            })
            .collect();
        Ok(Self {
            layers,
            w_out,
            mixtures,
        })
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for (w, a) in &self.layers {
            out.extend(w);
            out.extend(a);
        }
        out.push(self.w_out);
        for &(_, l, m, s) in &self.mixtures {
            out.extend([l, m, s]);
        }
        out
    }
}

impl ModelParams {
    /// Every tensor in a fixed order: per layer the head `W`s then head `a`s,
    /// then `W_out`, then per mixture its logits, means and raw deviations.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(&l.w);
            out.extend(&l.a);
        }
        out.push(&self.w_out);
        for m in &self.mixtures {
            out.extend([&m.logits, &m.means, &m.raw_std]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.extend(&mut l.w);
            out.extend(&mut l.a);
        }
        out.push(&mut self.w_out);
        for m in &mut self.mixtures {
            out.extend([&mut m.logits, &mut m.means, &mut m.raw_std]);
        }
        out
    }

    /// Names aligned with [`ModelParams::tensors`].
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.extend((0..l.w.len()).map(|h| format!("layer{}.w.{h}", i + 1)));
            out.extend((0..l.a.len()).map(|h| format!("layer{}.a.{h}", i + 1)));
        }
        out.push("w_out".into());
        for m in &self.mixtures {
            for part in ["logits", "means", "raw_std"] {
                out.push(format!("mixture{}.{part}", m.layer));
            }
        }
        out
    }

    /// Weight decay applies to network weights but not mixture parameters.
    pub fn decay_mask(&self) -> Vec<bool> {
        let net = self
            .layers
            .iter()
            .map(|l| l.w.len() + l.a.len())
            .sum::<usize>()
            + 1;
        let mut mask = vec![true; net];
        mask.extend(std::iter::repeat_n(false, 3 * self.mixtures.len()));
        mask
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                (
                    l.w.iter().map(|t| tape.leaf(t.clone())).collect(),
                    l.a.iter().map(|t| tape.leaf(t.clone())).collect(),
                )
            })
            .collect();
        let w_out = tape.leaf(self.w_out.clone());
        let mixtures = self
            .mixtures
            .iter()
            .map(|m| {
                (
                    m.layer,
                    tape.leaf(m.logits.clone()),
                    tape.leaf(m.means.clone()),
                    tape.leaf(m.raw_std.clone()),
                )
            })
            .collect();
        BoundParams {
            layers,
            w_out,
            mixtures,
        }
    }

    /// Rebuilds parameters of the same layout from tensors in
    /// [`ModelParams::tensors`] order.
    pub fn with_tensors(&self, tensors: Vec<Tensor>) -> Result<Self, GibError> {
        let mut out = self.clone();
        if tensors.len() != out.tensors().len() {
            return Err(GibError::Layout(format!(
                "expected {} tensors, got {}",
                out.tensors().len(),
                tensors.len()
            )));
        }
        for (slot, t) in out.tensors_mut().into_iter().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(GibError::Layout(format!(
                    "tensor shape {:?} does not match {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(out)
    }
}
