use super::sampling::{attention_logits_on, sample_bern_on, sample_cat_on};
use super::{
    BoundParams, GibConfig, GibError, ModelParams, Noise, PairIndex, SampleMode, Structure,
};
use crate::graphio::{build_hop_sets, GraphDataset};
use crate::numcore::{Tape, Tensor, Var};

/// Variance floor added after the softplus.
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Relaxed sampling, Gaussian noise and dropout.
    Train,
    /// Expected neighbor weights, `z = 0`, no dropout.
    Deterministic,
    /// Hard neighbor draws and Gaussian noise, no dropout.
    Stochastic,
}

impl Mode {
    fn sample_mode(self) -> SampleMode {
        match self {
            Mode::Train => SampleMode::Train,
            Mode::Deterministic => SampleMode::EvalExpect,
            Mode::Stochastic => SampleMode::EvalHard,
        }
    }
}

/// Node features plus the candidate pools the model samples from.
#[derive(Clone, Debug)]
pub struct ModelInput {
    features: Tensor,
    // leaky_relu(features), and the flat positions where it is nonzero
    active: Tensor,
    nonzero: Vec<usize>,
    pub pairs: PairIndex,
}

impl ModelInput {
    pub fn new(g: &GraphDataset, cfg: &GibConfig) -> Result<Self, GibError> {
        let hops = build_hop_sets(g, cfg.max_hop)?;
        Ok(Self::assemble(
            g.features().clone(),
            PairIndex::new(&hops, cfg.include_self),
            cfg,
        ))
    }

    /// Same candidate pools with a replacement feature matrix.
    pub fn with_features(&self, features: Tensor, cfg: &GibConfig) -> Result<Self, GibError> {
        if features.shape() != self.features.shape() {
            return Err(GibError::Layout(format!(
                "replacement features {:?} do not match {:?}",
                features.shape(),
                self.features.shape()
            )));
        }
        Ok(Self::assemble(features, self.pairs.clone(), cfg))
    }

    fn assemble(features: Tensor, pairs: PairIndex, cfg: &GibConfig) -> Self {
        let slope = cfg.leaky_slope;
        let active = features.map(|x| if x > 0.0 { x } else { slope * x });
        let nonzero = (0..active.numel())
            .filter(|&i| active.data()[i] != 0.0)
            .collect();
        Self {
            features,
            active,
            nonzero,
            pairs,
        }
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn num_nodes(&self) -> usize {
        self.pairs.n
    }

    /// Activated first-layer input. Dropout draws are made only for nonzero
    /// entries, since dropping a zero changes nothing.
    fn first_layer(&self, tape: &mut Tape, cfg: &GibConfig, mode: Mode, noise: &mut Noise) -> Var {
        if mode != Mode::Train || cfg.dropout <= 0.0 {
            return tape.constant(self.active.clone());
        }
        let keep = 1.0 / (1.0 - cfg.dropout);
        let src = self.active.data();
        let mut out = vec![0.0; src.len()];
        for &i in &self.nonzero {
            if noise.uniform() >= cfg.dropout {
                out[i] = src[i] * keep;
            }
        }
        tape.constant(Tensor::new(self.active.shape().to_vec(), out).expect("same shape"))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    /// Attention logits, `pairs × heads`.
    pub logits: Var,
    pub phi: Var,
    pub weights: Var,
    pub mu: Var,
    pub sigma2: Var,
    pub z: Var,
}

#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub layers: Vec<LayerVars>,
    pub logits: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    pub logits: Tensor,
    pub phi: Tensor,
    pub weights: Tensor,
    pub mu: Tensor,
    pub sigma2: Tensor,
    pub z: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    pub logits: Tensor,
}

impl ForwardVars {
    pub fn trace(&self, tape: &Tape) -> ForwardTrace {
        ForwardTrace {
            layers: self
                .layers
                .iter()
                .map(|l| LayerTrace {
                    logits: tape.value(l.logits).clone(),
                    phi: tape.value(l.phi).clone(),
                    weights: tape.value(l.weights).clone(),
                    mu: tape.value(l.mu).clone(),
                    sigma2: tape.value(l.sigma2).clone(),
                    z: tape.value(l.z).clone(),
                })
                .collect(),
            logits: tape.value(self.logits).clone(),
        }
    }
}

/// One layer: transform, score candidates, sample neighbors, aggregate and
/// draw the Gaussian output. Heads are concatenated head-major.
#[allow(clippy::too_many_arguments)]
pub fn layer_forward(
    tape: &mut Tape,
    input: Var,
    w: &[Var],
    a: &[Var],
    pairs: &PairIndex,
    cfg: &GibConfig,
    mode: Mode,
    noise: &mut Noise,
) -> Result<LayerVars, GibError> {
    let mut x = input;
    if mode == Mode::Train && cfg.dropout > 0.0 {
        let mask = tape.constant(noise.dropout_mask(tape.shape(x), cfg.dropout));
        x = tape.mul(x, mask)?;
    }
    let x = tape.leaky_relu(x, cfg.leaky_slope)?;
    layer_core(tape, x, w, a, pairs, cfg, mode, noise)
}

/// [`layer_forward`] after input dropout and activation.
#[allow(clippy::too_many_arguments)]
fn layer_core(
    tape: &mut Tape,
    x: Var,
    w: &[Var],
    a: &[Var],
    pairs: &PairIndex,
    cfg: &GibConfig,
    mode: Mode,
    noise: &mut Noise,
) -> Result<LayerVars, GibError> {
    let n = pairs.n;
    let w_all = tape.concat(w)?;
    let zt = tape.matmul(x, w_all)?;
    let logits = attention_logits_on(tape, zt, a, pairs, cfg.hidden)?;

    let sample_mode = mode.sample_mode();
    let sample = match cfg.structure() {
        Structure::Categorical => sample_cat_on(
            tape,
            logits,
            pairs,
            cfg.k,
            cfg.gumbel_temperature,
            sample_mode,
            noise,
        )?,
        Structure::Bernoulli => {
            sample_bern_on(tape, logits, cfg.gumbel_temperature, sample_mode, noise)?
        }
        Structure::Attention => {
            let phi = tape.segment_softmax(logits, &pairs.segments)?;
            let weights = if mode == Mode::Train && cfg.attention_dropout > 0.0 {
                let mask =
                    tape.constant(noise.dropout_mask(tape.shape(phi), cfg.attention_dropout));
                tape.mul(phi, mask)?
            } else {
                phi
            };
            super::NeighborSample { weights, phi }
        }
    };

    let agg = tape.weighted_aggregate(zt, sample.weights, &pairs.candidate, &pairs.center, n)?;
    let f = cfg.hidden;
    let mu_cols: Vec<usize> = (0..cfg.heads)
        .flat_map(|h| h * 2 * f..h * 2 * f + f)
        .collect();
    let sd_cols: Vec<usize> = mu_cols.iter().map(|c| c + f).collect();
    let mu = tape.select_cols(agg, &mu_cols)?;
    let pre = tape.select_cols(agg, &sd_cols)?;
    let sp = tape.softplus(pre)?;
    let sigma2 = tape.add_scalar(sp, VARIANCE_FLOOR);
    let z = if cfg.gaussian_features() && mode != Mode::Deterministic {
        let eps = tape.constant(noise.normal(&[n, cfg.hidden_total()]));
        let sd = tape.sqrt(sigma2)?;
        let scaled = tape.mul(sd, eps)?;
        tape.add(mu, scaled)?
    } else {
        mu
    };
    Ok(LayerVars {
        logits,
        phi: sample.phi,
        weights: sample.weights,
        mu,
        sigma2,
        z,
    })
}

/// Full forward pass on an existing tape.
pub fn forward_on(
    tape: &mut Tape,
    bound: &BoundParams,
    input: &ModelInput,
    cfg: &GibConfig,
    mode: Mode,
    noise: &mut Noise,
) -> Result<ForwardVars, GibError> {
    let mut h = input.first_layer(tape, cfg, mode, noise);
    let mut layers = Vec::with_capacity(bound.layers.len());
    for (i, (w, a)) in bound.layers.iter().enumerate() {
        let lv = if i == 0 {
            layer_core(tape, h, w, a, &input.pairs, cfg, mode, noise)?
        } else {
            layer_forward(tape, h, w, a, &input.pairs, cfg, mode, noise)?
        };
        h = lv.z;
        layers.push(lv);
    }
    let logits = tape.matmul(h, bound.w_out)?;
    Ok(ForwardVars { layers, logits })
}

/// Forward pass returning the value trace.
pub fn model_forward(
    input: &ModelInput,
    params: &ModelParams,
    cfg: &GibConfig,
    mode: Mode,
    noise: &mut Noise,
) -> Result<ForwardTrace, GibError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let vars = forward_on(&mut tape, &bound, input, cfg, mode, noise)?;
    Ok(vars.trace(&tape))
}

/// Output logits only, without retaining a trace.
pub fn logits(
    input: &ModelInput,
    params: &ModelParams,
    cfg: &GibConfig,
    mode: Mode,
    noise: &mut Noise,
) -> Result<Tensor, GibError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let vars = forward_on(&mut tape, &bound, input, cfg, mode, noise)?;
    Ok(tape.value(vars.logits).clone())
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predict(logits: &Tensor) -> Vec<usize> {
    (0..logits.leading())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (j, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
