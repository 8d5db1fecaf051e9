use super::{GibError, Noise, PairIndex};
use crate::numcore::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    /// Differentiable relaxation of the sampler.
    Train,
    /// Exact discrete draws.
    EvalHard,
    /// Expected weights, no randomness.
    EvalExpect,
}

/// Neighbor weights and the distribution parameters they were drawn from,
/// both `pairs × heads`.
#[derive(Clone, Copy, Debug)]
pub struct NeighborSample {
    pub weights: Var,
    pub phi: Var,
}

/// Per-pair attention logits for every head, `pairs × heads`.
///
/// `zt` holds the transformed features with head-major blocks of width
/// `2·hidden`; `a[h]` is `T × 4·hidden`. The logit of `(v, t, u)` for head `h`
/// is `<concat(zt_v, zt_u), a[h]_t>`.
pub fn attention_logits_on(
    tape: &mut Tape,
    zt: Var,
    a: &[Var],
    pairs: &PairIndex,
    hidden: usize,
) -> Result<Var, GibError> {
    let width = 2 * hidden;
    let n = pairs.n;
    let t_max = pairs.max_hop;
    let mut heads = Vec::with_capacity(a.len());
    for (h, &ah) in a.iter().enumerate() {
        if tape.shape(ah) != [t_max, 2 * width] {
            return Err(GibError::Layout(format!(
                "attention weights for head {h} have shape {:?}, expected [{t_max}, {}]",
                tape.shape(ah),
                2 * width
            )));
        }
        let zh = tape.slice(zt, h * width, (h + 1) * width)?;
        let left = tape.slice(ah, 0, width)?;
        let right = tape.slice(ah, width, 2 * width)?;
        let left_t = tape.transpose(left)?;
        let right_t = tape.transpose(right)?;
        let sl = tape.matmul(zh, left_t)?;
        let sr = tape.matmul(zh, right_t)?;
        let sl = tape.reshape(sl, vec![n * t_max, 1])?;
        let sr = tape.reshape(sr, vec![n * t_max, 1])?;
        let gl = tape.gather_rows(sl, &pairs.center_slot)?;
        let gr = tape.gather_rows(sr, &pairs.candidate_slot)?;
        heads.push(tape.add(gl, gr)?);
    }
    Ok(tape.concat(&heads)?)
}

/// Single-head logits from plain tensors; `z_tilde` is `n × 2f'`, `a` is `T × 4f'`.
pub fn attention_logits(
    z_tilde: &Tensor,
    pairs: &PairIndex,
    a: &Tensor,
) -> Result<Vec<f64>, GibError> {
    let hidden = z_tilde.last_dim() / 2;
    if z_tilde.ndim() != 2 || z_tilde.last_dim() != 2 * hidden || a.last_dim() != 4 * hidden {
        return Err(GibError::Layout(format!(
            "transformed features {:?} and attention weights {:?} disagree",
            z_tilde.shape(),
            a.shape()
        )));
    }
    let mut tape = Tape::new();
    let z = tape.constant(z_tilde.clone());
    let av = tape.constant(a.clone());
    let out = attention_logits_on(&mut tape, z, &[av], pairs, hidden)?;
    Ok(tape.value(out).data().to_vec())
}

fn check_finite(tape: &Tape, logits: Var) -> Result<(), GibError> {
    let v = tape.value(logits);
    match v.first_non_finite() {
        Some(i) => Err(GibError::NonFinite {
            what: "attention logits",
            index: i,
            value: v.data()[i],
        }),
        None => Ok(()),
    }
}

/// Categorical sampling of `k` neighbors with replacement per `(v, t)` and head.
pub fn sample_cat_on(
    tape: &mut Tape,
    logits: Var,
    pairs: &PairIndex,
    k: usize,
    temperature: f64,
    mode: SampleMode,
    noise: &mut Noise,
) -> Result<NeighborSample, GibError> {
    check_finite(tape, logits)?;
    let phi = tape.segment_softmax(logits, &pairs.segments)?;
    let shape = tape.shape(logits).to_vec();
    let weights = match mode {
        SampleMode::EvalExpect => tape.scale(phi, k as f64),
        SampleMode::Train => {
            let mut total = None;
            for _ in 0..k {
                let g = tape.constant(noise.gumbel(&shape));
                let perturbed = tape.add(logits, g)?;
                let scaled = tape.scale(perturbed, 1.0 / temperature);
                let y = tape.segment_softmax(scaled, &pairs.segments)?;
                total = Some(match total {
                    None => y,
                    Some(acc) => tape.add(acc, y)?,
                });
            }
            total.expect("k >= 1")
        }
        SampleMode::EvalHard => {
            let heads = shape[1];
            let p = tape.value(phi).data().to_vec();
            let mut counts = vec![0.0; p.len()];
            for range in pairs.segments.iter() {
                if range.is_empty() {
                    continue;
                }
                for h in 0..heads {
                    for _ in 0..k {
                        let u = noise.uniform();
                        let mut acc = 0.0;
                        let mut pick = range.end - 1;
                        for e in range.clone() {
                            acc += p[e * heads + h];
                            if u < acc {
                                pick = e;
                                break;
                            }
                        }
                        counts[pick * heads + h] += 1.0;
                    }
                }
            }
            tape.constant(Tensor::new(shape, counts)?)
        }
    };
    Ok(NeighborSample { weights, phi })
}

/// Independent Bernoulli inclusion of every candidate per head.
pub fn sample_bern_on(
    tape: &mut Tape,
    logits: Var,
    temperature: f64,
    mode: SampleMode,
    noise: &mut Noise,
) -> Result<NeighborSample, GibError> {
    check_finite(tape, logits)?;
    let phi = tape.sigmoid(logits)?;
    let shape = tape.shape(logits).to_vec();
    let weights = match mode {
        SampleMode::EvalExpect => phi,
        SampleMode::Train => {
            let l = tape.constant(noise.logistic(&shape));
            let perturbed = tape.add(logits, l)?;
            let scaled = tape.scale(perturbed, 1.0 / temperature);
            tape.sigmoid(scaled)?
        }
        SampleMode::EvalHard => {
            let keep: Vec<f64> = tape
                .value(phi)
                .data()
                .to_vec()
                .into_iter()
                .map(|p| if noise.uniform() < p { 1.0 } else { 0.0 })
                .collect();
            tape.constant(Tensor::new(shape, keep)?)
        }
    };
    Ok(NeighborSample { weights, phi })
}

/// Value-level categorical sampler; returns `(weights, phi)`.
pub fn neighbor_sample_cat(
    logits: &Tensor,
    pairs: &PairIndex,
    k: usize,
    temperature: f64,
    mode: SampleMode,
    noise: &mut Noise,
) -> Result<(Tensor, Tensor), GibError> {
    let mut tape = Tape::new();
    let l = tape.constant(as_matrix(logits));
    let s = sample_cat_on(&mut tape, l, pairs, k, temperature, mode, noise)?;
    Ok((tape.value(s.weights).clone(), tape.value(s.phi).clone()))
}

/// Value-level Bernoulli sampler; returns `(weights, phi)`.
pub fn neighbor_sample_bern(
    logits: &Tensor,
    temperature: f64,
    mode: SampleMode,
    noise: &mut Noise,
) -> Result<(Tensor, Tensor), GibError> {
    let mut tape = Tape::new();
    let l = tape.constant(as_matrix(logits));
    let s = sample_bern_on(&mut tape, l, temperature, mode, noise)?;
    Ok((tape.value(s.weights).clone(), tape.value(s.phi).clone()))
}

fn as_matrix(t: &Tensor) -> Tensor {
    if t.ndim() == 1 {
        t.clone().reshaped(vec![t.numel(), 1]).expect("same size")
    } else {
        t.clone()
    }
}
