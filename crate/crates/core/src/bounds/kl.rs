use super::BoundError;
use crate::numcore::{Segments, Tape, Tensor, Var};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// `Σ KL(Cat(φ_vt) ‖ Uniform(V_vt))` over segments and columns of `phi`
/// (`pairs × heads`). Empty segments contribute nothing.
pub fn aib_cat(phi: &Tensor, segments: &Segments) -> Result<f64, BoundError> {
    kl_cat(phi, None, segments)
}

/// Segment-wise categorical KL of `phi` against `prior` (same layout), or
/// against the uniform distribution over each segment when `prior` is `None`.
pub fn kl_cat(
    phi: &Tensor,
    prior: Option<&Tensor>,
    segments: &Segments,
) -> Result<f64, BoundError> {
    let heads = phi.last_dim();
    if phi.leading() != segments.total() || prior.is_some_and(|q| q.shape() != phi.shape()) {
        return Err(BoundError::Shape {
            what: "categorical parameters",
            expected: segments.total(),
            got: phi.leading(),
        });
    }
    let d = phi.data();
    let mut total = 0.0;
    for (s, range) in segments.iter().enumerate() {
        if range.is_empty() {
            continue;
        }
        let uniform = 1.0 / range.len() as f64;
        for h in 0..heads {
            let mut sum = 0.0;
            let mut acc = 0.0;
            for e in range.clone() {
                let p = d[e * heads + h];
                if !(0.0..=1.0 + 1e-9).contains(&p) {
                    return Err(BoundError::OutOfRange {
                        what: "categorical probability",
                        value: p,
                    });
                }
                sum += p;
                if p > 0.0 {
                    let q = prior.map_or(uniform, |q| q.data()[e * heads + h]);
                    acc += p * (p / q.max(PROB_CLAMP)).ln();
                }
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(BoundError::NotNormalized {
                    segment: s,
                    column: h,
                    sum,
                });
            }
            total += acc;
        }
    }
    Ok(total)
}

/// Categorical KL recorded on the tape from attention logits.
pub fn aib_cat_on(tape: &mut Tape, logits: Var, segments: &Segments) -> Result<Var, BoundError> {
    let heads = tape.value(logits).last_dim();
    let log_phi = tape.segment_log_softmax(logits, segments)?;
    let phi = tape.exp(log_phi)?;
    let ent = tape.mul(phi, log_phi)?;
    let neg_entropy = tape.sum(ent);
    let offset: f64 = segments
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| (r.len() as f64).ln())
        .sum::<f64>()
        * heads as f64;
    Ok(tape.add_scalar(neg_entropy, offset))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AibBern {
    pub value: f64,
    /// Entries that had to be clamped away from 0 or 1.
    pub saturated: usize,
}

/// `Σ KL(Bernoulli(φ) ‖ Bernoulli(α))` over every entry of `phi`.
pub fn aib_bern(phi: &Tensor, alpha: f64) -> Result<AibBern, BoundError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BoundError::OutOfRange {
            what: "alpha",
            value: alpha,
        });
    }
    let mut value = 0.0;
    let mut saturated = 0;
    for &p in phi.data() {
        if !(0.0..=1.0).contains(&p) {
            return Err(BoundError::OutOfRange {
                what: "Bernoulli probability",
                value: p,
            });
        }
        let q = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        if q != p {
            saturated += 1;
        }
        value += q * (q / alpha).ln() + (1.0 - q) * ((1.0 - q) / (1.0 - alpha)).ln();
    }
    Ok(AibBern { value, saturated })
}

/// Bernoulli KL recorded on the tape from logits, using
/// `ln φ = -softplus(-l)` and `ln(1-φ) = -softplus(l)`.
pub fn aib_bern_on(tape: &mut Tape, logits: Var, alpha: f64) -> Result<Var, BoundError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BoundError::OutOfRange {
            what: "alpha",
            value: alpha,
        });
    }
    let phi = tape.sigmoid(logits)?;
    let neg = tape.neg(logits)?;
    let q = tape.sigmoid(neg)?;
    let sp_neg = tape.softplus(neg)?;
    let sp_pos = tape.softplus(logits)?;
    let a = tape.add_scalar(sp_neg, alpha.ln());
    let b = tape.add_scalar(sp_pos, (1.0 - alpha).ln());
    let ta = tape.mul(phi, a)?;
    let tb = tape.mul(q, b)?;
    let both = tape.add(ta, tb)?;
    let s = tape.sum(both);
    Ok(tape.neg(s)?)
}
