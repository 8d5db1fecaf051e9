use super::BoundError;
use crate::gibnn::MIXTURE_STD_FLOOR;
use crate::numcore::{log_sum_exp, Tape, Tensor, Var};

fn check_positive(t: &Tensor) -> Result<(), BoundError> {
    match t.data().iter().position(|&v| !(v > 0.0)) {
        Some(index) => Err(BoundError::NonPositiveVariance {
            index,
            value: t.data()[index],
        }),
        None => Ok(()),
    }
}

/// Single-sample estimate `Σ_v [ln N(z_v; μ_v, σ_v²) - ln Σ_i w_i N(z_v; μ0_i, σ0_i²)]`.
///
/// `weights` has length `m`; `means` and `stddevs` are `m × d`.
pub fn xib(
    z: &Tensor,
    mu: &Tensor,
    sigma2: &Tensor,
    weights: &[f64],
    means: &Tensor,
    stddevs: &Tensor,
) -> Result<f64, BoundError> {
    check_positive(sigma2)?;
    check_positive(stddevs)?;
    let d = z.last_dim();
    let m = weights.len();
    if means.shape() != [m, d] || stddevs.shape() != [m, d] {
        return Err(BoundError::Shape {
            what: "mixture components",
            expected: m * d,
            got: means.numel(),
        });
    }
    if weights.iter().any(|&w| w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(BoundError::InvalidTable(
            "mixture weights are not a distribution".into(),
        ));
    }
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut total = 0.0;
    let mut comp = vec![0.0; m];
    for v in 0..z.leading() {
        let (zr, mr, sr) = (z.row(v), mu.row(v), sigma2.row(v));
        let post: f64 = (0..d)
            .map(|j| -half_ln_2pi - 0.5 * sr[j].ln() - 0.5 * (zr[j] - mr[j]).powi(2) / sr[j])
            .sum();
        for (i, c) in comp.iter_mut().enumerate() {
            let (m0, s0) = (means.row(i), stddevs.row(i));
            let lp: f64 = (0..d)
                .map(|j| -half_ln_2pi - s0[j].ln() - 0.5 * ((zr[j] - m0[j]) / s0[j]).powi(2))
                .sum();
            *c = weights[i].max(f64::MIN_POSITIVE).ln() + lp;
        }
        total += post - log_sum_exp(comp.iter().copied());
    }
    Ok(total)
}

/// The same estimate on the tape, with the mixture given by free
/// parameters: softmax `logits` (length `m`), `means` and `raw_std`
/// (`m × d`, deviation `softplus(raw) + floor`).
pub fn xib_on(
    tape: &mut Tape,
    z: Var,
    mu: Var,
    sigma2: Var,
    logits: Var,
    means: Var,
    raw_std: Var,
) -> Result<Var, BoundError> {
    let d = tape.value(z).last_dim();
    let m = tape.value(logits).numel();

    let diff = tape.sub(z, mu)?;
    let sq = tape.square(diff)?;
    let ratio = tape.div(sq, sigma2)?;
    let log_s2 = tape.log(sigma2)?;
    let post_terms = tape.add(log_s2, ratio)?;
    let post_sum = tape.sum(post_terms);
    let post = tape.scale(post_sum, -0.5);

    let sp = tape.softplus(raw_std)?;
    let std = tape.add_scalar(sp, MIXTURE_STD_FLOOR);
    let var = tape.square(std)?;
    let ones_md = tape.constant(Tensor::full(&[m, d], 1.0));
    let prec = tape.div(ones_md, var)?;
    let prec_t = tape.transpose(prec)?;
    let z2 = tape.square(z)?;
    let quad = tape.matmul(z2, prec_t)?;
    let mp = tape.mul(means, prec)?;
    let mp_t = tape.transpose(mp)?;
    let cross = tape.matmul(z, mp_t)?;
    let cross2 = tape.scale(cross, 2.0);
    let log_var = tape.log(var)?;
    let m2 = tape.square(means)?;
    let m2p = tape.mul(m2, prec)?;
    let per_dim = tape.add(log_var, m2p)?;
    let ones_d = tape.constant(Tensor::full(&[d, 1], 1.0));
    let c = tape.matmul(per_dim, ones_d)?;
    let c = tape.reshape(c, vec![m])?;
    let inner = tape.sub(quad, cross2)?;
    let inner = tape.add(inner, c)?;
    let comp = tape.scale(inner, -0.5);
    let row = tape.reshape(logits, vec![1, m])?;
    let log_w = tape.log_softmax_rows(row)?;
    let log_w = tape.reshape(log_w, vec![m])?;
    let comp = tape.add(comp, log_w)?;
    let lse = tape.log_sum_exp_rows(comp)?;
    let mix = tape.sum(lse);
    Ok(tape.sub(post, mix)?)
}
