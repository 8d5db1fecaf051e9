use super::{NumError, Tape, Tensor, Var};

/// `|a - b| / max(1, |a|, |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Compares tape gradients of a scalar function against central differences.
///
/// `f` rebuilds the computation on a fresh tape from leaf handles for
/// `params` (in order) and returns the scalar root. Returns the maximum
/// relative error over every coordinate of every parameter.
pub fn finite_diff_check<F, E>(params: &[Tensor], h: f64, mut f: F) -> Result<f64, E>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<NumError>,
{
    if !(h > 0.0) {
        return Err(NumError::InvalidStep(h).into());
    }
    let mut tape = Tape::new();
    let leaves: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let root = f(&mut tape, &leaves)?;
    let base = tape.value(root).item();
    if !base.is_finite() {
        return Err(NumError::NonFinite {
            probe: 0,
            value: base,
        }
        .into());
    }
    let grads = tape.backward(root)?;
    let analytic: Vec<Tensor> = leaves
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.get_or_zeros(v, p))
        .collect();
    drop(tape);

    let mut probe = 0;
    let mut eval = |perturbed: &[Tensor]| -> Result<f64, E> {
        probe += 1;
        let mut tape = Tape::new();
        let leaves: Vec<Var> = perturbed.iter().map(|p| tape.leaf(p.clone())).collect();
        let root = f(&mut tape, &leaves)?;
        let value = tape.value(root).item();
        if !value.is_finite() {
            return Err(NumError::NonFinite { probe, value }.into());
        }
        Ok(value)
    };

    let mut worst = 0f64;
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for k in 0..p.numel() {
            let orig = p.data()[k];
            work[pi].data_mut()[k] = orig + h;
            let plus = eval(&work)?;
            work[pi].data_mut()[k] = orig - h;
            let minus = eval(&work)?;
            work[pi].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic[pi].data()[k], numeric));
        }
    }
    Ok(worst)
}
