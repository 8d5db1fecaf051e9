use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{adam_step, beta_at, AdamState, OptimConfig, Schedule, TrainError};
use crate::bounds::{random_structure, total_loss_on, LossReport};
use crate::gibnn::{
    forward_on, init_params, logits, predict, EvalMode, GibConfig, Mode, ModelInput, ModelParams,
    Noise, Objective,
};
use crate::graphio::{GraphDataset, Split};
use crate::numcore::{Tape, Tensor};

/// Seed of the training noise stream for a run seeded with `seed`.
pub fn noise_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    #[serde(flatten)]
    pub loss: LossReport,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: ModelParams,
    pub adam: AdamState,
    pub epoch: usize,
    pub best_val: f64,
    pub best_epoch: usize,
    pub best_params: ModelParams,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    /// Record of the selected epoch.
    pub fn best_record(&self) -> Option<&EpochRecord> {
        self.history.get(self.best_epoch)
    }
}

/// Fraction of masked nodes whose prediction matches the label; `None` for
/// an empty mask.
pub fn accuracy(pred: &[usize], labels: &[usize], mask: &[bool]) -> Option<f64> {
    let mut hit = 0usize;
    let mut total = 0usize;
    for ((&p, &y), &m) in pred.iter().zip(labels).zip(mask) {
        if m {
            total += 1;
            hit += usize::from(p == y);
        }
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

/// Evaluation-mode logits: one deterministic pass, or the mean of
/// `samples` stochastic passes.
pub fn evaluate_logits(
    params: &ModelParams,
    input: &ModelInput,
    cfg: &GibConfig,
    eval_seed: u64,
) -> Result<Tensor, TrainError> {
    match cfg.eval_mode {
        EvalMode::Deterministic => Ok(logits(
            input,
            params,
            cfg,
            Mode::Deterministic,
            &mut Noise::new(eval_seed),
        )?),
        EvalMode::Stochastic { samples } => {
            let mut noise = Noise::new(eval_seed);
            let mut acc: Option<Tensor> = None;
            for _ in 0..samples {
                let l = logits(input, params, cfg, Mode::Stochastic, &mut noise)?;
                acc = Some(match acc {
                    None => l,
                    Some(mut a) => {
                        for (x, y) in a.data_mut().iter_mut().zip(l.data()) {
                            *x += y;
                        }
                        a
                    }
                });
            }
            let s = samples as f64;
            Ok(acc.expect("samples >= 1").map(|x| x / s))
        }
    }
}

/// Fraction of masked nodes predicted correctly.
pub fn evaluate(
    params: &ModelParams,
    input: &ModelInput,
    cfg: &GibConfig,
    labels: &[usize],
    mask: &[bool],
) -> Result<f64, TrainError> {
    let l = evaluate_logits(params, input, cfg, 0)?;
    accuracy(&predict(&l), labels, mask).ok_or(TrainError::EmptyMask)
}

/// Trains from a seeded initialization for `schedule.total_epochs` epochs,
/// keeping the parameters with the best validation accuracy (earliest on
/// ties). Each epoch record is also written as a JSON line to `log`.
pub fn fit(
    g: &GraphDataset,
    input: &ModelInput,
    cfg: &GibConfig,
    schedule: &Schedule,
    optim: &OptimConfig,
    seed: u64,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainState, TrainError> {
    cfg.validate()?;
    schedule.validate()?;
    let params = init_params(cfg, g.num_features(), g.num_classes(), seed)?;
    let decay = params.decay_mask();
    let adam = AdamState::new(&params.tensors());
    let mut state = TrainState {
        best_params: params.clone(),
        params,
        adam,
        epoch: 0,
        best_val: f64::NEG_INFINITY,
        best_epoch: 0,
        seed,
        history: Vec::with_capacity(schedule.total_epochs),
    };
    let mut noise = Noise::new(noise_seed(seed));
    let labels = g.labels();
    let train_mask = g.mask(Split::Train);
    let has_val = g.mask(Split::Val).iter().any(|&b| b);
    let select_mask = if has_val {
        g.mask(Split::Val)
    } else {
        train_mask
    };

    for epoch in 0..schedule.total_epochs {
        let (b1, b2) = beta_at(schedule, epoch);
        let mut tape = Tape::new();
        let bound = state.params.bind(&mut tape);
        let fwd = forward_on(&mut tape, &bound, input, cfg, Mode::Train, &mut noise)?;
        let random_logits = match cfg.objective {
            Objective::CrossEntropy => None,
            Objective::Contrastive => {
                let rg = random_structure(g, noise.rng())?;
                let rin = ModelInput::new(&rg, cfg)?;
                Some(forward_on(&mut tape, &bound, &rin, cfg, Mode::Train, &mut noise)?.logits)
            }
        };
        let loss = total_loss_on(
            &mut tape,
            &fwd,
            &bound,
            input,
            labels,
            train_mask,
            cfg,
            b1,
            b2,
            random_logits,
        )?;
        let mut report = loss.report(&tape);
        report.epoch = Some(epoch);
        if !report.total.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                report: Box::new(report),
            });
        }
        let grads = tape.backward(loss.total)?;
        let values: Vec<Tensor> = bound
            .vars()
            .into_iter()
            .zip(state.params.tensors())
            .map(|(v, p)| grads.get_or_zeros(v, p))
            .collect();
        drop(tape);
        adam_step(
            &mut state.params.tensors_mut(),
            &values,
            &mut state.adam,
            optim,
            &decay,
            epoch,
        )?;

        let pred = predict(&evaluate_logits(&state.params, input, cfg, 0)?);
        let acc = |s| accuracy(&pred, labels, g.mask(s)).unwrap_or(0.0);
        let record = EpochRecord {
            loss: report,
            train_acc: acc(Split::Train),
            val_acc: acc(Split::Val),
            test_acc: acc(Split::Test),
        };
        let score = accuracy(&pred, labels, select_mask).unwrap_or(0.0);
        if score > state.best_val {
            state.best_val = score;
            state.best_epoch = epoch;
            state.best_params = state.params.clone();
        }
        if let Some(w) = log.as_deref_mut() {
            writeln!(
                w,
                "{}",
                serde_json::to_string(&record).expect("record serializes")
            )?;
        }
        state.history.push(record);
        state.epoch = epoch + 1;
    }
    Ok(state)
}
