use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    feature_noise_attack, proxy_structural_attack, select_targets, Outcome, RobustError,
    RobustReport, TargetCounts, TargetResult,
};
use crate::gibnn::{predict, GibConfig, ModelInput, ModelParams};
use crate::graphio::{GraphDataset, Split};
use crate::train::{evaluate, evaluate_logits, fit, OptimConfig, Schedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    FeatureNoise,
    AddEdges,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    /// Attack after training.
    Evasive,
    /// Attack before training.
    Poisoning,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "one")]
    pub budget: usize,
    pub mode: AttackMode,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl AttackSpec {
    pub fn feature_noise(lambda: f64, mode: AttackMode, trials: usize, seed: u64) -> Self {
        Self {
            kind: AttackKind::FeatureNoise,
            lambda,
            budget: 1,
            mode,
            trials,
            seed,
        }
    }

    pub fn add_edges(budget: usize, mode: AttackMode, seed: u64) -> Self {
        Self {
            kind: AttackKind::AddEdges,
            lambda: 0.0,
            budget,
            mode,
            trials: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), RobustError> {
        let bad = |field, message: String| Err(RobustError::Spec { field, message });
        if self.trials == 0 {
            return bad("trials", "must be at least 1".into());
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(
                "lambda",
                format!("must be finite and non-negative, got {}", self.lambda),
            );
        }
        if self.kind == AttackKind::AddEdges && self.budget == 0 {
            return bad(
                "budget",
                "structural attacks need a budget of at least 1".into(),
            );
        }
        Ok(())
    }

    /// Noise ratio or edge budget, whichever the kind uses.
    pub fn param(&self) -> f64 {
        match self.kind {
            AttackKind::FeatureNoise => self.lambda,
            AttackKind::AddEdges => self.budget as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub config: GibConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSettings {
    pub epochs: usize,
    pub optim: OptimConfig,
    pub targets: TargetCounts,
    pub workers: usize,
}

impl Default for ProtocolSettings {
    fn default() -> Self {
        Self {
            epochs: 2000,
            optim: OptimConfig::default(),
            targets: TargetCounts::default(),
            workers: 1,
        }
    }
}

const TARGET_SLOT: u64 = u32::MAX as u64;

/// Independent stream for one (base seed, run seed, trial, slot) cell.
fn stream(base: u64, seed: u64, trial: usize, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(((trial as u64) << 32) | slot);
    rng
}

struct Job<'a> {
    model: usize,
    seed_index: usize,
    seed: u64,
    spec: &'a ModelSpec,
}

fn train(
    g: &GraphDataset,
    cfg: &GibConfig,
    settings: &ProtocolSettings,
    seed: u64,
) -> Result<(ModelParams, ModelInput), RobustError> {
    let input = ModelInput::new(g, cfg)?;
    let schedule = Schedule::new(settings.epochs, cfg.beta1, cfg.beta2)?;
    let st = fit(g, &input, cfg, &schedule, &settings.optim, seed, None)?;
    Ok((st.best_params, input))
}

fn target_correct(
    params: &ModelParams,
    input: &ModelInput,
    cfg: &GibConfig,
    g: &GraphDataset,
    v: usize,
) -> Result<bool, RobustError> {
    let pred = predict(&evaluate_logits(params, input, cfg, 0)?);
    Ok(pred[v] == g.labels()[v])
}

fn structural_outcome(
    model: &str,
    spec: &AttackSpec,
    param: f64,
    seed: u64,
    trial: usize,
    targets: Vec<TargetResult>,
) -> Outcome {
    let hits = targets.iter().filter(|t| t.correct).count();
    Outcome {
        model: model.into(),
        kind: AttackKind::AddEdges,
        mode: spec.mode,
        param,
        seed,
        trial,
        accuracy: hits as f64 / targets.len().max(1) as f64,
        targets,
    }
}

type JobResult = Result<Vec<(usize, Outcome)>, RobustError>;

/// Every spec for one (model, seed) pair. The clean model is trained once
/// and shared by all evasive runs and by target selection.
fn run_job(
    g: &GraphDataset,
    job: &Job,
    specs: &[AttackSpec],
    settings: &ProtocolSettings,
) -> JobResult {
    let cfg = &job.spec.config;
    let name = job.spec.name.as_str();
    let seed = job.seed;
    let (clean, clean_input) = train(g, cfg, settings, seed)?;
    let structural = specs.iter().any(|s| s.kind == AttackKind::AddEdges);
    let targets = if structural {
        let mut rng = stream(0, seed, 0, TARGET_SLOT);
        select_targets(&clean, g, &clean_input, cfg, settings.targets, &mut rng)?
    } else {
        Vec::new()
    };

    let mut out = Vec::new();
    let mut baseline_modes = Vec::new();
    for (si, spec) in specs.iter().enumerate() {
        match spec.kind {
            AttackKind::FeatureNoise => {
                for trial in 0..spec.trials {
                    let mut rng = stream(spec.seed, seed, trial, 0);
                    let attacked = feature_noise_attack(g, spec.lambda, &mut rng)?;
                    let acc = match spec.mode {
                        AttackMode::Evasive => {
                            let input =
                                clean_input.with_features(attacked.features().clone(), cfg)?;
                            evaluate(&clean, &input, cfg, g.labels(), g.mask(Split::Test))?
                        }
                        AttackMode::Poisoning => {
                            let (params, input) = train(&attacked, cfg, settings, seed)?;
                            evaluate(&params, &input, cfg, g.labels(), g.mask(Split::Test))?
                        }
                    };
                    out.push((
                        si,
                        Outcome {
                            model: name.into(),
                            kind: spec.kind,
                            mode: spec.mode,
                            param: spec.lambda,
                            seed,
                            trial,
                            accuracy: acc,
                            targets: Vec::new(),
                        },
                    ));
                }
            }
            AttackKind::AddEdges => {
                if !baseline_modes.contains(&spec.mode) {
                    baseline_modes.push(spec.mode);
                    let pred = predict(&evaluate_logits(&clean, &clean_input, cfg, 0)?);
                    let results = targets
                        .iter()
                        .map(|&v| TargetResult {
                            node: v,
                            correct: pred[v] == g.labels()[v],
                        })
                        .collect();
                    out.push((si, structural_outcome(name, spec, 0.0, seed, 0, results)));
                }
                for trial in 0..spec.trials {
                    let mut results = Vec::with_capacity(targets.len());
                    for (ti, &v) in targets.iter().enumerate() {
                        let mut rng = stream(spec.seed, seed, trial, ti as u64 + 1);
                        let attacked = proxy_structural_attack(g, v, spec.budget, &mut rng)?;
                        let correct = match spec.mode {
                            AttackMode::Evasive => {
                                let input = ModelInput::new(&attacked, cfg)?;
                                target_correct(&clean, &input, cfg, &attacked, v)?
                            }
                            AttackMode::Poisoning => {
                                let (params, input) = train(&attacked, cfg, settings, seed)?;
                                target_correct(&params, &input, cfg, &attacked, v)?
                            }
                        };
                        results.push(TargetResult { node: v, correct });
                    }
                    out.push((
                        si,
                        structural_outcome(name, spec, spec.param(), seed, trial, results),
                    ));
                }
            }
        }
    }
    Ok(out)
}

/// Runs every spec for every model and seed.
///
/// Evasive runs evaluate the clean model of each seed on attacked graphs;
/// poisoning runs retrain on each attacked graph. Structural specs attack
/// each selected target separately and score the fraction of targets still
/// classified correctly; a budget-0 row records the clean target accuracy.
/// Jobs are spread over `settings.workers` threads; the report order does
/// not depend on the worker count.
pub fn run_sweep(
    g: &GraphDataset,
    models: &[ModelSpec],
    specs: &[AttackSpec],
    seeds: &[u64],
    settings: &ProtocolSettings,
) -> Result<RobustReport, RobustError> {
    for s in specs {
        s.validate()?;
    }
    if seeds.is_empty() {
        return Err(RobustError::Spec {
            field: "seeds",
            message: "at least one seed is required".into(),
        });
    }
    let jobs: Vec<Job> = models
        .iter()
        .enumerate()
        .flat_map(|(mi, spec)| {
            seeds
                .iter()
                .enumerate()
                .map(move |(seed_index, &seed)| Job {
                    model: mi,
                    seed_index,
                    seed,
                    spec,
                })
        })
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, JobResult)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..settings.workers.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let r = run_job(g, job, specs, settings);
                results.lock().expect("no worker panicked").push((i, r));
            });
        }
    });
    let mut results = results.into_inner().expect("no worker panicked");
    results.sort_by_key(|(i, _)| *i);
    let mut keyed = Vec::new();
    for (i, r) in results {
        let job = &jobs[i];
        for (si, o) in r? {
            keyed.push((
                (
                    job.model,
                    si,
                    o.param.to_bits() != 0,
                    job.seed_index,
                    o.trial,
                ),
                o,
            ));
        }
    }
    // budget-0 rows sort ahead of the attacked rows of the same spec
    keyed.sort_by_key(|k| k.0);
    let outcomes = keyed.into_iter().map(|(_, o)| o).collect();
    let mut notes = Vec::new();
    if specs.iter().any(|s| s.kind == AttackKind::FeatureNoise) {
        notes.push("feature noise is added to the raw features without re-binarization".into());
    }
    if specs.iter().any(|s| s.kind == AttackKind::AddEdges) {
        notes.push(
            "structural attack: random cross-class edge injection at the target, not a gradient-based attack"
                .into(),
        );
    }
    Ok(RobustReport::from_outcomes(outcomes, notes))
}

/// [`run_sweep`] for a single spec.
pub fn run_protocol(
    g: &GraphDataset,
    models: &[ModelSpec],
    spec: &AttackSpec,
    seeds: &[u64],
    settings: &ProtocolSettings,
) -> Result<RobustReport, RobustError> {
    run_sweep(g, models, std::slice::from_ref(spec), seeds, settings)
}
