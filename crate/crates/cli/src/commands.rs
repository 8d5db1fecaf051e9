use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use gib_core::gibnn::{load_checkpoint, save_checkpoint, ModelInput, Variant};
use gib_core::graphio::synth::CsbmSpec;
use gib_core::graphio::{GraphDataset, Split};
use gib_core::robustbench::{run_sweep, ModelSpec, ProtocolSettings, RobustReport};
use gib_core::train::{evaluate, fit, Schedule};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn rt(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub best_epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub checkpoint: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub variant: Variant,
    pub dataset: PathBuf,
    pub epochs: usize,
    pub runs: Vec<SeedResult>,
    pub test_mean: f64,
    pub test_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn load_dataset(path: &Path) -> Result<GraphDataset, CliError> {
    GraphDataset::load(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn train_seed(
    cfg: &RunConfig,
    g: &GraphDataset,
    input: &ModelInput,
    seed: u64,
) -> Result<SeedResult, CliError> {
    let dir = cfg.out.join(format!("seed-{seed}"));
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    let log_path = dir.join("train.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(io(&log_path))?);
    let schedule = Schedule::new(cfg.epochs, cfg.model.beta1, cfg.model.beta2).map_err(rt)?;
    let state = fit(
        g,
        input,
        &cfg.model,
        &schedule,
        &cfg.optim,
        seed,
        Some(&mut log),
    )
    .map_err(rt)?;
    log.flush().map_err(io(&log_path))?;
    let acc = |s| evaluate(&state.best_params, input, &cfg.model, g.labels(), g.mask(s));
    let result = SeedResult {
        seed,
        best_epoch: state.best_epoch,
        train_acc: acc(Split::Train).map_err(rt)?,
        val_acc: acc(Split::Val).unwrap_or(0.0),
        test_acc: acc(Split::Test).map_err(rt)?,
        checkpoint: dir.join("model.json"),
    };
    let meta = serde_json::json!({
        "best_epoch": result.best_epoch,
        "best_val": state.best_val,
        "train_acc": result.train_acc,
        "val_acc": result.val_acc,
        "test_acc": result.test_acc,
        "dataset": cfg.dataset,
    });
    save_checkpoint(
        &result.checkpoint,
        &state.best_params,
        &cfg.model,
        seed,
        meta,
    )
    .map_err(rt)?;
    Ok(result)
}

/// Trains one model per seed and writes logs, checkpoints and a summary
/// under `cfg.out`.
pub fn train(cfg: &RunConfig) -> Result<TrainSummary, CliError> {
    cfg.validate()?;
    let g = load_dataset(&cfg.dataset)?;
    let input = ModelInput::new(&g, &cfg.model).map_err(rt)?;
    fs::create_dir_all(&cfg.out).map_err(io(&cfg.out))?;
    let config_path = cfg.out.join("config.json");
    fs::write(&config_path, cfg.to_json() + "\n").map_err(io(&config_path))?;

    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..cfg.workers.min(cfg.seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = cfg.seeds.get(i) else { break };
                let r = train_seed(cfg, &g, &input, seed);
                results.lock().expect("no worker panicked").push((i, r));
            });
        }
    });
    let mut results = results.into_inner().expect("no worker panicked");
    results.sort_by_key(|(i, _)| *i);
    let runs = results
        .into_iter()
        .map(|(_, r)| r)
        .collect::<Result<Vec<_>, _>>()?;
    let tests: Vec<f64> = runs.iter().map(|r| r.test_acc).collect();
    let (test_mean, test_std) = mean_std(&tests);
    let summary = TrainSummary {
        variant: cfg.model.variant,
        dataset: cfg.dataset.clone(),
        epochs: cfg.epochs,
        runs,
        test_mean,
        test_std,
    };
    let path = cfg.out.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, json + "\n").map_err(io(&path))?;
    Ok(summary)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub test_acc: f64,
}

/// Scores a saved checkpoint. The dataset defaults to the one recorded at
/// training time.
pub fn eval(checkpoint: &Path, dataset: Option<&Path>) -> Result<EvalResult, CliError> {
    if !checkpoint.is_file() {
        return Err(ConfigError::Invalid {
            field: "checkpoint".into(),
            message: format!("{} is not a file", checkpoint.display()),
        }
        .into());
    }
    let ck = load_checkpoint(checkpoint).map_err(rt)?;
    let dataset = match dataset {
        Some(d) => d.to_path_buf(),
        None => ck
            .manifest
            .meta
            .get("dataset")
            .and_then(|d| d.as_str())
            .map(PathBuf::from)
            .ok_or_else(|| ConfigError::Invalid {
                field: "dataset".into(),
                message: "checkpoint does not record a dataset; pass --dataset".into(),
            })?,
    };
    if !dataset.is_dir() {
        return Err(ConfigError::Invalid {
            field: "dataset".into(),
            message: format!("{} is not a directory", dataset.display()),
        }
        .into());
    }
    let g = load_dataset(&dataset)?;
    let m = &ck.manifest;
    if m.in_features != g.num_features() || m.num_classes != g.num_classes() {
        return Err(CliError::Runtime(format!(
            "checkpoint expects {} features and {} classes, dataset has {} and {}",
            m.in_features,
            m.num_classes,
            g.num_features(),
            g.num_classes()
        )));
    }
    let cfg = &m.config;
    let input = ModelInput::new(&g, cfg).map_err(rt)?;
    let acc = |s| evaluate(&ck.params, &input, cfg, g.labels(), g.mask(s));
    Ok(EvalResult {
        train_acc: acc(Split::Train).map_err(rt)?,
        val_acc: acc(Split::Val).ok(),
        test_acc: acc(Split::Test).map_err(rt)?,
    })
}

/// Runs the configured attack sweep and writes `attack.csv` and
/// `attack.json` under `cfg.out`.
pub fn attack(cfg: &RunConfig) -> Result<RobustReport, CliError> {
    cfg.validate()?;
    if cfg.attack.specs.is_empty() {
        return Err(ConfigError::Invalid {
            field: "attack.specs".into(),
            message: "no attacks configured".into(),
        }
        .into());
    }
    let g = load_dataset(&cfg.dataset)?;
    let models = if cfg.attack.models.is_empty() {
        vec![ModelSpec {
            name: variant_name(cfg.model.variant).into(),
            config: cfg.model.clone(),
        }]
    } else {
        cfg.attack.models.clone()
    };
    let settings = ProtocolSettings {
        epochs: cfg.epochs,
        optim: cfg.optim,
        targets: cfg.attack.targets,
        workers: cfg.workers,
    };
    let report = run_sweep(&g, &models, &cfg.attack.specs, &cfg.seeds, &settings).map_err(rt)?;
    report.save(&cfg.out, "attack").map_err(rt)?;
    Ok(report)
}

pub fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Cat => "gib-cat",
        Variant::Bern => "gib-bern",
        Variant::GatBaseline => "gat",
        Variant::AibOnly => "aib-only",
        Variant::XibOnly => "xib-only",
    }
}

/// Writes a labeled synthetic graph shaped like the Cora citation graph.
pub fn synth(out: &Path, nodes: usize, seed: u64) -> Result<GraphDataset, CliError> {
    if nodes < 70 {
        return Err(ConfigError::Invalid {
            field: "nodes".into(),
            message: format!("need at least 70 nodes, got {nodes}"),
        }
        .into());
    }
    let g = CsbmSpec::cora_like(nodes, seed).generate().map_err(rt)?;
    g.save(out).map_err(rt)?;
    Ok(g)
}
