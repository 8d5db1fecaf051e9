mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;
use config::RunConfig;

/// Graph information bottleneck training and robustness experiments.
#[derive(Debug, Parser)]
#[command(name = "gib", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds, overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Override a config field, e.g. `--set model.beta1=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads, overriding the config.
    #[arg(long)]
    workers: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(&self.config, &self.set)?;
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(seeds) = &self.seeds {
            cfg.seeds = seeds.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model per seed.
    Train(RunArgs),
    /// Score a saved checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory; defaults to the one used for training.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run the configured attack sweep.
    Attack(RunArgs),
    /// Run the built-in numerical self-checks.
    Verify,
    /// Write a synthetic Cora-like dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2708)]
        nodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the fully resolved configuration.
    Config(RunArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.load()?;
            let s = commands::train(&cfg)?;
            for r in &s.runs {
                println!(
                    "seed {}: best epoch {} train {:.4} val {:.4} test {:.4}",
                    r.seed, r.best_epoch, r.train_acc, r.val_acc, r.test_acc
                );
            }
            println!(
                "{} test accuracy {:.2} ± {:.2} % over {} seeds",
                commands::variant_name(s.variant),
                100.0 * s.test_mean,
                100.0 * s.test_std,
                s.runs.len()
            );
        }
        Command::Eval {
            checkpoint,
            dataset,
        } => {
            let r = commands::eval(&checkpoint, dataset.as_deref())?;
            println!("{}", serde_json::to_string(&r).expect("result serializes"));
        }
        Command::Attack(args) => {
            let cfg = args.load()?;
            let report = commands::attack(&cfg)?;
            let mut csv = Vec::new();
            report
                .write_csv(&mut csv)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            print!("{}", String::from_utf8_lossy(&csv));
            for n in &report.notes {
                eprintln!("note: {n}");
            }
        }
        Command::Verify => {
            let report = gib_core::verify::run_verify();
            print!("{report}");
            if !report.all_passed() {
                return Err(CliError::Runtime("verification failed".into()));
            }
        }
        Command::Synth { out, nodes, seed } => {
            let g = commands::synth(&out, nodes, seed)?;
            println!(
                "wrote {} nodes, {} edges, {} features, {} classes to {}",
                g.num_nodes(),
                g.num_edges(),
                g.num_features(),
                g.num_classes(),
                out.display()
            );
        }
        Command::Config(args) => {
            let cfg = RunConfig::load(&args.config, &args.set)?;
            println!("{}", cfg.to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
