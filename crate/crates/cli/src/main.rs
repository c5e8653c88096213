use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dvrptw_cli::config::Overrides;
use dvrptw_cli::{cmd_benchmark, cmd_build_dataset, cmd_gen_instance, cmd_solve_static, cmd_train, ErrorReport};

#[derive(Parser)]
#[command(name = "dvrptw", version, about = "Dynamic VRPTW workbench: instances, datasets, training and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration budget per solve (wins over --budget-s).
    #[arg(long)]
    budget_iters: Option<u64>,
    /// Wall-time budget per solve in seconds.
    #[arg(long)]
    budget_s: Option<f64>,
    /// Output file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            budget_iters: self.budget_iters,
            budget_s: self.budget_s,
            out: self.out.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random static instance.
    GenInstance(Common),
    /// Solve a static instance and print the solution JSON.
    SolveStatic {
        #[command(flatten)]
        common: Common,
        /// Instance file, overriding the config.
        #[arg(long)]
        instance: Option<PathBuf>,
    },
    /// Build an imitation dataset from anticipative solutions.
    BuildDataset(Common),
    /// Train a prize model.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset file, overriding the config.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run policies against the anticipative baseline.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Worker threads.
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn run(cmd: &Command) -> anyhow::Result<()> {
    match cmd {
        Command::GenInstance(c) => {
            let out = cmd_gen_instance(c.config.as_deref(), &c.overrides())?;
            eprintln!("wrote {}", out.display());
        }
        Command::SolveStatic { common, instance } => {
            let text = cmd_solve_static(common.config.as_deref(), instance.as_deref(), &common.overrides())?;
            println!("{text}");
        }
        Command::BuildDataset(c) => {
            let (out, n) = cmd_build_dataset(c.config.as_deref(), &c.overrides())?;
            eprintln!("wrote {n} samples to {}", out.display());
        }
        Command::Train { common, dataset } => {
            let (dir, log) = cmd_train(common.config.as_deref(), dataset.as_deref(), &common.overrides())?;
            eprintln!(
                "training loss {:.6} -> {:.6}; model in {}",
                log.initial_train_loss,
                log.final_train_loss,
                dir.display()
            );
        }
        Command::Benchmark { common, workers } => {
            let (dir, out) = cmd_benchmark(common.config.as_deref(), &common.overrides(), *workers)?;
            for p in &out.summary.policies {
                eprintln!(
                    "{:<16} mean cost {:>12} mean gap {:>10} failures {}",
                    p.policy,
                    p.mean_cost.map(|c| format!("{c:.1}")).unwrap_or_else(|| "-".into()),
                    p.mean_gap.map(|g| format!("{:.2}%", 100.0 * g)).unwrap_or_else(|| "-".into()),
                    p.failures
                );
            }
            eprintln!("reports in {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = match &cli.command {
        Command::GenInstance(_) => "gen-instance",
        Command::SolveStatic { .. } => "solve-static",
        Command::BuildDataset(_) => "build-dataset",
        Command::Train { .. } => "train",
        Command::Benchmark { .. } => "benchmark",
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = ErrorReport::new(name, &e);
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_else(|_| e.to_string()));
            ExitCode::FAILURE
        }
    }
}
