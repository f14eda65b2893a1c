//! Command-line driver: parses arguments, loads the TOML config, dispatches
//! to the experiment layer, and maps errors onto exit codes (0 success,
//! 1 validation error, 2 runtime error).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dynafed_core::config::ExperimentConfig;
use dynafed_core::error::Error;
use dynafed_core::experiment::{
    execute_fidelity, execute_synth, execute_theory, execute_train, partition_stats_json,
    selftest_meta_gradient, TrainAlgo,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser)]
#[command(
    name = "dynafed",
    about = "Federated learning simulator with trajectory-matched synthetic data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Path to the experiment TOML.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::from_path(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Emit partition statistics as JSON on stdout.
    Partition {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run a full federated experiment and write metrics plus checkpoints.
    Train {
        #[arg(long)]
        algo: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Learn a synthetic dataset from a saved trajectory.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Compare datasets on how well they reproduce trajectory segments.
    Fidelity {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        dsyn: PathBuf,
    },
    /// Convergence-rate run on the quadratic task plus constant estimates.
    Theory {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Verify the meta-gradients against finite differences.
    Selftest,
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Partition { cfg } => {
            let cfg = cfg.load()?;
            println!("{}", partition_stats_json(&cfg)?);
        }
        Command::Train { algo, cfg } => {
            let algo = TrainAlgo::parse(&algo)?;
            let cfg = cfg.load()?;
            let (_, summary) = execute_train(&cfg, algo)?;
            println!(
                "{} seed {} final accuracy {:.4} -> {}",
                summary.algo,
                summary.seed,
                summary.final_acc.unwrap_or(f64::NAN),
                cfg.output_dir.display()
            );
        }
        Command::Synth { cfg, trajectory } => {
            let cfg = cfg.load()?;
            let dsyn = execute_synth(&cfg, &trajectory)?;
            println!(
                "synthesized {} samples -> {}",
                dsyn.len(),
                cfg.output_dir.join("dsyn.dyna").display()
            );
        }
        Command::Fidelity { cfg, trajectory, dsyn } => {
            let cfg = cfg.load()?;
            let report = execute_fidelity(&cfg, &trajectory, &dsyn)?;
            for (i, (name, _)) in report.distances.iter().enumerate() {
                println!("{name}: mean distance {}", report.mean(i));
            }
        }
        Command::Theory { cfg } => {
            let cfg = cfg.load()?;
            let outcome = execute_theory(&cfg)?;
            println!(
                "tail slope {:.4} delta {:.6} epsilon {:.6}",
                outcome.slope,
                outcome.summary.delta.unwrap_or(f64::NAN),
                outcome.summary.epsilon.unwrap_or(f64::NAN)
            );
        }
        Command::Selftest => {
            let worst = selftest_meta_gradient()?;
            println!("max relative meta-gradient error: {worst:.3e}");
            if worst >= 1e-4 {
                return Err(Error::Divergence {
                    context: format!("meta-gradient selftest error {worst:.3e} over tolerance"),
                });
            }
        }
    }
    Ok(())
}

/// Run the CLI against an argument vector; returns the process exit code.
pub fn run_cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes; bad usage is validation.
            let _ = e.print();
            return if e.exit_code() == 0 { EXIT_OK } else { EXIT_VALIDATION };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
