use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sben_cli::config::RunSection;
use sben_cli::{run, CliError, RunConfig, RunKind, RunOptions, SCHEMA};

#[derive(Parser)]
#[command(name = "sben", version, about = "Integrate and audit dissipative hamiltonian scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline described by a TOML config.
    Run {
        config: PathBuf,
        /// Override run.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides run.output and SBEN_OUTPUT_ROOT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write SVG plots.
        #[arg(long)]
        plots: bool,
        /// Refinement levels for liouville runs.
        #[arg(long)]
        refine: Option<usize>,
        #[arg(long, env = "SBEN_OUTPUT_ROOT", hide_env_values = true)]
        output_root: Option<PathBuf>,
    },
    /// Numerical self-checks of the core algebra, conjugates and samplers.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "SBEN_OUTPUT_ROOT", hide_env_values = true)]
        output_root: Option<PathBuf>,
    },
    /// Print the annotated config schema.
    ExportSchema,
}

fn selftest_config(seed: u64) -> RunConfig {
    RunConfig {
        run: RunSection {
            kind: RunKind::Selftest,
            seed,
            output: Some(PathBuf::from("selftest")),
            plots: false,
            resolution: None,
            refine: 1,
            ensemble: 1,
            sampler: Default::default(),
            flow: Default::default(),
            drift: None,
        },
        scenario: None,
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (config, opts) = match cli.command {
        Command::ExportSchema => {
            print!("{SCHEMA}");
            return Ok(());
        }
        Command::Run {
            config,
            seed,
            out,
            plots,
            refine,
            output_root,
        } => (
            RunConfig::load(&config)?,
            RunOptions {
                seed,
                out,
                plots,
                refine,
                output_root,
                config_path: Some(config),
            },
        ),
        Command::Selftest { seed, out, output_root } => (
            selftest_config(seed),
            RunOptions {
                out,
                output_root,
                ..RunOptions::default()
            },
        ),
    };
    let outcome = run(&config, &opts)?;
    print!("{}", outcome.summary);
    println!("wrote {} artifacts to {}", outcome.artifacts.len(), outcome.out_dir.display());
    if outcome.verdict_failed {
        return Err(CliError::Verdict(format!("see {}", outcome.out_dir.join("summary.txt").display())));
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sben: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
