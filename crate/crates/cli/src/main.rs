use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use varflow_cli::format::float;
use varflow_cli::{CliError, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "varflow",
    version,
    about = "Minimum-action particle flow experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transport the ensemble with every flow and write the action table,
    /// energy curves, trajectories and a JSON report.
    Run(Common),
    /// Compare rotational actions with S* + c·α².
    SweepAlpha {
        #[command(flatten)]
        common: Common,
        /// Comma-separated α values; defaults to the config's `alphas`.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        alphas: Option<Vec<f64>>,
    },
    /// Empirical order of the Euler, Verlet and RK4 integrators.
    Convergence(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; the built-in correlated 2-D example if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, env = "VARFLOW_OUTPUT_DIR")]
    output: Option<PathBuf>,
    /// Sampling seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn experiment(&self) -> Result<Experiment, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(dir) = &self.output {
            cfg.output_dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg.validate()?)
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(common) => {
            let report = varflow_cli::run(&common.experiment()?)?;
            if !common.quiet {
                for f in &report.per_flow {
                    println!(
                        "{:<28} action {:>14}  max residual {:.2e}",
                        f.label,
                        float(f.action.total_action),
                        f.max_master_residual
                    );
                }
                println!(
                    "wrote {} files to {} in {} ms",
                    report.artifact_paths.len(),
                    report.config_echo.output_dir.display(),
                    report.runtime_ms
                );
            }
        }
        Command::SweepAlpha { common, alphas } => {
            let exp = common.experiment()?;
            let alphas = alphas.unwrap_or_else(|| exp.config.alphas.clone());
            let s = varflow_cli::sweep_alpha(&exp, &alphas)?;
            if !common.quiet {
                println!(
                    "max |total_action - predicted| = {:.3e} (relative {:.3e}); S* = {}, c = {}; wrote {}",
                    s.max_deviation,
                    s.max_relative_deviation,
                    float(s.minimum_action),
                    float(s.coefficient),
                    s.csv_path.display()
                );
            }
        }
        Command::Convergence(common) => {
            let s = varflow_cli::convergence(&common.experiment()?)?;
            if !common.quiet {
                let fitted: Vec<String> = s
                    .slopes
                    .iter()
                    .map(|(m, slope)| format!("{} {slope:.3}", m.name()))
                    .collect();
                println!(
                    "log-log slopes: {}; wrote {}",
                    fitted.join(", "),
                    s.csv_path.display()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
