use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;
use tempered_ot::Variant;
use tempered_ot_cli::{thread_pool, Command, ConfigOverrides, ExperimentConfig};

/// Parameter sweeps for tempered optimal transport.
///
/// Exit codes: 0 success, 1 some trial did not converge (data still written),
/// 2 some trial had an infeasible support, 3 bad configuration.
#[derive(Parser)]
#[command(name = "tempered-ot", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Relative expected and measured costs over (t, λ).
    DistanceSweep(Flags),
    /// Sinkhorn iterations to convergence over (t, λ).
    ConvergenceSweep(Flags),
    /// Support bitmaps of regularized plans, as JSON plus a text grid.
    SparsityMap(Flags),
    /// Contraction ratios of positive seeds.
    ContractionSweep(Flags),
    /// Sinkhorn reduction versus the exact dual solution.
    Quality(Flags),
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed; trial k draws from stream k.
    #[arg(long)]
    seed: Option<u64>,
    /// Temperature grid, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    t: Option<Vec<f64>>,
    /// Regularization grid, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    lambda: Option<Vec<f64>>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file with any ExperimentConfig fields; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Flags {
    fn overrides(self) -> Result<ConfigOverrides, tempered_ot_cli::CliError> {
        let base = match &self.config {
            Some(p) => ConfigOverrides::from_json_file(p)?,
            None => ConfigOverrides::default(),
        };
        Ok(base.merge(ConfigOverrides {
            command: None,
            n: self.n,
            trials: self.trials,
            master_seed: self.seed,
            t_grid: self.t,
            lambda_grid: self.lambda,
            variant: self.variant,
            output_path: self.out,
            tol: self.tol,
            max_iter: self.max_iter,
        }))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let (command, flags) = match cli.command {
        Cmd::DistanceSweep(f) => (Command::DistanceSweep, f),
        Cmd::ConvergenceSweep(f) => (Command::ConvergenceSweep, f),
        Cmd::SparsityMap(f) => (Command::SparsityMap, f),
        Cmd::ContractionSweep(f) => (Command::ContractionSweep, f),
        Cmd::Quality(f) => (Command::Quality, f),
    };
    let result = flags
        .overrides()
        .and_then(|o| ExperimentConfig::resolve(command, o))
        .and_then(|cfg| {
            let pool = thread_pool()?;
            tempered_ot_cli::run(&cfg, &pool)
        });
    match result {
        Ok(status) => {
            if status.exit_code() != 0 {
                error!(
                    "{} of {} cells did not converge, {} infeasible",
                    status.nonconverged, status.cells, status.infeasible
                );
            }
            ExitCode::from(status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
