use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use raymap_cli::{
    load_config, run_estimate, run_evaluate, run_fit_ground, run_predict, run_profile, run_simulate, CliError,
    EvaluateInputs, Overrides, BOUNDARY_FILE,
};

/// Ray makeup and received power prediction from boundary power
/// measurements.
#[derive(Parser)]
#[command(name = "raymap", version)]
struct Cli {
    /// Scenario and run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    snr_db: Option<f64>,
    #[arg(long, global = true)]
    beta_th: Option<f64>,
    #[arg(long, global = true)]
    window_m: Option<f64>,
    #[arg(long, global = true)]
    scan_step_deg: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct BoundaryArgs {
    /// Boundary measurements; defaults to boundary.csv in the output
    /// directory.
    #[arg(long)]
    boundary: Option<PathBuf>,
    /// Fit the ground model to a moving average of the boundary power.
    #[arg(long)]
    smooth: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate boundary measurements and the true power on the grid.
    Simulate,
    /// Fit ground permittivity and gain to the boundary measurements.
    FitGround(BoundaryArgs),
    /// Per-window spectra and peak tables along the boundary.
    Estimate {
        #[command(flatten)]
        boundary: BoundaryArgs,
        #[arg(long)]
        svg: bool,
    },
    /// Predict ray makeup and power on the interior grid.
    Predict {
        #[command(flatten)]
        boundary: BoundaryArgs,
        #[arg(long)]
        svg: bool,
    },
    /// Compare a prediction with the simulated truth.
    Evaluate {
        /// Defaults to prediction_grid.csv in the output directory.
        #[arg(long)]
        predicted: Option<PathBuf>,
        /// Defaults to oracle_grid.csv in the output directory.
        #[arg(long)]
        oracle: Option<PathBuf>,
    },
    /// Power per arrival angle along the configured route.
    Profile {
        #[command(flatten)]
        boundary: BoundaryArgs,
        /// Use |psi| instead of the arrival angle as the profile axis.
        #[arg(long)]
        by_psi: bool,
        #[arg(long)]
        svg: bool,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    let overrides = Overrides {
        seed: cli.seed,
        snr_db: cli.snr_db,
        beta_th: cli.beta_th,
        window_m: cli.window_m,
        scan_step_deg: cli.scan_step_deg,
    };
    let out = cli.out;
    let config = || -> Result<_, CliError> {
        let path = cli.config.as_deref().ok_or_else(|| {
            CliError::Config(raymap_core::config::ConfigError::Invalid("--config is required".into()))
        })?;
        load_config(path, &overrides)
    };
    let boundary_path = |b: &BoundaryArgs| b.boundary.clone().unwrap_or_else(|| out.join(BOUNDARY_FILE));
    match cli.command {
        Command::Simulate => run_simulate(&config()?, &out),
        Command::FitGround(b) => run_fit_ground(&config()?, &boundary_path(&b), b.smooth, &out),
        Command::Estimate { boundary, svg } => {
            run_estimate(&config()?, &boundary_path(&boundary), boundary.smooth, svg, &out)
        }
        Command::Predict { boundary, svg } => {
            let start = std::time::Instant::now();
            let report = run_predict(&config()?, &boundary_path(&boundary), boundary.smooth, svg, &out)?;
            Ok(format!("{report}elapsed: {:.2} s\n", start.elapsed().as_secs_f64()))
        }
        Command::Evaluate { predicted, oracle } => {
            let mut inputs = EvaluateInputs::in_dir(&out);
            if let Some(p) = predicted {
                inputs.predicted = p;
            }
            if let Some(o) = oracle {
                inputs.oracle = o;
            }
            run_evaluate(&inputs, &out)
        }
        Command::Profile { boundary, by_psi, svg } => {
            run_profile(&config()?, &boundary_path(&boundary), by_psi, boundary.smooth, svg, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
