//! Command-line harness: scenario dispatch, CSV/report emission.
//!
//! Exit codes: 0 on success, 1 on config/validation errors, 2 on
//! runtime/model errors.

use bikesim::cli::{
    emit_comparison_report, emit_stop_and_go, emit_sweep_report, emit_timing_report,
    emit_trajectory_csv, parse_config, write_manifest, ConfigError, Overrides, RunConfig,
};
use bikesim::scenarios::{
    run_condition_figure, run_speed_sweep, run_step_steer, run_stop_and_go, run_timing_benchmark,
};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "bikesim",
    about = "Discrete bicycle-model simulation and NMPC experiment harness",
    version
)]
struct Cli {
    /// TOML config; omitted fields fall back to built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSVs, reports and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Discretization step override (s).
    #[arg(long, global = true)]
    ts: Option<f64>,
    /// Seed recorded in the manifest for randomized drivers; the built-in
    /// scenarios are deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Open-loop step-steer stability comparison across step lengths.
    StepSteer,
    /// Spectral-norm sweep of the lateral Jacobian block over speed.
    ConditionSweep,
    /// Closed-loop stop-and-go task with the moving obstacle.
    StopAndGo,
    /// Per-solve timing of both predictors over the closed loop.
    Timing,
    /// Speed sweep of open-loop location RMS error, dynamic vs kinematic.
    Table2Sweep,
}

fn run(cli: &Cli, cfg: &RunConfig) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::StepSteer => {
            let report = run_step_steer(&cfg.step_steer)?;
            for run in &report.ts_rows {
                let name = format!(
                    "step_steer_ts{}_{}.csv",
                    run.t_s,
                    match run.method {
                        bikesim::scenarios::MethodKind::BackwardVariantDyn => "backward_dyn",
                        bikesim::scenarios::MethodKind::ForwardEulerDyn => "forward_dyn",
                        bikesim::scenarios::MethodKind::ForwardEulerKin => "forward_kin",
                    }
                );
                emit_trajectory_csv(&run.trajectory, &cli.out.join(name))?;
            }
            let files = emit_comparison_report(&report, &cli.out)?;
            print!("{}", std::fs::read_to_string(files.text)?);
        }
        Command::ConditionSweep => {
            let report = run_condition_figure(&cfg.vehicle, cfg.t_s, cfg.condition_u_max);
            let files = emit_sweep_report(&report, &cli.out)?;
            print!("{}", std::fs::read_to_string(files.text)?);
        }
        Command::StopAndGo => {
            let run = run_stop_and_go(&cfg.stop_and_go)?;
            let files = emit_stop_and_go(&run, &cli.out)?;
            print!("{}", std::fs::read_to_string(files.text)?);
        }
        Command::Timing => {
            let report = run_timing_benchmark(&cfg.stop_and_go)?;
            let files = emit_timing_report(&report, &cli.out)?;
            print!("{}", std::fs::read_to_string(files.text)?);
        }
        Command::Table2Sweep => {
            let report = run_speed_sweep(&cfg.step_steer, &cfg.table2_speeds)?;
            let files = emit_comparison_report(&report, &cli.out)?;
            print!("{}", std::fs::read_to_string(files.text)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides { t_s: cli.ts, seed: cli.seed };
    let cfg = match parse_config(cli.config.as_deref(), overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = write_manifest(&cfg, &cli.out) {
        eprintln!("error: {e}");
        return ExitCode::from(match e {
            ConfigError::Io(_) => 2,
            _ => 1,
        });
    }
    match run(&cli, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
