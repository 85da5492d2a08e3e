use clap::{Args, Parser, Subcommand};
use conicflow::{run, Kind, RunOptions};
use std::path::PathBuf;
use std::process::ExitCode;

/// Steady self-similar compressible flow experiments.
#[derive(Parser)]
#[command(name = "conicflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the self-similar ODE from given data
    Problem1(Common),
    /// Compare an integration with the closed-form Beltrami flow
    Beltrami(Common),
    /// Solve one conic shock problem
    Shock(Common),
    /// Sweep the shock angle and trace the cone speed curve
    AppleSweep(Common),
    /// Build the transonic background and its coefficient tables
    Background(Common),
    /// Solve the linear mixed-type boundary problem in 3D
    Tricomi(Common),
    /// Solve one azimuthal mode of the mixed-type problem
    TricomiMode(Common),
    /// Solve the rotational perturbation problem by fixed-point iteration
    Rotational(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: out/<command>]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Multiplies every grid size and sample count
    #[arg(long, default_value_t = 1.0)]
    grid_scale: f64,
    /// Multiplies every solver tolerance
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, c) = match cli.command {
        Command::Problem1(c) => (Kind::Problem1, c),
        Command::Beltrami(c) => (Kind::Beltrami, c),
        Command::Shock(c) => (Kind::Shock, c),
        Command::AppleSweep(c) => (Kind::AppleSweep, c),
        Command::Background(c) => (Kind::Background, c),
        Command::Tricomi(c) => (Kind::Tricomi, c),
        Command::TricomiMode(c) => (Kind::TricomiMode, c),
        Command::Rotational(c) => (Kind::Rotational, c),
    };
    let opts = RunOptions { config: c.config, out: c.out, grid_scale: c.grid_scale, tol_scale: c.tol_scale };
    match run(kind, &opts) {
        Ok(o) => {
            match &o.manifest.error {
                Some(e) => eprintln!("{}: {e}", kind.name()),
                None => eprintln!("{}: ok, wrote {}", kind.name(), o.out_dir.display()),
            }
            ExitCode::from(o.exit_code as u8)
        }
        Err(e) => {
            eprintln!("{}: cannot write output: {e}", kind.name());
            ExitCode::from(1)
        }
    }
}
