use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use kasamawashi::atlas::ManifoldSide;
use kasamawashi::verify::VerifyConfig;
use kasamawashi_cli::commands::{self, ManifoldArgs, SimulateArgs, SweepArgs, UsageError, VerifyArgs, EXIT_USAGE};

/// Ball rolling on a rotating, possibly tilted surface of revolution.
#[derive(Parser)]
#[command(name = "kasamawashi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    Stable,
    Unstable,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and write the trajectory as CSV.
    Simulate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        t_end: Option<f64>,
        /// Output sampling interval.
        #[arg(long)]
        dt: Option<f64>,
        /// Also integrate the attitude matrix.
        #[arg(long)]
        attitude: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// List the equilibria of a scenario as JSON.
    Equilibria {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Linearize at an equilibrium on the x1 axis and classify the spectrum.
    Linearize {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        x1: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        omega_z: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Classify a grid in the (omega_z, Omega) plane.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        /// Cells per axis, overriding the scenario.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Summary with marked points and asymptotes.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Follow a stable or unstable manifold of the vertex.
    Manifold {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "stable")]
        side: Side,
        #[arg(long, allow_hyphen_values = true)]
        omega_z: Option<f64>,
        #[arg(long)]
        seed_offset: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        /// Trajectory CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the built-in consistency checks.
    Verify {
        #[arg(long, default_value_t = VerifyConfig::default().samples)]
        samples: usize,
        #[arg(long, default_value_t = VerifyConfig::default().seed)]
        seed: u64,
        /// Also load and round-trip every scenario in this directory.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("KASAMAWASHI_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("KASAMAWASHI_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Simulate { config, t_end, dt, attitude, output } => {
            commands::simulate(&SimulateArgs { config, t_end, dt, attitude, output })
        }
        Command::Equilibria { config, output } => commands::equilibria(&config, output.as_deref()),
        Command::Linearize { config, x1, omega_z, output } => {
            commands::linearize(&config, x1, omega_z, output.as_deref())
        }
        Command::Sweep { config, n, csv, svg, json } => commands::sweep(&SweepArgs { config, n, csv, svg, json }),
        Command::Manifold { config, side, omega_z, seed_offset, t_end, csv } => {
            let side = match side {
                Side::Stable => ManifoldSide::Stable,
                Side::Unstable => ManifoldSide::Unstable,
            };
            commands::manifold(&ManifoldArgs { config, side, omega_z, seed_offset, t_end, csv })
        }
        Command::Verify { samples, seed, scenarios, json } => {
            commands::verify(&VerifyArgs { samples, seed, scenarios, json })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE as u8);
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.chain().any(|c| c.downcast_ref::<UsageError>().is_some());
            ExitCode::from(if usage { EXIT_USAGE as u8 } else { 1 })
        }
    }
}
