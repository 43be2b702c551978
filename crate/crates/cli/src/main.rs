use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cslab_cli::commands;
use cslab_cli::{run_suite, CliError, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "cslab", version, about = "Numerical checks for genus-one complex Chern-Simons quantisation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (report, section or CSV, depending on the command)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Truncation degree N
    #[arg(long, global = true)]
    degree: Option<usize>,
    /// Comma-separated points "a+bi"
    #[arg(long, global = true, allow_hyphen_values = true)]
    tau: Option<String>,
    /// Level "k+si"
    #[arg(long, global = true, allow_hyphen_values = true)]
    level: Option<String>,
    /// Steps per unit path length
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Loop radius
    #[arg(long, global = true)]
    radius: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification suite and write the report
    Verify {
        /// frames, operators, bargmann, connections, transport, equivariance or all
        #[arg(long)]
        suite: Option<String>,
    },
    /// Parallel-transport a section file along a path
    Transport {
        #[arg(long)]
        input: PathBuf,
        /// Waypoints "a+bi,c+di,…"; defaults to the configured path
        #[arg(long, allow_hyphen_values = true)]
        path: Option<String>,
        /// hitchin_witten, complex_hitchin or l2
        #[arg(long)]
        connection: Option<String>,
        /// CSV trace of the coefficients, one row per unit of path length
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Bargmann transform of a Hermite section file (inverse for Fock files)
    Bargmann {
        #[arg(long)]
        input: PathBuf,
    },
    /// Holonomy of a square loop
    Holonomy {
        #[arg(long, default_value = "0+1i", allow_hyphen_values = true)]
        loop_center: String,
        #[arg(long, default_value = "complex_hitchin")]
        connection: String,
        #[arg(long, default_value_t = 4)]
        block_degree: usize,
    },
    /// Lattice-summed transform of an averaged Gaussian, as CSV
    Equivariant {
        /// Points "z1,z2" separated by ';'
        #[arg(long, allow_hyphen_values = true)]
        points: Option<String>,
        #[arg(long, default_value_t = 1.5)]
        width: f64,
        #[arg(long, num_args = 2, default_values_t = [0.3, -0.2], allow_hyphen_values = true)]
        centre: Vec<f64>,
    },
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("CSLAB_THREADS") {
        let n: usize = v.parse().map_err(|_| CliError::Config(format!("CSLAB_THREADS=`{v}` is not a count")))?;
        if n == 0 {
            return Err(CliError::Config("CSLAB_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn load(common: &Common, suite: Option<String>) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Overrides {
        suite,
        out: common.out.clone(),
        seed: common.seed,
        degree: common.degree,
        tau: common.tau.clone(),
        level: common.level.clone(),
        steps: common.steps,
        radius: common.radius,
    }
    .apply(&mut cfg)?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Verify { suite } => {
            let cfg = load(&cli.common, suite)?;
            let report = run_suite(&cfg, cfg.suite)?;
            commands::emit(cfg.outputs.report.as_deref(), &report.to_json())?;
            eprintln!("{}: {} of {} checks passed", report.suite, report.summary.passed, report.summary.total);
            for c in report.checks.iter().filter(|c| !c.pass) {
                eprintln!("  FAIL {} residual={:?} tolerance={:e}{}", c.id, c.residual, c.tolerance, c.error.as_deref().map(|e| format!(" ({e})")).unwrap_or_default());
            }
            if report.all_pass() {
                Ok(())
            } else {
                Err(CliError::CheckFailed { failed: report.summary.failed, total: report.summary.total })
            }
        }
        Command::Transport { input, path, connection, csv } => {
            let cfg = load(&cli.common, None)?;
            let path = path.unwrap_or_else(|| cfg.transport.path.clone());
            let out = commands::run_transport(&cfg, &input, &path, connection.as_deref(), csv.as_deref())?;
            commands::emit(cfg.outputs.report.as_deref(), &commands::transport_json(&out))
        }
        Command::Bargmann { input } => {
            let cfg = load(&cli.common, None)?;
            let s = commands::run_bargmann(&input)?;
            let mut text = s.to_json();
            text.push('\n');
            commands::emit(cfg.outputs.report.as_deref(), &text)
        }
        Command::Holonomy { loop_center, connection, block_degree } => {
            let mut cfg = load(&cli.common, None)?;
            // here `--degree` sizes the transported truncation
            if let Some(n) = cli.common.degree {
                cfg.transport.degree = n;
            }
            let out = commands::run_holonomy(&cfg, &loop_center, &connection, block_degree)?;
            commands::emit(cfg.outputs.report.as_deref(), &commands::holonomy_json(&out))?;
            if out.pass {
                Ok(())
            } else {
                Err(CliError::CheckFailed { failed: 1, total: 1 })
            }
        }
        Command::Equivariant { points, width, centre } => {
            let cfg = load(&cli.common, None)?;
            let csv = commands::run_equivariant(&cfg, points.as_deref(), width, [centre[0], centre[1]])?;
            commands::emit(cfg.outputs.report.as_deref(), &csv)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cslab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
