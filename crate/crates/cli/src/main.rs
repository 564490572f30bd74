use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use keyrate_cli::config::{Mode, RunConfig};
use keyrate_cli::exec::{run_ingest, run_optimize, run_single, run_sweep, write_csv, ResultRow};
use keyrate_cli::CliError;

/// Certified asymptotic key rates for discrete-modulated CV-QKD.
#[derive(Debug, Parser)]
#[command(name = "keyrate", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// CSV output path (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for independent solves (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write the parsed configuration, defaults filled in, to this path.
    #[arg(long, global = true)]
    echo_config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single point.
    Run,
    /// One point per value of the configured sweep grid.
    Sweep,
    /// Golden-section search over the configured variable.
    Optimize,
    /// Solve with expectations estimated from heterodyne sample files (`re,im` per line).
    IngestSamples {
        /// One file per signal in signal order, or one file for the first signal.
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
}

#[derive(Serialize)]
struct OptimumSummary {
    variable: String,
    x_opt: f64,
    key_rate: f64,
    non_unimodal: bool,
    probes: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("keyrate: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = RunConfig::load(&path)?;
    if let Some(echo) = &cli.echo_config {
        std::fs::write(echo, cfg.to_json() + "\n").map_err(|e| CliError::Io(format!("{}: {e}", echo.display())))?;
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    // open the output before solving so an unwritable path fails fast
    let mut out: Box<dyn Write> = match &cli.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?)),
        None => Box::new(io::stdout().lock()),
    };

    let expect = |mode: Mode, name: &str| {
        if cfg.mode() == mode {
            Ok(())
        } else {
            Err(CliError::Config(format!("`{name}` needs a config in {mode:?} mode, found {:?}", cfg.mode())))
        }
    };
    let rows: Vec<ResultRow> = match &cli.command {
        Command::Run => {
            expect(Mode::Single, "run")?;
            run_single(&cfg)
        }
        Command::Sweep => {
            expect(Mode::Sweep, "sweep")?;
            run_sweep(&cfg)
        }
        Command::Optimize => {
            expect(Mode::Optimize, "optimize")?;
            let (rows, best) = run_optimize(&cfg)?;
            let var = cfg.optimize.as_ref().map(|o| o.variable);
            let summary = OptimumSummary {
                variable: serde_json::to_value(var).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                x_opt: best.x,
                key_rate: best.value,
                non_unimodal: best.non_unimodal,
                probes: best.probes.len(),
            };
            let line = serde_json::to_string(&summary).expect("summary serializes");
            if cli.out.is_some() {
                println!("{line}");
            } else {
                eprintln!("{line}");
            }
            rows
        }
        Command::IngestSamples { csv } => {
            expect(Mode::Single, "ingest-samples")?;
            run_ingest(&cfg, csv)?
        }
    };
    write_csv(&rows, &mut out)?;
    out.flush().map_err(|e| CliError::Io(e.to_string()))
}
