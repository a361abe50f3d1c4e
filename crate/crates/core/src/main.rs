use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use kkbrane::config::{parse_config, ScenarioConfig};
use kkbrane::report::{self, RunReport};
use kkbrane::Result;

#[derive(Parser)]
#[command(
    name = "kkbrane",
    version,
    about = "Chiral string evolution and worldvolume geometry checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a scenario and write charges.csv, diagnostics.csv and the report.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Static geometry, algebra and stress checks on the initial data.
    Verify {
        config: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Convergence orders of the static residuals over several grids.
    Sweep {
        config: PathBuf,
        /// Comma-separated grid sizes.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        grids: Vec<usize>,
        #[command(flatten)]
        opts: Opts,
    },
    /// Print the report of a finished run directory.
    Report { rundir: PathBuf },
}

#[derive(Args)]
struct Opts {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Steps between output rows.
    #[arg(long)]
    cadence: Option<u64>,
    /// Multiplies every tolerance.
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
    /// Seed of the random scenario and random deformations.
    #[arg(long)]
    seed: Option<u64>,
}

impl Opts {
    fn load(&self, path: &Path) -> Result<ScenarioConfig> {
        if !(self.tol_scale.is_finite() && self.tol_scale > 0.0) {
            return Err(kkbrane::Error::Config(format!(
                "--tol-scale must be positive, got {}",
                self.tol_scale
            )));
        }
        let mut cfg = parse_config(path)?;
        if let Some(c) = self.cadence {
            cfg.cadence = c;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.resolved()
    }
}

fn finish(report: &RunReport, out: Option<&Path>) -> Result<bool> {
    if let Some(dir) = out {
        report::write_report(dir, report)?;
    }
    print!("{}", report.to_text());
    Ok(report.passed)
}

fn execute(cli: Cli) -> Result<bool> {
    let start = Instant::now();
    let passed = match cli.command {
        Command::Run { config, opts } => {
            let cfg = opts.load(&config)?;
            let (rep, rows) = report::run_scenario(&cfg, opts.tol_scale)?;
            let dir = opts.out.unwrap_or_else(|| PathBuf::from("kkbrane-out"));
            report::write_run_outputs(&dir, &rep, &rows)?;
            print!("{}", rep.to_text());
            println!("outputs in {}", dir.display());
            rep.passed
        }
        Command::Verify { config, opts } => {
            let cfg = opts.load(&config)?;
            finish(&report::verify(&cfg, opts.tol_scale)?, opts.out.as_deref())?
        }
        Command::Sweep { config, grids, opts } => {
            let cfg = opts.load(&config)?;
            finish(&report::sweep(&cfg, &grids, opts.tol_scale)?, opts.out.as_deref())?
        }
        Command::Report { rundir } => {
            let rep = report::load_report(&rundir)?;
            print!("{}", rep.to_text());
            rep.passed
        }
    };
    println!("wall clock: {:.3} s", start.elapsed().as_secs_f64());
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
