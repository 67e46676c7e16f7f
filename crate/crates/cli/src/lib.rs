//! Command-line front end for `knockmed`.

pub mod analyze;
pub mod args;
pub mod error;
pub mod input;
pub mod simulate;

use std::fs;
use std::io::Write;

use args::{AnalyzeArgs, Cli, Command, SimulateArgs};
use error::CliError;

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Config(format!("cannot start {t} threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let config = args.config()?;
    let report = with_threads(args.selection.threads, || analyze::run_analysis(&config))??;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let json = report.to_json();
    match &args.output {
        Some(path) => fs::write(path, json).map_err(|source| CliError::Output { path: path.display().to_string(), source }),
        None => std::io::stdout()
            .write_all(json.as_bytes())
            .map_err(|source| CliError::Output { path: "<stdout>".into(), source }),
    }
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let grid = args.grid();
    let config = args.selection.gkms_config();
    let output = with_threads(args.selection.threads, || simulate::run_grid(&grid, &config))??;
    let (reps, agg) = simulate::write_output(&args.out_dir, &output)?;
    print!("{}", simulate::format_table(&output.aggregate));
    eprintln!("wrote {} and {}", reps.display(), agg.display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(s) => simulate(s),
    }
}
