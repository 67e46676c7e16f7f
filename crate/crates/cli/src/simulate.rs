//! The `simulate` command: a grid of simulation cells with CSV output.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use knockmed::simulation::{aggregate_row, replication_rows, write_csv, AggregateRow, ReplicationRow};
use knockmed::{run_replications, GkmsConfig, Setting, SimulationConfig};

use crate::error::{classify, CliError};

pub const REPLICATIONS_FILE: &str = "replications.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub setting: Setting,
    pub n: usize,
    pub p: usize,
    pub rho: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
}

impl Grid {
    /// One configuration per `(rho, a, b)` combination, `rho` varying slowest.
    pub fn cells(&self) -> Result<Vec<SimulationConfig>, CliError> {
        for (name, list) in [("rho", &self.rho), ("a", &self.a), ("b", &self.b)] {
            if list.is_empty() {
                return Err(CliError::Config(format!("{name} list is empty")));
            }
            if let Some(v) = list.iter().find(|v| !v.is_finite()) {
                return Err(CliError::Config(format!("{name} list contains non-finite value {v}")));
            }
        }
        if self.replications == 0 {
            return Err(CliError::Config("replications must be at least 1".into()));
        }
        let mut cells = Vec::with_capacity(self.rho.len() * self.a.len() * self.b.len());
        for &rho in &self.rho {
            for &a in &self.a {
                for &b in &self.b {
                    let mut sim = SimulationConfig::new(self.setting, self.n, self.p, rho, a, b);
                    sim.replications = self.replications;
                    sim.seed = self.seed;
                    sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
                    cells.push(sim);
                }
            }
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub replications: Vec<ReplicationRow>,
    pub aggregate: Vec<AggregateRow>,
}

/// Runs every grid cell. Cells share the base seed.
pub fn run_grid(grid: &Grid, config: &GkmsConfig) -> Result<SimulationOutput, CliError> {
    let cells = grid.cells()?;
    config.validate().map_err(classify)?;
    let mut out = SimulationOutput { replications: Vec::new(), aggregate: Vec::new() };
    for sim in &cells {
        let metrics = run_replications(sim, config).map_err(classify)?;
        out.replications.extend(replication_rows(sim, config.pathb_method, &metrics));
        out.aggregate.push(aggregate_row(sim, config.pathb_method, &metrics));
    }
    Ok(out)
}

fn write_rows<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let output_err = |source: std::io::Error| CliError::Output { path: path.display().to_string(), source };
    let file = File::create(path).map_err(output_err)?;
    write_csv(BufWriter::new(file), rows).map_err(|e| output_err(e.into()))
}

/// Writes both CSV files into `dir`, creating it if needed.
pub fn write_output(dir: &Path, output: &SimulationOutput) -> Result<(PathBuf, PathBuf), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Output { path: dir.display().to_string(), source })?;
    let reps = dir.join(REPLICATIONS_FILE);
    let agg = dir.join(AGGREGATE_FILE);
    write_rows(&reps, &output.replications)?;
    write_rows(&agg, &output.aggregate)?;
    Ok((reps, agg))
}

pub fn format_table(rows: &[AggregateRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>6} {:>5} {:>6} {:>6} {:>6} {:<14} {:>5} {:>7} {:>7} {:>7} {:>7}",
        "setting", "n", "p", "rho", "a", "b", "method", "reps", "fdr", "fdr_se", "power", "pwr_se"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<12} {:>6} {:>5} {:>6.3} {:>6.3} {:>6.3} {:<14} {:>5} {:>7.3} {:>7.3} {:>7.3} {:>7.3}",
            r.setting,
            r.n,
            r.p,
            r.rho,
            r.a,
            r.b,
            r.method,
            r.replications - r.failures,
            r.fdr,
            r.fdr_se,
            r.power,
            r.power_se
        );
    }
    s
}
