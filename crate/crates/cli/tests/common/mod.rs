#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const GOLDEN_REPORT: &str = "tests/data/golden_report.json";

pub fn crate_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

/// The binary, run from the crate directory with `KNOCKMED_SEED` cleared.
pub fn knockmed() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_knockmed"));
    cmd.current_dir(crate_dir()).env_remove("KNOCKMED_SEED");
    cmd
}

/// Forest path b exercises the parallel code paths.
pub fn golden_args(threads: usize, output: &Path) -> Vec<String> {
    [
        "analyze",
        "--input",
        "tests/data/cohort.csv",
        "--exposure",
        "exposure",
        "--outcome",
        "outcome",
        "--covariates",
        "age,sex",
        "--pathb",
        "random-forest",
        "--trees",
        "100",
        "--bootstrap",
        "20",
        "--mc-draws",
        "200",
        "--seed",
        "20240611",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain(["--threads".to_string(), threads.to_string(), "--output".to_string(), output.display().to_string()])
    .collect()
}

pub fn run_golden(threads: usize, dir: &Path, tag: &str) -> (Output, PathBuf) {
    let out = dir.join(format!("report_{tag}.json"));
    let output = knockmed().args(golden_args(threads, &out)).output().expect("binary runs");
    (output, out)
}
