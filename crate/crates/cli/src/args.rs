use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use knockmed::{ExposureContrast, ForestConfig, GkmsConfig, LambdaRule, PathBMethod, Setting, ThresholdRule};

use crate::analyze::{AnalyzeConfig, EffectsConfig};
use crate::error::CliError;
use crate::simulate::Grid;

#[derive(Debug, Parser)]
#[command(name = "knockmed", version, about = "Knockoff-based mediator selection with FDR control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select mediators in a delimited data file and write a JSON report.
    Analyze(AnalyzeArgs),
    /// Run a simulation grid and write per-replication and aggregate CSVs.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Knockoff,
    KnockoffPlus,
}

impl From<RuleArg> for ThresholdRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Knockoff => ThresholdRule::Knockoff,
            RuleArg::KnockoffPlus => ThresholdRule::KnockoffPlus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PathBArg {
    Lasso,
    RandomForest,
    Pls,
}

impl From<PathBArg> for PathBMethod {
    fn from(m: PathBArg) -> Self {
        match m {
            PathBArg::Lasso => PathBMethod::Lasso,
            PathBArg::RandomForest => PathBMethod::RandomForest,
            PathBArg::Pls => PathBMethod::Pls,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SettingArg {
    Linear,
    Interaction,
    Cosine,
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::Linear => Setting::Linear,
            SettingArg::Interaction => Setting::Interaction,
            SettingArg::Cosine => Setting::Cosine,
        }
    }
}

/// Selection options shared by both commands.
#[derive(Debug, Clone, Args)]
pub struct SelectionArgs {
    /// Target FDR level.
    #[arg(long, default_value_t = 0.2)]
    pub q: f64,

    #[arg(long, value_enum, default_value_t = RuleArg::KnockoffPlus)]
    pub rule: RuleArg,

    /// Path-b statistic.
    #[arg(long, value_enum, default_value_t = PathBArg::Lasso)]
    pub pathb: PathBArg,

    /// Compute the two paths on disjoint halves of the rows.
    #[arg(long)]
    pub data_split: bool,

    /// Fraction of rows used for path a when splitting.
    #[arg(long, default_value_t = 0.5)]
    pub split_fraction: f64,

    #[arg(long, env = "KNOCKMED_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Covariance shrinkage for the knockoff model; chosen from the sample size when omitted.
    #[arg(long)]
    pub shrinkage: Option<f64>,

    /// Fixed lasso penalty; cross-validated when omitted.
    #[arg(long)]
    pub lambda: Option<f64>,

    #[arg(long, default_value_t = 10)]
    pub cv_folds: usize,

    #[arg(long, default_value_t = 300)]
    pub trees: usize,

    /// Features tried per split; a third of the columns when omitted.
    #[arg(long)]
    pub mtry: Option<usize>,

    #[arg(long, default_value_t = 5)]
    pub min_node: usize,

    #[arg(long, default_value_t = 256)]
    pub max_bins: usize,

    /// Worker threads; all cores when omitted.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl SelectionArgs {
    pub fn gkms_config(&self) -> GkmsConfig {
        GkmsConfig {
            q: self.q,
            rule: self.rule.into(),
            pathb_method: self.pathb.into(),
            data_split: self.data_split,
            split_fraction: self.split_fraction,
            seed: self.seed,
            shrinkage: self.shrinkage,
            forest: ForestConfig { n_trees: self.trees, mtry: self.mtry, min_node: self.min_node, max_bins: self.max_bins },
            lambda_rule: match self.lambda {
                Some(l) => LambdaRule::Fixed(l),
                None => LambdaRule::CrossValidated { folds: self.cv_folds },
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Header-bearing delimited file.
    #[arg(long, required_unless_present = "replay")]
    pub input: Option<PathBuf>,

    #[arg(long, default_value_t = ',')]
    pub delimiter: char,

    #[arg(long, required_unless_present = "replay")]
    pub exposure: Option<String>,

    #[arg(long, required_unless_present = "replay")]
    pub outcome: Option<String>,

    /// Comma-separated confounder columns.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,

    /// Columns starting with this prefix are mediators.
    #[arg(long, default_value = "M")]
    pub mediator_prefix: String,

    /// Comma-separated mediator columns; overrides the prefix.
    #[arg(long, value_delimiter = ',')]
    pub mediators: Vec<String>,

    /// Select on the raw scale instead of unit root-mean-square columns.
    #[arg(long)]
    pub no_scale: bool,

    /// Skip effect estimation.
    #[arg(long)]
    pub no_effects: bool,

    #[arg(long, default_value_t = knockmed::effects::DEFAULT_BOOTSTRAP_REPS)]
    pub bootstrap: usize,

    #[arg(long, default_value_t = knockmed::effects::DEFAULT_MC_DRAWS)]
    pub mc_draws: usize,

    /// Reference and treated exposure levels for the g-formula, e.g. `0,1`.
    /// The exposure is split at its median when omitted.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub exposure_levels: Option<Vec<f64>>,

    /// Rerun the configuration embedded in an earlier report.
    #[arg(long, conflicts_with_all = ["input", "exposure", "outcome"])]
    pub replay: Option<PathBuf>,

    /// Report destination; standard output when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,

    #[command(flatten)]
    pub selection: SelectionArgs,
}

impl AnalyzeArgs {
    pub fn config(&self) -> Result<AnalyzeConfig, CliError> {
        if let Some(path) = &self.replay {
            return load_report_config(path);
        }
        let contrast = match self.exposure_levels.as_deref() {
            Some(&[reference, treated]) => ExposureContrast::Levels { reference, treated },
            Some(other) => {
                return Err(CliError::Config(format!("--exposure-levels needs two values, got {}", other.len())));
            }
            None => ExposureContrast::MedianSplit,
        };
        Ok(AnalyzeConfig {
            input: self.input.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            delimiter: self.delimiter,
            exposure: self.exposure.clone().unwrap_or_default(),
            outcome: self.outcome.clone().unwrap_or_default(),
            covariates: self.covariates.clone(),
            mediator_prefix: self.mediator_prefix.clone(),
            mediators: self.mediators.clone(),
            scale: !self.no_scale,
            gkms: self.selection.gkms_config(),
            effects: EffectsConfig {
                enabled: !self.no_effects,
                bootstrap_reps: self.bootstrap,
                mc_draws: self.mc_draws,
                contrast,
            },
        })
    }
}

/// Reads the `config` object of a report, or a bare config document.
pub fn load_report_config(path: &std::path::Path) -> Result<AnalyzeConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config = value.get("config").cloned().unwrap_or(value);
    serde_json::from_value(config).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub setting: SettingArg,

    #[arg(long, default_value_t = 1000)]
    pub n: usize,

    #[arg(long, default_value_t = 100)]
    pub p: usize,

    /// Comma-separated mediator-noise correlations.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub rho: Vec<f64>,

    /// Comma-separated path-a effect sizes.
    #[arg(long, value_delimiter = ',', default_value = "0.4")]
    pub a: Vec<f64>,

    /// Comma-separated path-b effect sizes.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub b: Vec<f64>,

    #[arg(long, default_value_t = 100)]
    pub replications: usize,

    #[arg(long)]
    pub out_dir: PathBuf,

    #[command(flatten)]
    pub selection: SelectionArgs,
}

impl SimulateArgs {
    pub fn grid(&self) -> Grid {
        Grid {
            setting: self.setting.into(),
            n: self.n,
            p: self.p,
            rho: self.rho.clone(),
            a: self.a.clone(),
            b: self.b.clone(),
            replications: self.replications,
            seed: self.selection.seed,
        }
    }
}
