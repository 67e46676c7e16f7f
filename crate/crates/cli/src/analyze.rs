//! The `analyze` command: selection on a user dataset plus effect estimates.

use std::path::Path;

use knockmed::effects::{DEFAULT_BOOTSTRAP_REPS, DEFAULT_MC_DRAWS};
use knockmed::rng::{stream_seed, Stream};
use knockmed::{
    gformula_nie, gkms, product_effects, rng_from_seed, standardize_dataset, Dataset, EffectEstimate,
    ExposureContrast, GFormulaConfig, GkmsConfig, PathBMethod, ThresholdRule,
};
use serde::{Deserialize, Serialize};

use crate::error::{classify, CliError};
use crate::input::{read_table, Roles, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectsConfig {
    pub enabled: bool,
    pub bootstrap_reps: usize,
    /// Monte Carlo draws for the g-formula (forest path b only).
    pub mc_draws: usize,
    pub contrast: ExposureContrast,
}

impl Default for EffectsConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            bootstrap_reps: DEFAULT_BOOTSTRAP_REPS,
            mc_draws: DEFAULT_MC_DRAWS,
            contrast: ExposureContrast::MedianSplit,
        }
    }
}

/// Everything that determines an analysis. Echoed as the report's `config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeConfig {
    pub input: String,
    pub delimiter: char,
    pub exposure: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    pub mediator_prefix: String,
    /// Mediator columns. Filled from the prefix when empty.
    pub mediators: Vec<String>,
    /// Scale mediators and outcome to unit root-mean-square before selection.
    pub scale: bool,
    pub gkms: GkmsConfig,
    pub effects: EffectsConfig,
}

impl AnalyzeConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if !self.delimiter.is_ascii() {
            return Err(CliError::Config(format!("delimiter must be a single ASCII character, got {:?}", self.delimiter)));
        }
        self.gkms.validate().map_err(classify)?;
        if self.effects.enabled && self.effects.mc_draws == 0 {
            return Err(CliError::Config("mc_draws must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Zero-based positions in `config.mediators`.
    pub indices: Vec<usize>,
    pub names: Vec<String>,
    pub threshold: Option<f64>,
    pub rule: ThresholdRule,
    pub q: f64,
    pub fdp_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediatorStatistics {
    pub index: usize,
    pub name: String,
    pub z_a: f64,
    pub z_a_tilde: f64,
    pub z_b: f64,
    pub z_b_tilde: f64,
    pub w: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRecord {
    pub name: String,
    #[serde(flatten)]
    pub estimate: EffectEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub rows_read: usize,
    pub rows_used: usize,
    pub rows_dropped: usize,
    pub n_mediators: usize,
    pub n_covariates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: AnalyzeConfig,
    pub selection: Selection,
    pub statistics: Vec<MediatorStatistics>,
    pub effects: Vec<EffectRecord>,
    pub warnings: Vec<String>,
    pub meta: Meta,
}

impl Report {
    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}

/// Names the column behind a degenerate-column error from scaling.
fn scale(data: &Dataset, mediators: &[String], outcome: &str) -> Result<Dataset, CliError> {
    standardize_dataset(data).map_err(|e| match e {
        knockmed::Error::DegenerateColumn { column } => {
            let name = mediators.get(column).map_or(outcome, String::as_str);
            CliError::Input(format!("column `{name}` is constant zero and cannot be scaled"))
        }
        other => classify(other),
    })
}

fn estimate_effects(
    data: &Dataset,
    selected: &[usize],
    config: &AnalyzeConfig,
) -> knockmed::Result<Vec<EffectEstimate>> {
    let mut rng = rng_from_seed(stream_seed(config.gkms.seed, Stream::Bootstrap));
    match config.gkms.pathb_method {
        PathBMethod::RandomForest => {
            let g = GFormulaConfig {
                mc_draws: config.effects.mc_draws,
                bootstrap_reps: config.effects.bootstrap_reps,
                contrast: config.effects.contrast,
                forest: knockmed::ForestConfig { mtry: None, ..config.gkms.forest },
            };
            gformula_nie(data, selected, &g, &mut rng)
        }
        PathBMethod::Lasso | PathBMethod::Pls => product_effects(data, selected, config.effects.bootstrap_reps, &mut rng),
    }
}

/// Reads the input named in `config` and runs selection and effect estimation.
pub fn run_analysis(config: &AnalyzeConfig) -> Result<Report, CliError> {
    config.validate()?;
    let roles = Roles {
        exposure: &config.exposure,
        outcome: &config.outcome,
        covariates: &config.covariates,
        mediators: &config.mediators,
        mediator_prefix: &config.mediator_prefix,
    };
    let Table { dataset, mediator_names, covariate_names, rows_read, rows_dropped } =
        read_table(Path::new(&config.input), config.delimiter as u8, &roles)?;
    let mut config = config.clone();
    config.mediators = mediator_names.clone();

    let mut warnings = Vec::new();
    if rows_dropped > 0 {
        warnings.push(format!("dropped {rows_dropped} of {rows_read} rows with missing values"));
    }

    let selection_data = if config.scale { scale(&dataset, &mediator_names, &config.outcome)? } else { dataset.clone() };
    let result = gkms(&selection_data, &config.gkms).map_err(classify)?;
    warnings.extend(result.report.warnings.iter().cloned());

    let selected = result.report.selected.clone();
    let mut effects = Vec::new();
    if config.effects.enabled && !selected.is_empty() {
        match estimate_effects(&dataset, &selected, &config) {
            Ok(list) => {
                effects = list
                    .into_iter()
                    .map(|estimate| EffectRecord { name: mediator_names[estimate.mediator_index].clone(), estimate })
                    .collect();
            }
            Err(e) => warnings.push(format!("effect estimation skipped: {e}")),
        }
    }

    let trace = &result.trace;
    let statistics = mediator_names
        .iter()
        .enumerate()
        .map(|(j, name)| MediatorStatistics {
            index: j,
            name: name.clone(),
            z_a: trace.z_a[j],
            z_a_tilde: trace.z_a_tilde[j],
            z_b: trace.z_b[j],
            z_b_tilde: trace.z_b_tilde[j],
            w: trace.w[j],
            selected: selected.binary_search(&j).is_ok(),
        })
        .collect();

    let selection = Selection {
        names: selected.iter().map(|&j| mediator_names[j].clone()).collect(),
        indices: selected,
        threshold: result.report.threshold,
        rule: result.report.rule,
        q: result.report.q,
        fdp_estimate: result.report.fdp_estimate,
    };
    let meta = Meta {
        tool: "knockmed".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.gkms.seed,
        rows_read,
        rows_used: dataset.n(),
        rows_dropped,
        n_mediators: mediator_names.len(),
        n_covariates: covariate_names.len(),
    };
    Ok(Report { config, selection, statistics, effects, warnings, meta })
}
