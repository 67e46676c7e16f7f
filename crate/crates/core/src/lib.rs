//! Mediator selection with false discovery rate control via model-X knockoffs.
//!
//! Each candidate mediator gets a path-a statistic (exposure to mediator) and
//! a path-b statistic (mediator to outcome), each paired with the same
//! statistic computed on a knockoff copy. The product of the two differences
//! is fed to the knockoff threshold.
//!
//! ```no_run
//! use knockmed::{gkms, Dataset, GkmsConfig};
//! # fn load() -> Dataset { unimplemented!() }
//! let data: Dataset = load();
//! let result = gkms(&data, &GkmsConfig::default()).unwrap();
//! println!("{:?}", result.report.selected);
//! ```

pub mod data;
pub mod effects;
pub mod error;
pub mod filter;
pub mod knockoff;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod simulation;
pub mod statistics;

pub use data::Dataset;
pub use effects::{gformula_nie, product_effects, EffectEstimate, EffectMethod, ExposureContrast, GFormulaConfig};
pub use error::{Error, Result};
pub use filter::{fdp_estimate, knockoff_threshold, osff_product, swap, SelectionReport, SwapSet, ThresholdRule, WVector};
pub use knockoff::{second_order_knockoff, GaussianModel, KnockoffCopy};
pub use pipeline::{gkms, standardize_dataset, GkmsConfig, GkmsResult, GkmsTrace, PathBMethod};
pub use rng::{rng_from_seed, KnockRng};
pub use simulation::{run_replications, EmpiricalMetrics, GroundTruth, Setting, SimulationConfig};
pub use statistics::{ForestConfig, LambdaRule, Path, StatMethod, StatPair};
