//! Bayesian calibration: priors, log-error likelihood, DRAM chains and their
//! post-processing.

mod chains;
mod dram;
mod likelihood;
mod prior;
mod target;

pub use chains::{clean_chains, write_ensemble, PosteriorSamples};
pub use chains::write_json;
pub(crate) use chains::{csv_error, read_numeric_csv};
pub use dram::{dram_run, run_ensemble, Chain, ChainEnsemble, DramConfig, EnsembleConfig, LogDensity};
pub use likelihood::{log_likelihood, LikelihoodMode, LikelihoodSpec};
pub use prior::{Marginal, NamedMarginal, PriorSpec, QUANTILE_CLAMP};
pub use target::CalibrationTarget;
