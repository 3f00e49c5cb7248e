//! Config-driven Monte-Carlo experiments with CSV and JSON artifacts.

mod config;
mod histogram;
mod run;

pub use config::{ExperimentConfig, ExperimentKind};
pub use histogram::{freedman_diaconis_bins, quantile_sorted, BinRule, Binning, Histogram, HistogramBin};
pub use run::{
    homogenized, manifest_config, normal_overlay, normality_study, problem, rates_study, reference_value, replay,
    replicate, run, scaled_samples, simulate, write_estimates, BoundRow, Homogenized, NormalityStats, RatesOutcome,
    ReplicationRow, RunManifest, RunOutcome, Stats, Summary, MAX_FAILURE_FRACTION,
};
