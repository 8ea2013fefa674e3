//! Experiment harness checking the limit theorems at desk scale, plus the
//! metric and calibration utilities they need (1-D Wasserstein distance,
//! Kolmogorov–Smirnov statistics, slope fits).
//!
//! Each experiment returns an [`ExperimentReport`]: raw per-replicate rows,
//! summary statistics derived from them, and named pass/fail verdicts whose
//! thresholds are recomputable from the CSV alone.

pub mod experiments;
pub mod report;
pub mod stats;
pub mod wasserstein;

pub use experiments::{
    chaos_rate_experiment, identifiability_scan, lan_experiment, normality_experiment,
    score_calibration, CalibrateConfig, ChaosConfig, IdentifyConfig, LanConfig, NormalityConfig,
};
pub use report::{ExperimentReport, Verdict};
pub use wasserstein::wasserstein1;
