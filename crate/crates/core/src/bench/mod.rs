//! Benchmark support: data files, metrics, synthetic datasets and
//! config-driven experiment runs.

pub mod data;
pub mod experiment;
pub mod metrics;
pub mod score;
pub mod synth;

pub use data::{FrameStack, IOSequence, Localization, Rating, RatingsData};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentSummary, WORKERS_ENV};
pub use metrics::{match_sources, matcomp_rmse, sysid_score, MatchScore};
pub use synth::DatasetKind;
