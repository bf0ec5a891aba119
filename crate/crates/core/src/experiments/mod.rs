//! Experiment configs and the multi-seed suite behind `reproduce`.
//!
//! Every artifact a suite writes is a pure function of its [`SuiteConfig`];
//! measured wall-clock goes only to `logs/`, which the manifest skips.

mod config;
mod suite;

pub use config::{derive_seed, ExperimentConfig, Gamma, ModelParams, Regime, SuiteConfig};
pub use suite::{
    build_manifest, build_suite_data, flops_table, median, ordering_checks, regime, regime_dir, run_seed, run_suite,
    InProcess, Manifest, ManifestEntry, OrderingCheck, RegimeOutcome, SeedOutcome, SuiteData, SuiteSummary,
    TrainingCost, VariantSteps, write_manifest, LOGS, MANIFEST, ORDERINGS, PRIMARY, SHIFTED, TABLES,
};
