//! Experiment orchestration: Monte Carlo batches, verification suites,
//! empirical privacy audits, config ingestion, and file outputs.

pub mod audit;
pub mod config;
pub mod output;
pub mod suites;
pub mod trials;

pub use audit::{clopper_pearson, default_audit_scripts, empirical_dp_audit, DpAuditReport};
pub use config::{
    load_config, parse_config, ConfigError, ExperimentSpec, LoadedConfig, Suite, SuiteParams,
    SweepGrid, SUPPORTED_SCHEMA_VERSION,
};
pub use suites::{
    accuracy_suite, cost_suite, halting_tail_suite, lemma_tail_suite, run_selected_suites,
    transcript_ratio_audit, HarnessError, SuiteReport,
};
pub use trials::{run_trials, EpochRow, ExperimentSummary, TrialRecord, TrialsOutput};
