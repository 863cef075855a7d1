//! Config-driven sweeps over network size and local sample size, CSV output
//! and summaries of the final iterates.

mod config;
mod runner;
mod summary;

pub use config::{
    EtaRule, EtaSetting, ExperimentConfig, RunConfig, ScheduleConfig, SweepConfig, TopologyConfig,
};
pub use runner::{
    run_experiment, sweep_spectra, ExperimentOutput, RunRecord, RunResult, BOUND_SLACK,
    SCHEMA_VERSION,
};
pub use summary::{
    read_records, read_records_from_path, summarize, summarize_records, GroupKey, GroupSummary,
    KeyValue, Metric, SlopeAxis, Summary, COLUMNS,
};
