//! Metrics and the experiment runner.

mod experiment;
mod metrics;

pub use experiment::{
    phase_rows, run_cell, run_experiment, summarize, trace_rows, Algo, ExperimentReport, ExperimentSpec,
    InstanceSource, SummaryRow, PHASES_HEADER, SUMMARY_HEADER, TRACE_HEADER,
};
pub use metrics::{comm_cost, compute_regret, sparsity_level, DEFAULT_SPARSITY_THRESHOLD};
