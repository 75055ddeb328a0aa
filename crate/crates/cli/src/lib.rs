//! Run orchestration: configuration files, the command implementations behind
//! the `postcheck` binary, and their JSON/CSV report formats.

mod commands;
mod plot;
mod runconfig;

pub use commands::{
    cmd_estimate, cmd_gap, cmd_pipeline, cmd_sample, cmd_simulate, cmd_verify, CliError,
    EstimateReport, GapReport, PipelineReport, SampleReport, VerifyArgs, VerifyReport,
};
pub use plot::cmd_plot_data;
pub use runconfig::{ChainSection, IntegratorSection, LoadedRun, RunConfig, TestMode, TestSection};
