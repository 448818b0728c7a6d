//! Scenario files, reference cases and simulation artifacts.

pub mod cases;
pub mod config;
pub mod output;
pub mod stream;
pub mod suite;

pub use cases::{reference_case, CaseSpec, REFERENCE_CASE_IDS};
pub use config::{
    load_scenario, parse_scenario, parse_scenario_unvalidated, read_scenario_unvalidated, ConfigError, GoalConfig, OutputConfig, PhaseConfig, ScenarioConfig,
};
pub use output::{run_case, CaseArtifacts, SUMMARY_HEADER, TRAJECTORY_HEADER};
pub use stream::{read_stream, CommandStream};
pub use suite::{run_suite, trend_checks, CaseResult, SuiteReport, TrendCheck};
