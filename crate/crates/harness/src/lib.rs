//! Scenario runner, store verification and benchmarks for the workspace stack.

pub mod bench;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod verify;

pub use report::{AssertionResult, LatencyStats, RunReport};
pub use runner::{run_scenario, run_scenario_file, RunError, RunOptions, World, WorkspaceMeta};
pub use scenario::{Assertion, Scenario, ScenarioError};
