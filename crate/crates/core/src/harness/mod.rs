//! Scenario definitions, builtins and sweeps.

pub mod builtin;
pub mod scenario;
pub mod sweep;

pub use builtin::{builtin_names, builtin_scenario, builtin_sweep, builtin_sweep_names};
pub use scenario::{FlowGroup, FlowSpec, ScenarioSpec};
pub use sweep::{run_sweep, CellResult, SweepSpec};
