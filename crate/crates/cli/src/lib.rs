//! Scenario runner for the omega-pension solver: JSON configs, the solve
//! pipeline, sweeps, the two-mode comparison and plot-data emission.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod pipeline;

pub use config::{ScenarioConfig, Sweep, SweepParameter};
pub use pipeline::{compare_modes, run_scenario, run_sweep, RunOptions, RunOutcome, Status};
