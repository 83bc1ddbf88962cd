//! Batteries and sweeps: generate traces, run every applicable check on
//! each, and aggregate per-family tallies into a report.

mod battery;
mod scenarios;
mod sweep;

pub use battery::{
    decisive_labels, is_expected_violation, lin_sized, prescribed_pairs, reducing_labels, run_battery,
    traversal_pred, BatteryOptions, Tally, TraceChecks, EXPECTED_STRONG_CF,
};
pub use scenarios::{run_scenario, Expectation, ScenarioReport};
pub use sweep::{
    mutation_workload, run_sweep, run_stress_check, sweep_workloads, Finding, StressReport, SweepItem, SweepReport,
};
