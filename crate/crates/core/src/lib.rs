//! Capacity-shortfall event simulator: load shedding and Energy-Not-Served, load
//! rationing, and energy-limited storage dispatch.
//!
//! Internal units are MW and MWh throughout; GW and GWh appear only in CLI display.

pub mod calibrate;
pub mod cli;
pub mod error;
pub mod exec;
pub mod format;
pub mod profiles;
pub mod rationing;
pub mod storage;
pub mod sweep;

pub use error::{Error, Result};
pub use exec::Execution;
pub use profiles::{
    adequacy_shedding, compute_ens, compute_shedding, load_profile, resample, Energy, EventProfile,
    PowerSeries, ProfileSchema, SheddingSeries, TimeGrid,
};
pub use rationing::{apply_rationing, household_cap, system_reduction, Fraction, RationingPolicy};
pub use storage::{
    aggregate_ev_fleet, dispatch_ens_offset, dispatch_peak_shave, size_for_zero_residual, storage_cost,
    CostModel, DispatchResult, StorageSpec,
};
pub use sweep::{evaluate, Objective, Scenario, ScenarioReport, SweepGrid};

/// The bundled calibrated event profile, CSV in the MW schema.
pub const BUNDLED_FIXTURE_CSV: &str = include_str!("../fixtures/feb2021_event.csv");

pub fn bundled_fixture() -> EventProfile {
    load_profile(BUNDLED_FIXTURE_CSV.as_bytes(), &ProfileSchema::megawatts())
        .expect("bundled fixture is a valid profile")
}
