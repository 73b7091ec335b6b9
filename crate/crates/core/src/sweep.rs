//! Scenario evaluation and parameter sweeps over rationing level and storage size.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::format::{round_sig6, sig6};
use crate::profiles::{compute_shedding, EventProfile, SheddingSeries, Energy};
use crate::rationing::{apply_reduction, RationingPolicy};
use crate::storage::{
    dispatch_ens_offset, dispatch_peak_shave, size_for_zero_residual, storage_cost, CostModel,
    StorageSpec, ZeroResidualSize,
};

/// Residual ENS at or below this (MWh) counts as eliminated.
pub const ZERO_ENS_TOLERANCE_MWH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    PeakShave,
    EnsOffset,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::PeakShave => "peak_shave",
            Objective::EnsOffset => "ens_offset",
        }
    }
}

/// How demand is reduced before dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rationing {
    Policy(RationingPolicy),
    /// Direct system-level fraction of demand removed.
    System(f64),
}

impl Rationing {
    pub fn rho(&self) -> f64 {
        match self {
            Rationing::Policy(p) => p.system_reduction(),
            Rationing::System(r) => *r,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario<'a> {
    pub profile: &'a EventProfile,
    pub rationing: Rationing,
    pub storage: StorageSpec,
    pub objective: Objective,
    pub cost: CostModel,
}

impl<'a> Scenario<'a> {
    pub fn new(profile: &'a EventProfile, rho: f64, storage: StorageSpec, objective: Objective) -> Self {
        Scenario { profile, rationing: Rationing::System(rho), storage, objective, cost: CostModel::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub rho: f64,
    pub storage: StorageSpec,
    pub objective: Objective,
    /// ENS after rationing, before storage.
    pub ens: Energy,
    pub peak_shedding_mw: f64,
    pub peak_shave_mw: f64,
    pub residual_ens: Energy,
    pub residual_peak_mw: f64,
    pub energy_used: Energy,
    /// Storage needed to clear the rationed shedding entirely.
    pub zero_residual_size: ZeroResidualSize,
    /// Installed cost of `zero_residual_size`, dollars.
    pub cost_usd: f64,
}

/// Rationed shedding for a system reduction `rho`.
pub fn rationed_shedding(profile: &EventProfile, rho: f64) -> Result<SheddingSeries> {
    let served = apply_reduction(profile.demand(), rho)?;
    compute_shedding(profile, &served)
}

/// Ration, compute shedding, dispatch storage, report. Always in that order.
pub fn evaluate(scenario: &Scenario<'_>) -> Result<ScenarioReport> {
    let rho = scenario.rationing.rho();
    let shedding = rationed_shedding(scenario.profile, rho)?;
    let dispatch = match scenario.objective {
        Objective::PeakShave => dispatch_peak_shave(&shedding, &scenario.storage)?,
        Objective::EnsOffset => dispatch_ens_offset(&shedding, &scenario.storage)?,
    };
    let zero_residual_size = size_for_zero_residual(&shedding);
    Ok(ScenarioReport {
        rho,
        storage: scenario.storage,
        objective: scenario.objective,
        ens: shedding.ens(),
        peak_shedding_mw: shedding.peak_mw(),
        peak_shave_mw: dispatch.peak_shave_mw,
        residual_ens: dispatch.residual_ens(),
        residual_peak_mw: dispatch.residual_peak_mw(),
        energy_used: dispatch.energy_used,
        zero_residual_size,
        cost_usd: storage_cost(zero_residual_size.energy, &scenario.cost),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    EnsVsRationing,
    PeakShaveVsStorage,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::EnsVsRationing => "ens_vs_rationing",
            SweepKind::PeakShaveVsStorage => "peak_shave_vs_storage",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepOptions {
    pub execution: Execution,
    pub cost: CostModel,
}

/// Grid of reports; `reports[i][j]` is `(rho[i], storage[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub kind: SweepKind,
    pub objective: Objective,
    pub rho: Vec<f64>,
    pub storage: Vec<StorageSpec>,
    pub reports: Vec<Vec<ScenarioReport>>,
    /// Per storage column: smallest grid rho with no residual ENS.
    pub zero_crossings: Vec<Option<f64>>,
}

fn check_rho_axis(rho: &[f64]) -> Result<()> {
    if rho.is_empty() {
        return Err(Error::EmptyAxis("rho"));
    }
    if let Some(bad) = rho.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::InvalidParameter(format!("rho {bad} outside [0, 1]")));
    }
    if rho.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::NonIncreasingAxis("rho"));
    }
    Ok(())
}

fn check_storage_axis(storage: &[StorageSpec]) -> Result<()> {
    if storage.is_empty() {
        return Err(Error::EmptyAxis("storage"));
    }
    if storage.windows(2).any(|w| w[1].energy_capacity <= w[0].energy_capacity) {
        return Err(Error::NonIncreasingAxis("storage"));
    }
    Ok(())
}

fn run_grid(
    profile: &EventProfile,
    rho: &[f64],
    storage: &[StorageSpec],
    objective: Objective,
    options: &SweepOptions,
) -> Result<Vec<Vec<ScenarioReport>>> {
    let cols = storage.len();
    let cells = options.execution.map_indexed(rho.len() * cols, |k| {
        let scenario = Scenario {
            profile,
            rationing: Rationing::System(rho[k / cols]),
            storage: storage[k % cols],
            objective,
            cost: options.cost,
        };
        evaluate(&scenario)
    });
    let mut flat = cells.into_iter().collect::<Result<Vec<_>>>()?.into_iter();
    Ok((0..rho.len()).map(|_| flat.by_ref().take(cols).collect()).collect())
}

fn zero_crossings(rho: &[f64], reports: &[Vec<ScenarioReport>], cols: usize) -> Vec<Option<f64>> {
    (0..cols)
        .map(|j| {
            rho.iter()
                .zip(reports)
                .find(|(_, row)| row[j].residual_ens.mwh() <= ZERO_ENS_TOLERANCE_MWH)
                .map(|(&r, _)| r)
        })
        .collect()
}

/// ENS against rationing level, one curve per storage option, under ENS-offset dispatch.
pub fn sweep_ens_vs_rationing(
    profile: &EventProfile,
    rho_values: &[f64],
    storage_options: &[StorageSpec],
) -> Result<SweepGrid> {
    sweep_ens_vs_rationing_with(profile, rho_values, storage_options, &SweepOptions::default())
}

pub fn sweep_ens_vs_rationing_with(
    profile: &EventProfile,
    rho_values: &[f64],
    storage_options: &[StorageSpec],
    options: &SweepOptions,
) -> Result<SweepGrid> {
    check_rho_axis(rho_values)?;
    check_storage_axis(storage_options)?;
    let reports = run_grid(profile, rho_values, storage_options, Objective::EnsOffset, options)?;
    let zero_crossings = zero_crossings(rho_values, &reports, storage_options.len());
    Ok(SweepGrid {
        kind: SweepKind::EnsVsRationing,
        objective: Objective::EnsOffset,
        rho: rho_values.to_vec(),
        storage: storage_options.to_vec(),
        reports,
        zero_crossings,
    })
}

/// Peak shave against storage energy, one curve per rationing level, unbounded power.
pub fn sweep_peak_shave_vs_storage(
    profile: &EventProfile,
    rho_values: &[f64],
    energy_values: &[Energy],
) -> Result<SweepGrid> {
    let storage: Vec<_> = energy_values.iter().map(|&e| StorageSpec::new(e)).collect();
    sweep_peak_shave_vs_storage_with(profile, rho_values, &storage, &SweepOptions::default())
}

pub fn sweep_peak_shave_vs_storage_with(
    profile: &EventProfile,
    rho_values: &[f64],
    storage: &[StorageSpec],
    options: &SweepOptions,
) -> Result<SweepGrid> {
    check_rho_axis(rho_values)?;
    check_storage_axis(storage)?;
    let reports = run_grid(profile, rho_values, storage, Objective::PeakShave, options)?;
    Ok(SweepGrid {
        kind: SweepKind::PeakShaveVsStorage,
        objective: Objective::PeakShave,
        rho: rho_values.to_vec(),
        storage: storage.to_vec(),
        reports,
        zero_crossings: Vec::new(),
    })
}

/// Rationed shedding series, one per `rho`.
pub fn shedding_trajectories(profile: &EventProfile, rho_values: &[f64]) -> Result<Vec<SheddingSeries>> {
    rho_values.iter().map(|&r| rationed_shedding(profile, r)).collect()
}

/// Bisects rho between a bracket `(lo, hi)` where residual ENS is positive at `lo`
/// and zero at `hi`, down to width `tolerance`.
pub fn refine_zero_crossing(
    profile: &EventProfile,
    storage: &StorageSpec,
    mut lo: f64,
    mut hi: f64,
    tolerance: f64,
) -> Result<f64> {
    let residual = |rho: f64| -> Result<f64> {
        let shed = rationed_shedding(profile, rho)?;
        Ok(dispatch_ens_offset(&shed, storage)?.residual_ens().mwh())
    };
    if !(lo < hi) || residual(hi)? > ZERO_ENS_TOLERANCE_MWH {
        return Err(Error::InvalidParameter(format!("[{lo}, {hi}] does not bracket a zero crossing")));
    }
    if residual(lo)? <= ZERO_ENS_TOLERANCE_MWH {
        return Ok(lo);
    }
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if residual(mid)? <= ZERO_ENS_TOLERANCE_MWH {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

pub const SWEEP_CSV_HEADER: &str = "kind,objective,rho,energy_mwh,power_limit_mw,ens_mwh,residual_ens_mwh,\
peak_shedding_mw,peak_shave_mw,residual_peak_mw,energy_used_mwh,zero_residual_energy_mwh,\
zero_residual_power_mw,cost_usd";

fn power_label(limit: Option<f64>) -> String {
    limit.map(sig6).unwrap_or_else(|| "unbounded".to_string())
}

impl SweepGrid {
    pub fn curve_count(&self) -> usize {
        self.storage.len()
    }

    /// Column `j` along the rho axis.
    pub fn column(&self, j: usize) -> impl Iterator<Item = &ScenarioReport> + '_ {
        self.reports.iter().map(move |row| &row[j])
    }

    /// One row per cell, rho-major.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{SWEEP_CSV_HEADER}")?;
        for row in &self.reports {
            for r in row {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    self.kind.as_str(),
                    r.objective.as_str(),
                    sig6(r.rho),
                    sig6(r.storage.energy_capacity.mwh()),
                    power_label(r.storage.power_limit_mw),
                    sig6(r.ens.mwh()),
                    sig6(r.residual_ens.mwh()),
                    sig6(r.peak_shedding_mw),
                    sig6(r.peak_shave_mw),
                    sig6(r.residual_peak_mw),
                    sig6(r.energy_used.mwh()),
                    sig6(r.zero_residual_size.energy.mwh()),
                    sig6(r.zero_residual_size.power_mw),
                    sig6(r.cost_usd),
                )?;
            }
        }
        Ok(())
    }

    /// JSON document mirroring the grid, numbers rounded to six significant digits.
    pub fn to_json(&self) -> Value {
        let r6 = |x: f64| json!(round_sig6(x));
        let reports: Vec<Value> = self
            .reports
            .iter()
            .map(|row| {
                row.iter()
                    .map(|r| {
                        json!({
                            "ens_mwh": r6(r.ens.mwh()),
                            "residual_ens_mwh": r6(r.residual_ens.mwh()),
                            "peak_shedding_mw": r6(r.peak_shedding_mw),
                            "peak_shave_mw": r6(r.peak_shave_mw),
                            "residual_peak_mw": r6(r.residual_peak_mw),
                            "energy_used_mwh": r6(r.energy_used.mwh()),
                            "zero_residual_energy_mwh": r6(r.zero_residual_size.energy.mwh()),
                            "zero_residual_power_mw": r6(r.zero_residual_size.power_mw),
                            "cost_usd": r6(r.cost_usd),
                        })
                    })
                    .collect()
            })
            .collect();
        json!({
            "kind": self.kind.as_str(),
            "objective": self.objective.as_str(),
            "axes": {
                "rho": self.rho.iter().map(|&x| r6(x)).collect::<Vec<_>>(),
                "energy_mwh": self.storage.iter().map(|s| r6(s.energy_capacity.mwh())).collect::<Vec<_>>(),
                "power_limit_mw": self.storage.iter().map(|s| s.power_limit_mw.map(round_sig6)).collect::<Vec<_>>(),
            },
            "reports": reports,
            "zero_crossings": self.zero_crossings.iter().map(|z| z.map(round_sig6)).collect::<Vec<_>>(),
        })
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, &self.to_json())?;
        writeln!(out)?;
        Ok(())
    }
}

/// Long-form `timestamp,rho,shedding_mw` rows.
pub fn write_trajectories_csv<W: Write>(rho_values: &[f64], series: &[SheddingSeries], mut out: W) -> Result<()> {
    writeln!(out, "timestamp,rho,shedding_mw")?;
    for (&rho, s) in rho_values.iter().zip(series) {
        for (i, &v) in s.values().iter().enumerate() {
            writeln!(out, "{},{},{}", s.grid().timestamp(i).format("%Y-%m-%dT%H:%M:%SZ"), sig6(rho), sig6(v))?;
        }
    }
    Ok(())
}

/// `start, start + step, ...` up to and including `end` (within half a step).
pub fn linspace_step(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 0.5).floor() as usize;
    (0..=n).map(|i| round_sig6(start + step * i as f64)).collect()
}
