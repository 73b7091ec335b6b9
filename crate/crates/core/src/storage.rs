//! Discharge-only storage: peak-shaving and ENS-offset dispatch, zero-residual sizing,
//! EV fleet aggregation and capital cost.
//!
//! Storage starts charged to `initial_charge_fraction` of its energy rating and never
//! recharges during the event. Deliverable energy is `E * initial_charge * efficiency`.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{Energy, PowerSeries, SheddingSeries};

/// Threshold bisection stops once the bracket is this narrow (MW).
pub const BISECTION_TOLERANCE_MW: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    pub energy_capacity: Energy,
    /// `None` is an unbounded discharge rate.
    pub power_limit_mw: Option<f64>,
    pub initial_charge_fraction: f64,
    pub efficiency: f64,
}

impl StorageSpec {
    /// Full, lossless store with unbounded power.
    pub fn new(energy_capacity: Energy) -> Self {
        StorageSpec { energy_capacity, power_limit_mw: None, initial_charge_fraction: 1.0, efficiency: 1.0 }
    }

    pub fn none() -> Self {
        Self::new(Energy::ZERO)
    }

    pub fn with_power_limit(mut self, power_limit_mw: Option<f64>) -> Result<Self> {
        if let Some(p) = power_limit_mw {
            if !(p > 0.0 && !p.is_nan()) {
                return Err(Error::InvalidParameter(format!("power limit must be positive, got {p} MW")));
            }
        }
        self.power_limit_mw = power_limit_mw.filter(|p| p.is_finite());
        Ok(self)
    }

    pub fn with_initial_charge(mut self, fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidParameter(format!("initial charge {fraction} outside [0, 1]")));
        }
        self.initial_charge_fraction = fraction;
        Ok(self)
    }

    pub fn with_efficiency(mut self, efficiency: f64) -> Result<Self> {
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(Error::InvalidParameter(format!("efficiency {efficiency} outside (0, 1]")));
        }
        self.efficiency = efficiency;
        Ok(self)
    }

    /// Discharge rate cap in MW; infinite when unbounded.
    pub fn power_cap_mw(&self) -> f64 {
        self.power_limit_mw.unwrap_or(f64::INFINITY)
    }

    /// Energy the store can deliver over the event, MWh.
    pub fn deliverable_mwh(&self) -> f64 {
        self.energy_capacity.mwh() * self.initial_charge_fraction * self.efficiency
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub discharge: PowerSeries,
    pub residual: SheddingSeries,
    /// Residual ceiling for threshold dispatch; `None` for ENS-offset dispatch.
    pub threshold_mw: Option<f64>,
    pub energy_used: Energy,
    /// `max s - max r`.
    pub peak_shave_mw: f64,
}

impl DispatchResult {
    fn assemble(shedding: &SheddingSeries, discharge: Vec<f64>, threshold_mw: Option<f64>) -> Result<Self> {
        let grid = *shedding.grid();
        let residual: Vec<f64> = shedding
            .values()
            .iter()
            .zip(&discharge)
            .map(|(s, d)| s - d)
            .collect();
        let energy_used = discharge.iter().sum::<f64>() * grid.step_hours();
        let residual = SheddingSeries::new(grid, residual)?;
        let peak_shave_mw = shedding.peak_mw() - residual.peak_mw();
        Ok(DispatchResult {
            discharge: PowerSeries::new(grid, discharge)?,
            residual,
            threshold_mw,
            energy_used: Energy::from_mwh(energy_used),
            peak_shave_mw,
        })
    }

    pub fn residual_ens(&self) -> Energy {
        self.residual.ens()
    }

    pub fn residual_peak_mw(&self) -> f64 {
        self.residual.peak_mw()
    }
}

/// Energy (MWh) needed to cap shedding at `threshold` under a power cap.
fn energy_to_cap(shedding: &[f64], threshold: f64, power_cap: f64, dt_h: f64) -> f64 {
    shedding
        .iter()
        .map(|&s| (s - threshold).max(0.0).min(power_cap))
        .sum::<f64>()
        * dt_h
}

/// Minimizes the residual shedding peak.
///
/// The optimal residual peak is `max(T_energy, T_power)` with `T_power = max s - P` and
/// `T_energy` the lowest threshold the energy budget can hold, found by bisection.
/// Discharge is then `clamp(s - T, 0, P)`.
pub fn dispatch_peak_shave(shedding: &SheddingSeries, spec: &StorageSpec) -> Result<DispatchResult> {
    let s = shedding.values();
    let peak = shedding.peak_mw();
    let budget = spec.deliverable_mwh();
    let p = spec.power_cap_mw();
    let dt = shedding.grid().step_hours();

    if budget <= 0.0 || peak <= 0.0 {
        return DispatchResult::assemble(shedding, vec![0.0; s.len()], Some(peak));
    }

    let power_floor = (peak - p).max(0.0);
    let threshold = if energy_to_cap(s, power_floor, p, dt) <= budget {
        power_floor
    } else {
        // invariant: energy_to_cap(lo) > budget >= energy_to_cap(hi)
        let (mut lo, mut hi) = (power_floor, peak);
        while hi - lo > BISECTION_TOLERANCE_MW {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if energy_to_cap(s, mid, p, dt) <= budget {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };

    let discharge = s.iter().map(|&v| (v - threshold).max(0.0).min(p)).collect();
    DispatchResult::assemble(shedding, discharge, Some(threshold))
}

/// Maximizes the shed energy absorbed.
///
/// Serves `min(s, P)` at the highest-shedding steps first (earlier step on ties)
/// until the budget runs out; the marginal step is served partially.
pub fn dispatch_ens_offset(shedding: &SheddingSeries, spec: &StorageSpec) -> Result<DispatchResult> {
    let s = shedding.values();
    let p = spec.power_cap_mw();
    let dt = shedding.grid().step_hours();
    let mut remaining = spec.deliverable_mwh();
    // summed in time order so a budget equal to the ENS covers every step exactly
    if energy_to_cap(s, 0.0, p, dt) <= remaining {
        let discharge = s.iter().map(|&v| v.min(p)).collect();
        return DispatchResult::assemble(shedding, discharge, None);
    }

    let mut order: Vec<usize> = (0..s.len()).filter(|&i| s[i] > 0.0).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

    let mut discharge = vec![0.0; s.len()];
    for i in order {
        if remaining <= 0.0 {
            break;
        }
        let full = s[i].min(p);
        let need = full * dt;
        if need <= remaining {
            discharge[i] = full;
            remaining -= need;
        } else {
            discharge[i] = (remaining / dt).min(full);
            remaining = 0.0;
        }
    }
    DispatchResult::assemble(shedding, discharge, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroResidualSize {
    pub energy: Energy,
    pub power_mw: f64,
}

impl ZeroResidualSize {
    pub fn spec(&self) -> StorageSpec {
        let spec = StorageSpec::new(self.energy);
        if self.power_mw > 0.0 {
            StorageSpec { power_limit_mw: Some(self.power_mw), ..spec }
        } else {
            spec
        }
    }
}

/// Smallest lossless store that leaves no residual shedding: `(ENS, peak shedding)`.
pub fn size_for_zero_residual(shedding: &SheddingSeries) -> ZeroResidualSize {
    ZeroResidualSize { energy: shedding.ens(), power_mw: shedding.peak_mw() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvFleetSegment {
    pub name: String,
    pub count: u64,
    pub per_vehicle_kwh: f64,
    #[serde(default = "full_availability")]
    pub availability: f64,
}

fn full_availability() -> f64 {
    1.0
}

impl EvFleetSegment {
    pub fn new(name: impl Into<String>, count: u64, per_vehicle_kwh: f64, availability: f64) -> Result<Self> {
        if !(per_vehicle_kwh.is_finite() && per_vehicle_kwh >= 0.0) {
            return Err(Error::InvalidParameter(format!("per-vehicle energy {per_vehicle_kwh} kWh")));
        }
        if !(0.0..=1.0).contains(&availability) {
            return Err(Error::InvalidParameter(format!("availability {availability} outside [0, 1]")));
        }
        Ok(EvFleetSegment { name: name.into(), count, per_vehicle_kwh, availability })
    }

    pub fn energy_kwh(&self) -> f64 {
        self.count as f64 * self.per_vehicle_kwh * self.availability
    }
}

/// Projected 2033 Texas EV fleet: cars, short-haul trucks and buses, long-haul trucks.
pub fn texas_2033_fleet() -> Vec<EvFleetSegment> {
    vec![
        EvFleetSegment { name: "Cars".into(), count: 3_000_000, per_vehicle_kwh: 20.0, availability: 1.0 },
        EvFleetSegment { name: "Short Haul/Buses".into(), count: 80_000, per_vehicle_kwh: 350.0, availability: 1.0 },
        EvFleetSegment { name: "Long Haul Trucks".into(), count: 200_000, per_vehicle_kwh: 600.0, availability: 1.0 },
    ]
}

/// Pools fleet batteries into one store. Power is unbounded unless `power_limit_mw` is given.
pub fn aggregate_ev_fleet(segments: &[EvFleetSegment], power_limit_mw: Option<f64>) -> Result<StorageSpec> {
    let kwh: f64 = segments.iter().map(EvFleetSegment::energy_kwh).sum();
    StorageSpec::new(Energy::from_kwh(kwh)).with_power_limit(power_limit_mw)
}

/// Reads `name, count, per_vehicle_kwh[, availability]` rows.
pub fn load_ev_fleet<R: Read>(source: R) -> Result<Vec<EvFleetSegment>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source);
    let mut out = Vec::new();
    for row in reader.deserialize::<EvFleetSegment>() {
        let row = row.map_err(|e| Error::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        out.push(EvFleetSegment::new(row.name, row.count, row.per_vehicle_kwh, row.availability)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub unit_cost_per_kwh: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { unit_cost_per_kwh: 137.0 }
    }
}

impl CostModel {
    pub fn new(unit_cost_per_kwh: f64) -> Result<Self> {
        if !(unit_cost_per_kwh.is_finite() && unit_cost_per_kwh >= 0.0) {
            return Err(Error::InvalidParameter(format!("unit cost {unit_cost_per_kwh} $/kWh")));
        }
        Ok(CostModel { unit_cost_per_kwh })
    }
}

/// Installed cost in dollars.
pub fn storage_cost(energy: Energy, model: &CostModel) -> f64 {
    energy.kwh() * model.unit_cost_per_kwh
}
