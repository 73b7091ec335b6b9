//! Event time series: capacity and demand profiles, shedding, and energy integration.
//!
//! Every power value is in megawatts and every energy value in megawatt-hours.
//! Series are piecewise constant: sample `i` holds over `[start + i*step, start + (i+1)*step)`.

use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SECS_PER_HOUR: f64 = 3600.0;

/// Uniform sampling grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    start: DateTime<Utc>,
    step_secs: i64,
    count: usize,
}

impl TimeGrid {
    pub fn new(start: DateTime<Utc>, step_secs: i64, count: usize) -> Result<Self> {
        if step_secs <= 0 {
            return Err(Error::InvalidGrid(format!("step must be positive, got {step_secs} s")));
        }
        if count == 0 {
            return Err(Error::InvalidGrid("grid must contain at least one sample".into()));
        }
        Ok(TimeGrid { start, step_secs, count })
    }

    pub fn hourly(start: DateTime<Utc>, count: usize) -> Result<Self> {
        Self::new(start, 3600, count)
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn step_secs(&self) -> i64 {
        self.step_secs
    }

    /// Step length in hours, the quadrature weight for every sample.
    pub fn step_hours(&self) -> f64 {
        self.step_secs as f64 / SECS_PER_HOUR
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn span_secs(&self) -> i64 {
        self.step_secs * self.count as i64
    }

    pub fn span_hours(&self) -> f64 {
        self.span_secs() as f64 / SECS_PER_HOUR
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + chrono::Duration::seconds(self.step_secs * index as i64)
    }
}

/// Nonnegative energy in megawatt-hours.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct Energy(f64);

impl Energy {
    pub const ZERO: Energy = Energy(0.0);

    /// Panics if `mwh` is negative or not finite.
    pub fn from_mwh(mwh: f64) -> Self {
        assert!(mwh.is_finite() && mwh >= 0.0, "energy must be finite and nonnegative, got {mwh}");
        Energy(mwh)
    }

    pub fn from_gwh(gwh: f64) -> Self {
        Self::from_mwh(gwh * 1e3)
    }

    pub fn from_kwh(kwh: f64) -> Self {
        Self::from_mwh(kwh / 1e3)
    }

    pub fn mwh(self) -> f64 {
        self.0
    }

    pub fn gwh(self) -> f64 {
        self.0 / 1e3
    }

    pub fn kwh(self) -> f64 {
        self.0 * 1e3
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    for (index, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if v < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sample {index} is negative ({v} MW)"
            )));
        }
    }
    Ok(())
}

fn check_len(grid: &TimeGrid, values: &[f64]) -> Result<()> {
    if values.len() != grid.count() {
        return Err(Error::InvalidGrid(format!(
            "grid has {} samples but {} values were supplied",
            grid.count(),
            values.len()
        )));
    }
    Ok(())
}

/// Rectangle-rule integral of a piecewise-constant series, in MWh.
fn integrate(grid: &TimeGrid, values: &[f64]) -> f64 {
    values.iter().sum::<f64>() * grid.step_hours()
}

fn resample_values(grid: &TimeGrid, values: &[f64], new_step_secs: i64) -> Result<(TimeGrid, Vec<f64>)> {
    let step = grid.step_secs();
    let incompatible = Error::IncompatibleStep { from_secs: step, to_secs: new_step_secs };
    if new_step_secs <= 0 {
        return Err(incompatible);
    }
    if new_step_secs == step {
        return Ok((*grid, values.to_vec()));
    }
    if new_step_secs > step {
        if new_step_secs % step != 0 {
            return Err(incompatible);
        }
        let k = (new_step_secs / step) as usize;
        if !values.len().is_multiple_of(k) {
            return Err(Error::InvalidGrid(format!(
                "{} samples cannot be grouped into blocks of {k}",
                values.len()
            )));
        }
        let averaged = values
            .chunks_exact(k)
            .map(|c| c.iter().sum::<f64>() / k as f64)
            .collect::<Vec<_>>();
        let g = TimeGrid::new(grid.start(), new_step_secs, averaged.len())?;
        Ok((g, averaged))
    } else {
        if step % new_step_secs != 0 {
            return Err(incompatible);
        }
        let k = (step / new_step_secs) as usize;
        let repeated = values
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, k))
            .collect::<Vec<_>>();
        let g = TimeGrid::new(grid.start(), new_step_secs, repeated.len())?;
        Ok((g, repeated))
    }
}

/// Nonnegative power samples (MW) on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl PowerSeries {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, &values)?;
        check_values(&values)?;
        Ok(PowerSeries { grid, values })
    }

    pub fn constant(grid: TimeGrid, level_mw: f64) -> Result<Self> {
        Self::new(grid, vec![level_mw; grid.count()])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn integral(&self) -> Energy {
        Energy::from_mwh(integrate(&self.grid, &self.values))
    }

    /// Multiplies every sample by `factor` (which must be nonnegative).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(Error::InvalidParameter(format!("scale factor {factor}")));
        }
        Ok(PowerSeries {
            grid: self.grid,
            values: self.values.iter().map(|v| v * factor).collect(),
        })
    }
}

/// Available generation capacity paired with predicted demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventProfile {
    capacity: PowerSeries,
    demand: PowerSeries,
}

impl EventProfile {
    pub fn new(capacity: PowerSeries, demand: PowerSeries) -> Result<Self> {
        if capacity.grid() != demand.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(EventProfile { capacity, demand })
    }

    pub fn grid(&self) -> &TimeGrid {
        self.capacity.grid()
    }

    pub fn capacity(&self) -> &PowerSeries {
        &self.capacity
    }

    pub fn demand(&self) -> &PowerSeries {
        &self.demand
    }
}

/// Unserved power (MW) per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheddingSeries {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl SheddingSeries {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, &values)?;
        check_values(&values)?;
        Ok(SheddingSeries { grid, values })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        SheddingSeries { grid, values: vec![0.0; grid.count()] }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn peak_mw(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn ens(&self) -> Energy {
        compute_ens(self)
    }

    pub fn resample(&self, new_step_secs: i64) -> Result<Self> {
        let (grid, values) = resample_values(&self.grid, &self.values, new_step_secs)?;
        Ok(SheddingSeries { grid, values })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerUnit {
    Megawatts,
    Gigawatts,
}

impl PowerUnit {
    fn to_mw(self, v: f64) -> f64 {
        match self {
            PowerUnit::Megawatts => v,
            PowerUnit::Gigawatts => v * 1e3,
        }
    }
}

/// Column mapping for [`load_profile`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileSchema {
    pub timestamp: String,
    pub capacity: String,
    pub demand: String,
    pub unit: PowerUnit,
}

impl ProfileSchema {
    pub fn megawatts() -> Self {
        ProfileSchema {
            timestamp: "timestamp".into(),
            capacity: "capacity_mw".into(),
            demand: "demand_mw".into(),
            unit: PowerUnit::Megawatts,
        }
    }

    pub fn gigawatts() -> Self {
        ProfileSchema {
            timestamp: "timestamp".into(),
            capacity: "capacity_gw".into(),
            demand: "demand_gw".into(),
            unit: PowerUnit::Gigawatts,
        }
    }
}

impl Default for ProfileSchema {
    fn default() -> Self {
        Self::megawatts()
    }
}

/// Accepts RFC 3339 timestamps, or naive `YYYY-MM-DD[T ]HH:MM[:SS]` taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|n| n.and_utc())
}

/// Reads a profile CSV. Lines starting with `#` are comments.
pub fn load_profile<R: Read>(source: R, schema: &ProfileSchema) -> Result<EventProfile> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);

    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedRow { line: 1, message: e.to_string() })?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let ts_col = column(&schema.timestamp)?;
    let cap_col = column(&schema.capacity)?;
    let dem_col = column(&schema.demand)?;

    let mut times: Vec<DateTime<Utc>> = Vec::new();
    let mut capacity = Vec::new();
    let mut demand = Vec::new();
    let mut step: Option<i64> = None;

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::MalformedRow { line, message: e.to_string() }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(Error::LengthMismatch { line, expected: headers.len(), found: record.len() });
        }
        let ts_raw = &record[ts_col];
        let ts = parse_timestamp(ts_raw).ok_or_else(|| Error::MalformedRow {
            line,
            message: format!("unparseable timestamp `{ts_raw}`"),
        })?;
        if let Some(&prev) = times.last() {
            let delta = (ts - prev).num_seconds();
            let uniform = match step {
                None => delta > 0,
                Some(s) => delta == s,
            };
            if !uniform {
                return Err(Error::NonUniformTimestamps { line });
            }
            step = Some(delta);
        }
        times.push(ts);

        let number = |col: usize| -> Result<f64> {
            let raw = &record[col];
            let v: f64 = raw.parse().map_err(|_| Error::MalformedRow {
                line,
                message: format!("`{}` is not a number in column `{}`", raw, &headers[col]),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedRow {
                    line,
                    message: format!("non-finite value in column `{}`", &headers[col]),
                });
            }
            if v < 0.0 {
                return Err(Error::NegativeValue { line, column: headers[col].to_string(), value: v });
            }
            Ok(schema.unit.to_mw(v))
        };
        capacity.push(number(cap_col)?);
        demand.push(number(dem_col)?);
    }

    if times.len() < 2 {
        return Err(Error::InvalidGrid(format!(
            "profile needs at least 2 samples, found {}",
            times.len()
        )));
    }
    let grid = TimeGrid::new(times[0], step.unwrap_or(0), times.len())?;
    EventProfile::new(PowerSeries::new(grid, capacity)?, PowerSeries::new(grid, demand)?)
}

/// Writes a profile in the MW CSV schema. Each `header_lines` entry becomes a `# ` comment.
pub fn write_profile<W: Write>(profile: &EventProfile, mut out: W, header_lines: &[String]) -> Result<()> {
    for line in header_lines {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "timestamp,capacity_mw,demand_mw")?;
    let grid = profile.grid();
    for i in 0..grid.count() {
        writeln!(
            out,
            "{},{},{}",
            grid.timestamp(i).format("%Y-%m-%dT%H:%M:%SZ"),
            crate::format::sig6(profile.capacity().values()[i]),
            crate::format::sig6(profile.demand().values()[i]),
        )?;
    }
    Ok(())
}

/// Energy-preserving resampling. Coarser steps average blocks; finer steps repeat samples.
pub fn resample(series: &PowerSeries, new_step_secs: i64) -> Result<PowerSeries> {
    let (grid, values) = resample_values(series.grid(), series.values(), new_step_secs)?;
    Ok(PowerSeries { grid, values })
}

/// Shedding against a post-shed (served) demand: `max(0, served - capacity)`.
///
/// `served` must lie on the profile grid and never exceed predicted demand.
pub fn compute_shedding(profile: &EventProfile, served: &PowerSeries) -> Result<SheddingSeries> {
    if served.grid() != profile.grid() {
        return Err(Error::GridMismatch);
    }
    let demand = profile.demand().values();
    if let Some(index) = served.values().iter().zip(demand).position(|(s, d)| s > d) {
        return Err(Error::ServedExceedsDemand { index });
    }
    let values = served
        .values()
        .iter()
        .zip(profile.capacity().values())
        .map(|(&l, &g)| (l - g).max(0.0))
        .collect();
    Ok(SheddingSeries { grid: *profile.grid(), values })
}

/// Shedding with served demand equal to predicted demand.
pub fn adequacy_shedding(profile: &EventProfile) -> SheddingSeries {
    let values = profile
        .demand()
        .values()
        .iter()
        .zip(profile.capacity().values())
        .map(|(&l, &g)| (l - g).max(0.0))
        .collect();
    SheddingSeries { grid: *profile.grid(), values }
}

pub fn compute_ens(shedding: &SheddingSeries) -> Energy {
    Energy::from_mwh(integrate(&shedding.grid, &shedding.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2021, 2, 15, 6, 0, 0).unwrap()
    }

    fn series(values: &[f64]) -> PowerSeries {
        PowerSeries::new(TimeGrid::hourly(t0(), values.len()).unwrap(), values.to_vec()).unwrap()
    }

    fn hourly_csv(rows: usize, negative_at: Option<usize>) -> String {
        let mut s = String::from("timestamp,capacity_mw,demand_mw\n");
        for i in 0..rows {
            let demand = if negative_at == Some(i) { -5.0 } else { 50_000.0 + i as f64 };
            s.push_str(&format!(
                "{},{},{}\n",
                (t0() + chrono::Duration::hours(i as i64)).to_rfc3339(),
                45_000.0,
                demand
            ));
        }
        s
    }

    #[test]
    fn loads_hourly_csv() {
        let p = load_profile(hourly_csv(96, None).as_bytes(), &ProfileSchema::megawatts()).unwrap();
        assert_eq!(p.grid().count(), 96);
        assert_eq!(p.grid().step_secs(), 3600);
        assert_eq!(p.grid().start(), t0());
        assert_eq!(p.demand().values()[3], 50_003.0);
    }

    #[test]
    fn negative_demand_names_row() {
        let err = load_profile(hourly_csv(10, Some(4)).as_bytes(), &ProfileSchema::megawatts())
            .unwrap_err();
        match err {
            // header is line 1, sample 4 is line 6
            Error::NegativeValue { line, column, .. } => {
                assert_eq!(line, 6);
                assert_eq!(column, "demand_mw");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gigawatt_schema_converts() {
        let csv = "timestamp,capacity_gw,demand_gw\n2021-02-15T00:00:00Z,45,60\n2021-02-15T01:00:00Z,44.5,61\n";
        let p = load_profile(csv.as_bytes(), &ProfileSchema::gigawatts()).unwrap();
        assert_eq!(p.capacity().values(), &[45_000.0, 44_500.0]);
        assert_eq!(p.demand().values(), &[60_000.0, 61_000.0]);
    }

    #[test]
    fn rejects_non_uniform_timestamps() {
        let csv = "timestamp,capacity_mw,demand_mw\n\
                   2021-02-15T00:00:00Z,1,1\n2021-02-15T01:00:00Z,1,1\n2021-02-15T03:00:00Z,1,1\n";
        assert!(matches!(
            load_profile(csv.as_bytes(), &ProfileSchema::default()),
            Err(Error::NonUniformTimestamps { line: 4 })
        ));
        let backwards = "timestamp,capacity_mw,demand_mw\n2021-02-15T01:00:00Z,1,1\n2021-02-15T00:00:00Z,1,1\n";
        assert!(matches!(
            load_profile(backwards.as_bytes(), &ProfileSchema::default()),
            Err(Error::NonUniformTimestamps { line: 3 })
        ));
    }

    #[test]
    fn rejects_short_rows_and_garbage() {
        let short = "timestamp,capacity_mw,demand_mw\n2021-02-15T00:00:00Z,1,1\n2021-02-15T01:00:00Z,1\n";
        assert!(matches!(
            load_profile(short.as_bytes(), &ProfileSchema::default()),
            Err(Error::LengthMismatch { line: 3, expected: 3, found: 2 })
        ));
        let garbage = "timestamp,capacity_mw,demand_mw\n2021-02-15T00:00:00Z,1,1\n2021-02-15T01:00:00Z,x,1\n";
        assert!(matches!(
            load_profile(garbage.as_bytes(), &ProfileSchema::default()),
            Err(Error::MalformedRow { line: 3, .. })
        ));
        let missing = "timestamp,cap,demand_mw\n";
        assert!(matches!(
            load_profile(missing.as_bytes(), &ProfileSchema::default()),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn write_then_load_round_trips() {
        let p = load_profile(hourly_csv(5, None).as_bytes(), &ProfileSchema::default()).unwrap();
        let mut buf = Vec::new();
        write_profile(&p, &mut buf, &["synthetic".to_string()]).unwrap();
        let back = load_profile(buf.as_slice(), &ProfileSchema::default()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn resample_constant_to_quarter_hour() {
        let s = series(&[10.0; 4]);
        let r = resample(&s, 900).unwrap();
        assert_eq!(r.grid().count(), 16);
        assert!(r.values().iter().all(|&v| v == 10.0));
        assert_eq!(r.integral(), s.integral());
    }

    #[test]
    fn resample_averages_pairs() {
        let s = series(&[10.0, 30.0]);
        let r = resample(&s, 7200).unwrap();
        assert_eq!(r.values(), &[20.0]);
        assert_eq!(r.integral().mwh(), 40.0);
        assert_eq!(s.integral().mwh(), 40.0);
    }

    #[test]
    fn resample_rejects_uneven_ratio() {
        let s = series(&[1.0, 2.0, 3.0]);
        assert!(matches!(resample(&s, 5400), Err(Error::IncompatibleStep { .. })));
        assert!(matches!(resample(&s, 2400), Err(Error::IncompatibleStep { .. })));
        assert!(matches!(resample(&s, 7200), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn shedding_is_positive_gap() {
        let p = EventProfile::new(series(&[20_000.0, 15_000.0]), series(&[10_000.0, 30_000.0])).unwrap();
        assert_eq!(adequacy_shedding(&p).values(), &[0.0, 15_000.0]);
        let served = series(&[10_000.0, 20_000.0]);
        assert_eq!(compute_shedding(&p, &served).unwrap().values(), &[0.0, 5_000.0]);
    }

    #[test]
    fn adequate_system_sheds_nothing() {
        let p = EventProfile::new(series(&[5.0, 6.0, 7.0]), series(&[5.0, 1.0, 0.0])).unwrap();
        assert!(adequacy_shedding(&p).values().iter().all(|&v| v == 0.0));
        assert_eq!(adequacy_shedding(&p).ens(), Energy::ZERO);
    }

    #[test]
    fn served_above_demand_is_rejected() {
        let p = EventProfile::new(series(&[1.0, 1.0]), series(&[2.0, 2.0])).unwrap();
        assert!(matches!(
            compute_shedding(&p, &series(&[2.0, 2.5])),
            Err(Error::ServedExceedsDemand { index: 1 })
        ));
        let other_grid = PowerSeries::new(TimeGrid::new(t0(), 1800, 2).unwrap(), vec![1.0, 1.0]).unwrap();
        assert!(matches!(compute_shedding(&p, &other_grid), Err(Error::GridMismatch)));
    }

    #[test]
    fn ens_rectangle() {
        let g = TimeGrid::hourly(t0(), 2).unwrap();
        assert_eq!(compute_ens(&SheddingSeries::zeros(g)).mwh(), 0.0);
        let s = SheddingSeries::new(g, vec![15_000.0, 15_000.0]).unwrap();
        assert_eq!(compute_ens(&s).mwh(), 30_000.0);
        let quarter = SheddingSeries::new(TimeGrid::new(t0(), 900, 4).unwrap(), vec![4.0; 4]).unwrap();
        assert_eq!(compute_ens(&quarter).mwh(), 4.0);
    }

    #[test]
    fn profile_grids_must_match() {
        let a = series(&[1.0, 2.0]);
        let b = series(&[1.0, 2.0, 3.0]);
        assert!(matches!(EventProfile::new(a, b), Err(Error::GridMismatch)));
    }

    #[test]
    fn power_series_rejects_bad_samples() {
        let g = TimeGrid::hourly(t0(), 2).unwrap();
        assert!(PowerSeries::new(g, vec![1.0, f64::NAN]).is_err());
        assert!(PowerSeries::new(g, vec![1.0, -1.0]).is_err());
        assert!(PowerSeries::new(g, vec![1.0]).is_err());
        assert!(TimeGrid::new(t0(), 0, 2).is_err());
    }
}
