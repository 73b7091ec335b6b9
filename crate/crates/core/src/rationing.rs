//! Load rationing: residential policy mapping, rationed demand, and household enforcement.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::PowerSeries;

/// An exact fraction in `[0, 1]`.
///
/// Decimal inputs are taken at their shortest decimal reading, so `0.6` is `3/5`
/// and `1/3 x 0.6` reduces to exactly `1/5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fraction(Ratio<i64>);

impl Fraction {
    pub const ZERO: Fraction = Fraction(Ratio::new_raw(0, 1));
    pub const ONE: Fraction = Fraction(Ratio::new_raw(1, 1));

    pub fn new(numer: i64, denom: i64) -> Result<Self> {
        if denom == 0 {
            return Err(Error::InvalidParameter("fraction with zero denominator".into()));
        }
        Self::checked(Ratio::new(numer, denom))
    }

    fn checked(r: Ratio<i64>) -> Result<Self> {
        if r < Ratio::zero() || r > Ratio::from_integer(1) {
            return Err(Error::InvalidParameter(format!("fraction {r} outside [0, 1]")));
        }
        Ok(Fraction(r))
    }

    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::InvalidParameter(format!("fraction {x} is not finite")));
        }
        format!("{x}").parse()
    }

    pub fn value(self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// `1 - self`.
    pub fn complement(self) -> Fraction {
        Fraction(Ratio::from_integer(1) - self.0)
    }

    pub fn product(self, other: Fraction) -> Fraction {
        Fraction(self.0 * other.0)
    }
}

impl FromStr for Fraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidParameter(format!("`{s}` is not a fraction"));
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            return Fraction::new(n, d);
        }
        let (int_part, frac_part) = s.split_once('.').unwrap_or((s, ""));
        if frac_part.len() > 15 || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            // too many digits for an exact i64 ratio; fall back to a close rational
            let x: f64 = s.parse().map_err(|_| bad())?;
            let r = Ratio::approximate_float(x).ok_or_else(bad)?;
            return Self::checked(r);
        }
        let (negative, int_part) = match int_part.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, int_part.strip_prefix('+').unwrap_or(int_part)),
        };
        if !int_part.bytes().all(|b| b.is_ascii_digit()) || (int_part.is_empty() && frac_part.is_empty()) {
            return Err(bad());
        }
        let int: i64 = if int_part.is_empty() { 0 } else { int_part.parse().map_err(|_| bad())? };
        let denom = 10i64.pow(frac_part.len() as u32);
        let frac: i64 = if frac_part.is_empty() { 0 } else { frac_part.parse().map_err(|_| bad())? };
        let numer = int
            .checked_mul(denom)
            .and_then(|v| v.checked_add(frac))
            .ok_or_else(bad)?;
        Fraction::new(if negative { -numer } else { numer }, denom)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Fraction {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        let parsed = match Repr::deserialize(deserializer)? {
            Repr::Num(x) => Fraction::from_f64(x),
            Repr::Str(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Residential share of system demand as used by the default policy.
pub fn residential_share_default() -> Fraction {
    Fraction(Ratio::new_raw(1, 3))
}

/// Rationing applied only to the residential sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationingPolicy {
    pub residential_share: Fraction,
    pub residential_fraction: Fraction,
}

impl RationingPolicy {
    pub fn new(residential_share: Fraction, residential_fraction: Fraction) -> Self {
        RationingPolicy { residential_share, residential_fraction }
    }

    /// Residential sector at one third of system demand.
    pub fn residential(residential_fraction: Fraction) -> Self {
        Self::new(residential_share_default(), residential_fraction)
    }

    pub fn system_reduction(&self) -> f64 {
        system_reduction(self)
    }
}

/// Fraction of total system demand removed by the policy.
pub fn system_reduction(policy: &RationingPolicy) -> f64 {
    policy.residential_share.product(policy.residential_fraction).value()
}

/// Minimum fraction of normal usage a household needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivabilityThreshold {
    pub minimum_fraction: f64,
}

impl SurvivabilityThreshold {
    pub fn new(minimum_fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&minimum_fraction) {
            return Err(Error::InvalidParameter(format!(
                "survivability threshold {minimum_fraction} outside [0, 1]"
            )));
        }
        Ok(SurvivabilityThreshold { minimum_fraction })
    }
}

impl Default for SurvivabilityThreshold {
    fn default() -> Self {
        SurvivabilityThreshold { minimum_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HouseholdCap {
    pub cap_kw: f64,
    /// Set when the allowed share of normal usage falls below the survivability minimum.
    pub below_survival_minimum: bool,
}

pub fn household_cap(policy: &RationingPolicy, baseline_kw: f64, threshold: SurvivabilityThreshold) -> HouseholdCap {
    let keep = policy.residential_fraction.complement().value();
    HouseholdCap {
        cap_kw: keep * baseline_kw,
        below_survival_minimum: keep < threshold.minimum_fraction,
    }
}

/// `L'(t) = (1 - rho) L(t)` for a system-level reduction `rho`.
pub fn apply_reduction(demand: &PowerSeries, rho: f64) -> Result<PowerSeries> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("system reduction {rho} outside [0, 1]")));
    }
    if rho == 0.0 {
        return Ok(demand.clone());
    }
    demand.scaled(1.0 - rho)
}

pub fn apply_rationing(demand: &PowerSeries, policy: &RationingPolicy) -> Result<PowerSeries> {
    apply_reduction(demand, policy.system_reduction())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HouseholdState {
    Normal,
    Warned,
    CutOff,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Household {
    pub id: String,
    pub baseline_kw: f64,
    pub cap_kw: f64,
    pub state: HouseholdState,
}

impl Household {
    /// An unrationed household: cap equals baseline.
    pub fn new(id: impl Into<String>, baseline_kw: f64) -> Result<Self> {
        if !(baseline_kw.is_finite() && baseline_kw >= 0.0) {
            return Err(Error::InvalidParameter(format!("household baseline {baseline_kw} kW")));
        }
        Ok(Household { id: id.into(), baseline_kw, cap_kw: baseline_kw, state: HouseholdState::Normal })
    }

    /// One enforcement step: returns the power served.
    ///
    /// A request above the cap first earns a warning (served at cap); a second
    /// consecutive violation cuts the household off for the rest of the run.
    fn serve(&mut self, request_kw: f64) -> f64 {
        match (self.state, request_kw > self.cap_kw) {
            (HouseholdState::CutOff, _) => 0.0,
            (_, false) => {
                self.state = HouseholdState::Normal;
                request_kw
            }
            (HouseholdState::Normal, true) => {
                self.state = HouseholdState::Warned;
                self.cap_kw
            }
            (HouseholdState::Warned, true) => {
                self.state = HouseholdState::CutOff;
                0.0
            }
        }
    }
}

/// Stateful enforcement over a household population. Drive from one thread.
#[derive(Debug, Clone)]
pub struct EnforcementSim {
    households: Vec<Household>,
}

impl EnforcementSim {
    /// Sets each household's cap from the policy and resets all states to normal.
    pub fn new(mut households: Vec<Household>, policy: &RationingPolicy) -> Self {
        for h in &mut households {
            h.cap_kw = household_cap(policy, h.baseline_kw, SurvivabilityThreshold::default()).cap_kw;
            h.state = HouseholdState::Normal;
        }
        EnforcementSim { households }
    }

    pub fn households(&self) -> &[Household] {
        &self.households
    }

    /// Serves one step of requests (kW, one per household) and returns aggregate served kW.
    pub fn step(&mut self, requests_kw: &[f64]) -> Result<f64> {
        if requests_kw.len() != self.households.len() {
            return Err(Error::InvalidParameter(format!(
                "{} requests for {} households",
                requests_kw.len(),
                self.households.len()
            )));
        }
        if let Some(bad) = requests_kw.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::InvalidParameter(format!("household request {bad} kW")));
        }
        Ok(self
            .households
            .iter_mut()
            .zip(requests_kw)
            .map(|(h, &r)| h.serve(r))
            .sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnforcementOutcome {
    /// Aggregate served power per step, kW.
    pub served_kw: Vec<f64>,
    pub households: Vec<Household>,
}

/// Runs the enforcement state machine over successive steps of requests.
/// `usage_draws[step][household]` is the requested power in kW.
pub fn simulate_household_enforcement(
    population: Vec<Household>,
    policy: &RationingPolicy,
    usage_draws: &[Vec<f64>],
) -> Result<EnforcementOutcome> {
    let mut sim = EnforcementSim::new(population, policy);
    let served_kw = usage_draws
        .iter()
        .map(|requests| sim.step(requests))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnforcementOutcome { served_kw, households: sim.households })
}

#[derive(Debug, Deserialize)]
struct HouseholdRow {
    id: String,
    baseline_kw: f64,
}

/// Reads `id, baseline_kw` rows.
pub fn load_households<R: Read>(source: R) -> Result<Vec<Household>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source);
    let mut out = Vec::new();
    for row in reader.deserialize::<HouseholdRow>() {
        let row = row.map_err(|e| Error::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        out.push(Household::new(row.id, row.baseline_kw)?);
    }
    Ok(out)
}
