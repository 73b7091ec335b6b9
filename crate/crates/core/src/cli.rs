//! Command-line frontend.
//!
//! Display units are GW and GWh; files are written in MW and MWh with unit-suffixed
//! columns. Exit codes: 0 success, 1 validation or I/O error, 2 usage error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use crate::calibrate::{self, CalibrationTargets, ProfileTemplate};
use crate::format::{billions, round_sig6, sig6};
use crate::profiles::{load_profile, write_profile, Energy, EventProfile, ProfileSchema, SheddingSeries};
use crate::rationing::{
    self, household_cap, load_households, EnforcementSim, Fraction, RationingPolicy, SurvivabilityThreshold,
};
use crate::storage::{
    aggregate_ev_fleet, dispatch_ens_offset, dispatch_peak_shave, load_ev_fleet, size_for_zero_residual,
    storage_cost, texas_2033_fleet, CostModel, DispatchResult, EvFleetSegment, StorageSpec,
};
use crate::sweep::{
    linspace_step, rationed_shedding, shedding_trajectories, sweep_ens_vs_rationing_with,
    sweep_peak_shave_vs_storage_with, write_trajectories_csv, Objective, SweepOptions,
};

/// Environment variable naming the directory that holds the default fixture.
pub const FIXTURE_DIR_ENV: &str = "SHEDSIM_FIXTURE_DIR";
pub const FIXTURE_CSV: &str = "feb2021_event.csv";
pub const FIXTURE_JSON: &str = "feb2021_event.json";

#[derive(Debug, Parser)]
#[command(name = "shedsim", version, about = "Load shedding, rationing and storage dispatch for capacity-shortfall events")]
struct Cli {
    /// Flat TOML scenario config; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Energy-Not-Served and peak shedding of a profile.
    Ens(EnsArgs),
    /// Rationing policy mapping, household caps and rationed demand.
    Ration(RationArgs),
    /// Storage dispatch against the (rationed) shedding.
    Dispatch(DispatchArgs),
    /// Storage needed for zero residual shedding.
    Size(EnsArgs),
    /// Pool an EV fleet into one store.
    Evfleet(EvfleetArgs),
    /// Installed storage cost.
    Cost(CostArgs),
    /// Scenario grid sweeps.
    Sweep(SweepArgs),
    /// Fit the synthetic event fixture.
    Calibrate(CalibrateArgs),
    /// Check a profile against the calibration targets.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ObjectiveArg {
    PeakShave,
    EnsOffset,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::PeakShave => Objective::PeakShave,
            ObjectiveArg::EnsOffset => Objective::EnsOffset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SweepKindArg {
    /// ENS against rho, one curve per storage size.
    Ens,
    /// Peak shave against storage size, one curve per rho.
    Shave,
    /// Shedding series per rho.
    Trajectories,
}

#[derive(Debug, Args, Default)]
struct ProfileArgs {
    /// Profile CSV; defaults to the bundled fixture.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Read `capacity_gw`/`demand_gw` columns instead of MW.
    #[arg(long)]
    gw: bool,
}

#[derive(Debug, Args, Default)]
struct RationingArgs {
    /// System-level demand reduction fraction.
    #[arg(long)]
    rho: Option<f64>,
    /// Residential share of demand, e.g. `1/3`.
    #[arg(long)]
    residential_share: Option<String>,
    /// Fraction of residential demand rationed, e.g. `0.6`.
    #[arg(long)]
    residential_fraction: Option<String>,
}

#[derive(Debug, Args, Default)]
struct StorageArgs {
    #[arg(long)]
    energy_gwh: Option<f64>,
    /// Discharge limit in GW, or `unbounded`.
    #[arg(long)]
    power_limit_gw: Option<String>,
    #[arg(long)]
    efficiency: Option<f64>,
    #[arg(long)]
    initial_charge: Option<f64>,
}

#[derive(Debug, Args, Default)]
struct OutputArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Args)]
struct EnsArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[command(flatten)]
    rationing: RationingArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long)]
    unit_cost: Option<f64>,
}

#[derive(Debug, Args)]
struct RationArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[command(flatten)]
    rationing: RationingArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Normal household usage in kW for the cap calculation.
    #[arg(long)]
    baseline_kw: Option<f64>,
    /// Household CSV (`id, baseline_kw`).
    #[arg(long)]
    households: Option<PathBuf>,
    #[arg(long)]
    survival_minimum: Option<f64>,
}

#[derive(Debug, Args)]
struct DispatchArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[command(flatten)]
    rationing: RationingArgs,
    #[command(flatten)]
    storage: StorageArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
}

#[derive(Debug, Args)]
struct EvfleetArgs {
    /// Fleet CSV (`name, count, per_vehicle_kwh, availability`); defaults to the 2033 Texas projection.
    #[arg(long)]
    fleet: Option<PathBuf>,
    /// Override availability on every segment.
    #[arg(long)]
    availability: Option<f64>,
    #[arg(long)]
    power_limit_gw: Option<String>,
    #[arg(long)]
    unit_cost: Option<f64>,
}

#[derive(Debug, Args)]
struct CostArgs {
    #[arg(long)]
    energy_gwh: Option<f64>,
    /// Dollars per kWh.
    #[arg(long)]
    unit_cost: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long, value_enum)]
    kind: Option<SweepKindArg>,
    /// Comma-separated rho values; overrides the min/max/step range.
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
    #[arg(long)]
    rho_min: Option<f64>,
    #[arg(long)]
    rho_max: Option<f64>,
    #[arg(long)]
    rho_step: Option<f64>,
    /// Comma-separated storage energies in GWh.
    #[arg(long, value_delimiter = ',')]
    energy_gwh: Option<Vec<f64>>,
    #[arg(long)]
    power_limit_gw: Option<String>,
    #[arg(long)]
    unit_cost: Option<f64>,
    /// Evaluate cells on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Directory receiving the fixture CSV and JSON sidecar.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    profile: ProfileArgs,
}

/// Flat scenario config. Every key mirrors a flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Config {
    profile: Option<PathBuf>,
    gw: Option<bool>,
    rho: Option<f64>,
    residential_share: Option<Fraction>,
    residential_fraction: Option<Fraction>,
    energy_gwh: Option<f64>,
    power_limit_gw: Option<toml::Value>,
    efficiency: Option<f64>,
    initial_charge: Option<f64>,
    objective: Option<ObjectiveArg>,
    unit_cost: Option<f64>,
    kind: Option<SweepKindArg>,
    rho_values: Option<Vec<f64>>,
    rho_min: Option<f64>,
    rho_max: Option<f64>,
    rho_step: Option<f64>,
    energy_values_gwh: Option<Vec<f64>>,
    out: Option<PathBuf>,
    format: Option<Format>,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
}

/// Marks an error as a usage problem (exit code 2).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("usage error");
            let _ = writeln!(stderr, "{first} (see --help)");
            return 2;
        }
    };
    match execute(cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let code = if e.downcast_ref::<UsageError>().is_some() { 2 } else { 1 };
            let _ = writeln!(stderr, "error: {}", format!("{e:#}").replace('\n', " "));
            code
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> anyhow::Result<i32> {
    let config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read config `{}`", path.display()))?;
            toml::from_str::<Config>(&text).map_err(|e| usage(format!("config `{}`: {}", path.display(), e.message())))?
        }
        None => Config::default(),
    };
    match cli.command {
        Command::Ens(a) => cmd_ens(&a, &config, out),
        Command::Ration(a) => cmd_ration(&a, &config, out),
        Command::Dispatch(a) => cmd_dispatch(&a, &config, out),
        Command::Size(a) => cmd_size(&a, &config, out),
        Command::Evfleet(a) => cmd_evfleet(&a, &config, out),
        Command::Cost(a) => cmd_cost(&a, &config, out),
        Command::Sweep(a) => cmd_sweep(&a, &config, out),
        Command::Calibrate(a) => cmd_calibrate(&a, &config, out),
        Command::Validate(a) => cmd_validate(&a, &config, out),
    }
}

fn resolve_profile(args: &ProfileArgs, config: &Config) -> anyhow::Result<EventProfile> {
    let schema = if args.gw || config.gw.unwrap_or(false) { ProfileSchema::gigawatts() } else { ProfileSchema::megawatts() };
    let path = args.profile.clone().or_else(|| config.profile.clone()).or_else(|| {
        std::env::var_os(FIXTURE_DIR_ENV).map(|dir| Path::new(&dir).join(FIXTURE_CSV))
    });
    match path {
        Some(path) => {
            let file = File::open(&path).with_context(|| format!("cannot read profile `{}`", path.display()))?;
            load_profile(std::io::BufReader::new(file), &schema)
                .with_context(|| format!("invalid profile `{}`", path.display()))
        }
        None => Ok(crate::bundled_fixture()),
    }
}

struct ResolvedRationing {
    rho: f64,
    policy: Option<RationingPolicy>,
}

fn parse_fraction(s: &str, what: &str) -> anyhow::Result<Fraction> {
    s.parse::<Fraction>().map_err(|e| usage(format!("--{what}: {e}")))
}

fn resolve_rationing(args: &RationingArgs, config: &Config, default_policy: bool) -> anyhow::Result<ResolvedRationing> {
    let share = match &args.residential_share {
        Some(s) => Some(parse_fraction(s, "residential-share")?),
        None => config.residential_share,
    };
    let fraction = match &args.residential_fraction {
        Some(s) => Some(parse_fraction(s, "residential-fraction")?),
        None => config.residential_fraction,
    };
    let rho = args.rho.or(config.rho);
    let has_policy = share.is_some() || fraction.is_some();
    if rho.is_some() && has_policy {
        return Err(usage("give either --rho or a residential policy, not both"));
    }
    if let Some(rho) = rho {
        if !(0.0..=1.0).contains(&rho) {
            return Err(usage(format!("--rho {rho} outside [0, 1]")));
        }
        return Ok(ResolvedRationing { rho, policy: None });
    }
    if has_policy || default_policy {
        let policy = RationingPolicy::new(
            share.unwrap_or_else(rationing::residential_share_default),
            fraction.unwrap_or(Fraction::ZERO),
        );
        return Ok(ResolvedRationing { rho: policy.system_reduction(), policy: Some(policy) });
    }
    Ok(ResolvedRationing { rho: 0.0, policy: None })
}

fn parse_power_limit_gw(raw: Option<&str>) -> anyhow::Result<Option<f64>> {
    match raw.map(str::trim) {
        None => Ok(None),
        Some(s) if s.eq_ignore_ascii_case("unbounded") => Ok(None),
        Some(s) => {
            let gw: f64 = s.parse().map_err(|_| usage(format!("power limit `{s}` is neither a number nor `unbounded`")))?;
            Ok(Some(gw * 1e3))
        }
    }
}

fn config_power_limit(config: &Config) -> anyhow::Result<Option<String>> {
    Ok(match &config.power_limit_gw {
        None => None,
        Some(toml::Value::String(s)) => Some(s.clone()),
        Some(toml::Value::Float(f)) => Some(f.to_string()),
        Some(toml::Value::Integer(i)) => Some(i.to_string()),
        Some(other) => return Err(usage(format!("power_limit_gw: unsupported value {other}"))),
    })
}

fn resolve_storage(args: &StorageArgs, config: &Config) -> anyhow::Result<StorageSpec> {
    let energy_gwh = args.energy_gwh.or(config.energy_gwh).unwrap_or(0.0);
    if !(energy_gwh.is_finite() && energy_gwh >= 0.0) {
        return Err(usage(format!("--energy-gwh {energy_gwh} must be nonnegative")));
    }
    let limit_raw = args.power_limit_gw.clone().or(config_power_limit(config)?);
    let spec = StorageSpec::new(Energy::from_gwh(energy_gwh))
        .with_power_limit(parse_power_limit_gw(limit_raw.as_deref())?)?
        .with_efficiency(args.efficiency.or(config.efficiency).unwrap_or(1.0))?
        .with_initial_charge(args.initial_charge.or(config.initial_charge).unwrap_or(1.0))?;
    Ok(spec)
}

fn cost_model(flag: Option<f64>, config: &Config) -> anyhow::Result<CostModel> {
    match flag.or(config.unit_cost) {
        Some(c) => Ok(CostModel::new(c)?),
        None => Ok(CostModel::default()),
    }
}

fn output_target(args: &OutputArgs, config: &Config) -> Option<(PathBuf, Format)> {
    let path = args.out.clone().or_else(|| config.out.clone())?;
    let format = args.format.or(config.format).unwrap_or_else(|| {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Csv,
        }
    });
    Some((path, format))
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> crate::Result<()>) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create `{}`", parent.display()))?;
    }
    let file = File::create(path).with_context(|| format!("cannot write `{}`", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json_file(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn timestamp(s: &SheddingSeries, i: usize) -> String {
    s.grid().timestamp(i).format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn write_shedding(path: &Path, format: Format, shedding: &SheddingSeries, rho: f64) -> anyhow::Result<()> {
    match format {
        Format::Csv => write_file(path, |w| {
            writeln!(w, "timestamp,shedding_mw")?;
            for (i, &v) in shedding.values().iter().enumerate() {
                writeln!(w, "{},{}", timestamp(shedding, i), sig6(v))?;
            }
            Ok(())
        }),
        Format::Json => write_json_file(
            path,
            &json!({
                "rho": round_sig6(rho),
                "start": timestamp(shedding, 0),
                "step_secs": shedding.grid().step_secs(),
                "ens_mwh": round_sig6(shedding.ens().mwh()),
                "peak_shedding_mw": round_sig6(shedding.peak_mw()),
                "shedding_mw": shedding.values().iter().map(|&v| round_sig6(v)).collect::<Vec<_>>(),
            }),
        ),
    }
}

fn cmd_ens(a: &EnsArgs, config: &Config, out: &mut dyn Write) -> anyhow::Result<i32> {
    let profile = resolve_profile(&a.profile, config)?;
    let r = resolve_rationing(&a.rationing, config, false)?;
    let shedding = rationed_shedding(&profile, r.rho)?;
    let hours = shedding.values().iter().filter(|&&v| v > 0.0).count() as f64 * shedding.grid().step_hours();
    writeln!(out, "rho = {}", sig6(r.rho))?;
    writeln!(out, "ENS = {:.1} GWh", shedding.ens().gwh())?;
    writeln!(out, "Peak shedding = {:.1} GW", shedding.peak_mw() / 1e3)?;
    writeln!(out, "Shedding duration = {} h", sig6(hours))?;
    if let Some((path, format)) = output_target(&a.output, config) {
        write_shedding(&path, format, &shedding, r.rho)?;
    }
    Ok(0)
}

fn cmd_ration(a: &RationArgs, config: &Config, out: &mut dyn Write) -> anyhow::Result<i32> {
    let r = resolve_rationing(&a.rationing, config, true)?;
    let threshold = SurvivabilityThreshold::new(a.survival_minimum.unwrap_or(0.5))?;
    writeln!(out, "System reduction = {:.1} %", r.rho * 100.0)?;
    if let Some(policy) = &r.policy {
        writeln!(
            out,
            "Residential share = {}, residential rationing = {:.1} %",
            policy.residential_share,
            policy.residential_fraction.value() * 100.0
        )?;
        let keep = policy.residential_fraction.complement().value();
        writeln!(out, "Household cap = {:.1} % of normal usage", keep * 100.0)?;
        if let Some(b) = a.baseline_kw {
            if !(b.is_finite() && b >= 0.0) {
                return Err(usage(format!("--baseline-kw {b} must be nonnegative")));
            }
            writeln!(out, "Cap for {} kW baseline = {} kW", sig6(b), sig6(household_cap(policy, b, threshold).cap_kw))?;
        }
        if household_cap(policy, 1.0, threshold).below_survival_minimum {
            writeln!(
                out,
                "warning: cap is below the {:.0} % survivability minimum",
                threshold.minimum_fraction * 100.0
            )?;
        }
        if let Some(path) = &a.households {
            let file = File::open(path).with_context(|| format!("cannot read households `{}`", path.display()))?;
            let pop = load_households(std::io::BufReader::new(file))
                .with_context(|| format!("invalid households `{}`", path.display()))?;
            let baseline: Vec<f64> = pop.iter().map(|h| h.baseline_kw).collect();
            let total: f64 = baseline.iter().sum();
            let mut sim = EnforcementSim::new(pop, policy);
            let served = sim.step(&baseline)?;
            writeln!(
                out,
                "Households = {}, normal usage = {} kW, served at cap = {} kW",
                baseline.len(),
                sig6(total),
                sig6(served)
            )?;
        }
    } else if a.households.is_some() || a.baseline_kw.is_some() {
        return Err(usage("household caps need a residential policy, not --rho"));
    }

    let profile = resolve_profile(&a.profile, config)?;
    let before = rationed_shedding(&profile, 0.0)?;
    let after = rationed_shedding(&profile, r.rho)?;
    writeln!(out, "ENS = {:.1} GWh -> {:.1} GWh", before.ens().gwh(), after.ens().gwh())?;
    writeln!(out, "Peak shedding = {:.1} GW -> {:.1} GW", before.peak_mw() / 1e3, after.peak_mw() / 1e3)?;
    if let Some((path, format)) = output_target(&a.output, config) {
        let demand = rationing::apply_reduction(profile.demand(), r.rho)?;
        let rationed = EventProfile::new(profile.capacity().clone(), demand)?;
        match format {
            Format::Csv => write_file(&path, |w| write_profile(&rationed, w, &[]))?,
            Format::Json => write_json_file(
                &path,
                &json!({
                    "rho": round_sig6(r.rho),
                    "start": timestamp(&after, 0),
                    "step_secs": after.grid().step_secs(),
                    "capacity_mw": rationed.capacity().values().iter().map(|&v| round_sig6(v)).collect::<Vec<_>>(),
                    "demand_mw": rationed.demand().values().iter().map(|&v| round_sig6(v)).collect::<Vec<_>>(),
                }),
            )?,
        }
    }
    Ok(0)
}

fn write_dispatch(path: &Path, format: Format, shedding: &SheddingSeries, d: &DispatchResult) -> anyhow::Result<()> {
    match format {
        Format::Csv => write_file(path, |w| {
            writeln!(w, "timestamp,shedding_mw,discharge_mw,residual_mw")?;
            for i in 0..shedding.values().len() {
                writeln!(
                    w,
                    "{},{},{},{}",
                    timestamp(shedding, i),
                    sig6(shedding.values()[i]),
                    sig6(d.discharge.values()[i]),
                    sig6(d.residual.values()[i])
                )?;
            }
            Ok(())
        }),
        Format::Json => write_json_file(
            path,
            &json!({
                "start": timestamp(shedding, 0),
                "step_secs": shedding.grid().step_secs(),
                "threshold_mw": d.threshold_mw.map(round_sig6),
                "energy_used_mwh": round_sig6(d.energy_used.mwh()),
                "peak_shave_mw": round_sig6(d.peak_shave_mw),
                "residual_ens_mwh": round_sig6(d.residual_ens().mwh()),
                "shedding_mw": shedding.values().iter().map(|&v| round_sig6(v)).collect::<Vec<_>>(),
                "discharge_mw": d.discharge.values().iter().map(|&v| round_sig6(v)).collect::<Vec<_>>(),
                "residual_mw": d.residual.values().iter().map(|&v| round_sig6(v)).collect::<Vec<_>>(),
            }),
        ),
    }
}

fn cmd_dispatch(a: &DispatchArgs, config: &Config, out: &mut dyn Write) -> anyhow::Result<i32> {
    let profile = resolve_profile(&a.profile, config)?;
    let r = resolve_rationing(&a.rationing, config, false)?;
    let spec = resolve_storage(&a.storage, config)?;
    let objective: Objective = a.objective.or(config.objective).unwrap_or(ObjectiveArg::PeakShave).into();
    let shedding = rationed_shedding(&profile, r.rho)?;
    let d = match objective {
        Objective::PeakShave => dispatch_peak_shave(&shedding, &spec)?,
        Objective::EnsOffset => dispatch_ens_offset(&shedding, &spec)?,
    };
    writeln!(out, "objective = {}", objective.as_str())?;
    writeln!(out, "rho = {}", sig6(r.rho))?;
    writeln!(
        out,
        "Storage = {:.1} GWh, power {}",
        spec.energy_capacity.gwh(),
        spec.power_limit_mw.map(|p| format!("{:.1} GW", p / 1e3)).unwrap_or_else(|| "unbounded".into())
    )?;
    writeln!(out, "Peak shedding = {:.1} GW -> {:.1} GW", shedding.peak_mw() / 1e3, d.residual_peak_mw() / 1e3)?;
    writeln!(out, "Peak shave = {:.2} GW", d.peak_shave_mw / 1e3)?;
    writeln!(out, "ENS = {:.1} GWh -> {:.1} GWh", shedding.ens().gwh(), d.residual_ens().gwh())?;
    writeln!(out, "Energy used = {:.1} GWh", d.energy_used.gwh())?;
    if let Some((path, format)) = output_target(&a.output, config) {
        write_dispatch(&path, format, &shedding, &d)?;
    }
    Ok(0)
}

fn cmd_size(a: &EnsArgs, config: &Config, out: &mut dyn Write) -> anyhow::Result<i32> {
    let profile = resolve_profile(&a.profile, config)?;
    let r = resolve_rationing(&a.rationing, config, false)?;
    let model = cost_model(a.unit_cost, config)?;
    let shedding = rationed_shedding(&profile, r.rho)?;
    let size = size_for_zero_residual(&shedding);
    let cost = storage_cost(size.energy, &model);
    writeln!(out, "rho = {}", sig6(r.rho))?;
    writeln!(out, "Zero-residual storage = {:.1} GWh, {:.1} GW", size.energy.gwh(), size.power_mw / 1e3)?;
    writeln!(out, "Storage cost = {}", billions(cost))?;
    if let Some((path, format)) = output_target(&a.output, config) {
        match format {
            Format::Csv => write_file(&path, |w| {
                writeln!(w, "rho,energy_mwh,power_mw,cost_usd")?;
                writeln!(w, "{},{},{},{}", sig6(r.rho), sig6(size.energy.mwh()), sig6(size.power_mw), sig6(cost))?;
                Ok(())
            })?,
            Format::Json => write_json_file(
                &path,
                &json!({
                    "rho": round_sig6(r.rho),
                    "energy_mwh": round_sig6(size.energy.mwh()),
                    "power_mw": round_sig6(size.power_mw),
                    "cost_usd": round_sig6(cost),
                }),
            )?,
        }
    }
    Ok(0)
}

fn cmd_evfleet(a: &EvfleetArgs, config: &Config, out: &mut dyn Write) -> anyhow::Result<i32> {
    let mut fleet: Vec<EvFleetSegment> = match &a.fleet {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("cannot read fleet `{}`", path.display()))?;
            load_ev_fleet(std::io::BufReader::new(file)).with_context(|| format!("invalid fleet `{}`", path.display()))?
        }
        None => texas_2033_fleet(),
    };
    if let Some(avail) = a.availability {
        if !(0.0..=1.0).contains(&avail) {
            return Err(usage(format!("--availability {avail} outside [0, 1]")));
        }
        for s in &mut fleet {
            s.availability = avail;
        }
    }
    let limit = parse_power_limit_gw(a.power_limit_gw.as_deref())?;
    let spec = aggregate_ev_fleet(&fleet, limit)?;
    for s in &fleet {
        writeln!(
            out,
            "{}: {} x {} kWh x {} = {:.1} GWh",
            s.name,
            s.count,
            sig6(s.per_vehicle_kwh),
            sig6(s.availability),
            s.energy_kwh() / 1e6
        )?;
    }
    writeln!(out, "EV fleet storage = {:.1} GWh", spec.energy_capacity.gwh())?;
    let model = cost_model(a.unit_cost, config)?;
    writeln!(out, "Equivalent storage cost = {}", billions(storage_cost(spec.energy_capacity, &model)))?;
    Ok(0)
}

fn cmd_cost(a: &CostArgs, config: &Config, out: &mut dyn Write) -> anyhow::Result<i32> {
    let gwh = a
        .energy_gwh
        .or(config.energy_gwh)
        .ok_or_else(|| usage("cost needs --energy-gwh"))?;
    if !(gwh.is_finite() && gwh >= 0.0) {
        return Err(usage(format!("--energy-gwh {gwh} must be nonnegative")));
    }
    let model = cost_model(a.unit_cost, config)?;
    let cost = storage_cost(Energy::from_gwh(gwh), &model);
    writeln!(out, "{} GWh x ${}/kWh = {}", sig6(gwh), sig6(model.unit_cost_per_kwh), billions(cost))?;
    Ok(0)
}

fn sweep_rho_axis(a: &SweepArgs, config: &Config) -> anyhow::Result<Vec<f64>> {
    if let Some(rho) = a.rho.clone().or_else(|| config.rho_values.clone()) {
        return Ok(rho);
    }
    let min = a.rho_min.or(config.rho_min).unwrap_or(0.0);
    let max = a.rho_max.or(config.rho_max).unwrap_or(0.4);
    let step = a.rho_step.or(config.rho_step).unwrap_or(0.01);
    if !(step > 0.0) || max < min {
        return Err(usage("rho range needs rho_min <= rho_max and a positive rho_step"));
    }
    Ok(linspace_step(min, max, step))
}

fn cmd_sweep(a: &SweepArgs, config: &Config, out: &mut dyn Write) -> anyhow::Result<i32> {
    let profile = resolve_profile(&a.profile, config)?;
    let kind = a.kind.or(config.kind).unwrap_or(SweepKindArg::Ens);
    let rho = sweep_rho_axis(a, config)?;
    let target = output_target(&a.output, config);

    if kind == SweepKindArg::Trajectories {
        let series = shedding_trajectories(&profile, &rho)?;
        for (r, s) in rho.iter().zip(&series) {
            writeln!(out, "rho = {}: ENS = {:.1} GWh, peak = {:.1} GW", sig6(*r), s.ens().gwh(), s.peak_mw() / 1e3)?;
        }
        if let Some((path, format)) = target {
            match format {
                Format::Csv => write_file(&path, |w| write_trajectories_csv(&rho, &series, w))?,
                Format::Json => {
                    let doc: Vec<_> = rho
                        .iter()
                        .zip(&series)
                        .map(|(r, s)| {
                            json!({
                                "rho": round_sig6(*r),
                                "shedding_mw": s.values().iter().map(|&v| round_sig6(v)).collect::<Vec<_>>(),
                            })
                        })
                        .collect();
                    write_json_file(
                        &path,
                        &json!({
                            "start": timestamp(&series[0], 0),
                            "step_secs": profile.grid().step_secs(),
                            "trajectories": doc,
                        }),
                    )?
                }
            }
        }
        return Ok(0);
    }

    let default_energies: Vec<f64> = match kind {
        SweepKindArg::Ens => vec![0.0, 135.0],
        _ => (0..=20).map(f64::from).collect(),
    };
    let energies = a.energy_gwh.clone().or_else(|| config.energy_values_gwh.clone()).unwrap_or(default_energies);
    if let Some(bad) = energies.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(usage(format!("storage energy {bad} GWh must be nonnegative")));
    }
    let limit_raw = a.power_limit_gw.clone().or(config_power_limit(config)?);
    let limit = parse_power_limit_gw(limit_raw.as_deref())?;
    let storage = energies
        .iter()
        .map(|&e| StorageSpec::new(Energy::from_gwh(e)).with_power_limit(limit))
        .collect::<crate::Result<Vec<_>>>()?;
    let options = SweepOptions {
        execution: if a.sequential { crate::Execution::Sequential } else { crate::Execution::default() },
        cost: cost_model(a.unit_cost, config)?,
    };
    let grid = match kind {
        SweepKindArg::Ens => sweep_ens_vs_rationing_with(&profile, &rho, &storage, &options)?,
        _ => sweep_peak_shave_vs_storage_with(&profile, &rho, &storage, &options)?,
    };

    writeln!(out, "sweep = {}, {} rho x {} storage", grid.kind.as_str(), grid.rho.len(), grid.storage.len())?;
    match kind {
        SweepKindArg::Ens => {
            for (j, s) in grid.storage.iter().enumerate() {
                let crossing = grid.zero_crossings[j].map(sig6).unwrap_or_else(|| "none".into());
                writeln!(out, "E = {:.1} GWh: zero ENS at rho = {}", s.energy_capacity.gwh(), crossing)?;
            }
        }
        _ => {
            let last = grid.storage.len() - 1;
            for (i, row) in grid.reports.iter().enumerate() {
                writeln!(
                    out,
                    "rho = {}: peak shave at {:.1} GWh = {:.2} GW",
                    sig6(grid.rho[i]),
                    grid.storage[last].energy_capacity.gwh(),
                    row[last].peak_shave_mw / 1e3
                )?;
            }
        }
    }
    if let Some((path, format)) = target {
        match format {
            Format::Csv => write_file(&path, |w| grid.write_csv(w))?,
            Format::Json => write_file(&path, |w| grid.write_json(w))?,
        }
    }
    Ok(0)
}

fn cmd_calibrate(a: &CalibrateArgs, config: &Config, out: &mut dyn Write) -> anyhow::Result<i32> {
    let seed = a.seed.or(config.seed).unwrap_or(calibrate::DEFAULT_SEED);
    let targets = CalibrationTargets::default();
    let cal = calibrate::calibrate_profile(&targets, &ProfileTemplate::default(), seed)?;
    for c in &cal.report.checks {
        writeln!(out, "{} {}: {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, sig6(c.value), c.requirement)?;
    }
    writeln!(out, "fitted in {} evaluations", cal.evaluations)?;
    if let Some(dir) = a.out_dir.clone().or_else(|| config.out_dir.clone()) {
        let csv_path = dir.join(FIXTURE_CSV);
        write_file(&csv_path, |w| write_profile(&cal.profile, w, &calibrate::fixture_header(&cal)))?;
        write_json_file(&dir.join(FIXTURE_JSON), &calibrate::sidecar(&cal))?;
        writeln!(out, "wrote {}", csv_path.display())?;
    }
    Ok(0)
}

fn cmd_validate(a: &ValidateArgs, config: &Config, out: &mut dyn Write) -> anyhow::Result<i32> {
    let profile = resolve_profile(&a.profile, config)?;
    let report = calibrate::validate_fixture(&profile, &CalibrationTargets::default())?;
    for c in &report.checks {
        writeln!(out, "{} {}: {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, sig6(c.value), c.requirement)?;
    }
    if report.all_passed() {
        Ok(0)
    } else {
        Err(anyhow!("{} target(s) failed: {}", report.failed().len(), report.failed().join(", ")))
    }
}
