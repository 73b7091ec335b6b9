mod common;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use shedsim::rationing::{apply_reduction, simulate_household_enforcement, Household, HouseholdState};
use shedsim::sweep::rationed_shedding;
use shedsim::{
    adequacy_shedding, bundled_fixture, household_cap, resample, system_reduction, EventProfile, Fraction,
    PowerSeries, RationingPolicy, TimeGrid,
};

fn grid(n: usize) -> TimeGrid {
    TimeGrid::hourly(Utc.with_ymd_and_hms(2021, 2, 15, 0, 0, 0).unwrap(), n).unwrap()
}

fn profile(cap: &[f64], dem: &[f64]) -> EventProfile {
    let g = grid(cap.len());
    EventProfile::new(PowerSeries::new(g, cap.to_vec()).unwrap(), PowerSeries::new(g, dem.to_vec()).unwrap())
        .unwrap()
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..24).prop_flat_map(|n| {
        (prop::collection::vec(0.0..60_000.0f64, n), prop::collection::vec(0.0..70_000.0f64, n))
    })
}

proptest! {
    #[test]
    fn ens_is_linear_in_the_series((cap, dem) in pair(), k in 0.1..10.0f64) {
        let s = adequacy_shedding(&profile(&cap, &dem));
        let scaled: Vec<f64> = s.values().iter().map(|v| v * k).collect();
        let expected = k * s.ens().mwh();
        let got = common::hourly(&scaled).ens().mwh();
        prop_assert!((got - expected).abs() <= 1e-9 * expected.max(1.0));
    }

    #[test]
    fn more_capacity_never_adds_shedding((cap, dem) in pair(), extra in 0.0..10_000.0f64) {
        let base = adequacy_shedding(&profile(&cap, &dem));
        let more: Vec<f64> = cap.iter().map(|c| c + extra).collect();
        let raised = adequacy_shedding(&profile(&more, &dem));
        prop_assert!(raised.ens() <= base.ens());
        for (a, b) in raised.values().iter().zip(base.values()) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn rationing_never_adds_shedding((cap, dem) in pair(), r1 in 0.0..1.0f64, r2 in 0.0..1.0f64) {
        let p = profile(&cap, &dem);
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let a = rationed_shedding(&p, lo).unwrap();
        let b = rationed_shedding(&p, hi).unwrap();
        prop_assert!(b.ens() <= a.ens());
        let demand_lo = apply_reduction(p.demand(), lo).unwrap();
        let demand_hi = apply_reduction(p.demand(), hi).unwrap();
        for (x, y) in demand_hi.values().iter().zip(demand_lo.values()) {
            prop_assert!(x <= y);
        }
    }

    #[test]
    fn resampling_preserves_ens(values in prop::collection::vec(0.0..20_000.0f64, 1..48), factor in 1i64..5) {
        let s = common::hourly(&values);
        let e = s.ens().mwh();
        let fine = s.resample(3600 / (factor * 3)).unwrap();
        prop_assert!((fine.ens().mwh() - e).abs() <= 1e-9 * e.max(1.0));
        let back = fine.resample(3600).unwrap();
        prop_assert!((back.ens().mwh() - e).abs() <= 1e-9 * e.max(1.0));
        for (a, b) in back.values().iter().zip(&values) {
            prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }
    }

    #[test]
    fn micro_matches_macro(baselines in prop::collection::vec(0.1..20.0f64, 1..200), r in 0.0..1.0f64) {
        let policy = RationingPolicy::residential(Fraction::from_f64((r * 1e6).round() / 1e6).unwrap());
        let rho = policy.residential_fraction.value();
        let pop: Vec<Household> = baselines.iter().enumerate().map(|(i, &b)| Household::new(i.to_string(), b).unwrap()).collect();
        let total: f64 = baselines.iter().sum();
        let caps: Vec<f64> = baselines.iter().map(|&b| household_cap(&policy, b, Default::default()).cap_kw).collect();
        let out = simulate_household_enforcement(pop, &policy, &[caps]).unwrap();
        prop_assert!((out.served_kw[0] - (1.0 - rho) * total).abs() <= 1e-9 * total);
    }
}

#[test]
fn resample_pairs_average() {
    let s = PowerSeries::new(grid(2), vec![10.0, 30.0]).unwrap();
    let r = resample(&s, 7200).unwrap();
    assert_eq!(r.values(), &[20.0]);
}

#[test]
fn default_policy_is_one_fifth() {
    let p = RationingPolicy::residential("0.6".parse().unwrap());
    assert_eq!(system_reduction(&p), 0.2);
}

#[test]
fn fixture_reduction_is_monotone_in_rho() {
    let p = bundled_fixture();
    let mut last = f64::INFINITY;
    for k in 0..=40 {
        let e = rationed_shedding(&p, k as f64 / 100.0).unwrap().ens().mwh();
        assert!(e <= last);
        last = e;
    }
}

/// Plain replay of the warn-then-cut-off rule, kept separate from the library.
fn replay(cap: f64, requests: &[f64]) -> Vec<f64> {
    let mut warned = false;
    let mut cut = false;
    requests
        .iter()
        .map(|&r| {
            if cut {
                0.0
            } else if r <= cap {
                warned = false;
                r
            } else if warned {
                cut = true;
                0.0
            } else {
                warned = true;
                cap
            }
        })
        .collect()
}

#[test]
fn household_population_enforcement() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dist = LogNormal::new(1.0f64, 0.5).unwrap();
    let n = 1000;
    let steps = 6;
    let policy = RationingPolicy::residential("0.4".parse().unwrap());
    let baselines: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
    let violators: Vec<bool> = (0..n).map(|i| i % 10 == 0).collect();
    let caps: Vec<f64> = baselines.iter().map(|&b| household_cap(&policy, b, Default::default()).cap_kw).collect();

    let draws: Vec<Vec<f64>> = (0..steps)
        .map(|_| {
            (0..n)
                .map(|i| if violators[i] { baselines[i] * rng.random_range(0.8..1.2) } else { caps[i] * rng.random_range(0.3..1.0) })
                .collect()
        })
        .collect();
    let pop: Vec<Household> = baselines.iter().enumerate().map(|(i, &b)| Household::new(format!("h{i}"), b).unwrap()).collect();
    let out = simulate_household_enforcement(pop, &policy, &draws).unwrap();

    let budget = 0.6 * baselines.iter().sum::<f64>();
    let per_house: Vec<Vec<f64>> = (0..n).map(|i| replay(caps[i], &draws.iter().map(|d| d[i]).collect::<Vec<_>>())).collect();
    for t in 0..steps {
        let expected: f64 = per_house.iter().map(|h| h[t]).sum();
        assert!((out.served_kw[t] - expected).abs() <= 1e-9 * expected, "step {t}");
        assert!(out.served_kw[t] <= budget * (1.0 + 1e-12), "step {t} exceeds the cap budget");
    }
    let cut = out.households.iter().filter(|h| h.state == HouseholdState::CutOff).count();
    assert_eq!(cut, violators.iter().filter(|&&v| v).count());
    assert!(out.served_kw[1] < out.served_kw[0]);
}
