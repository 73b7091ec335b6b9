mod common;

use proptest::prelude::*;
use shedsim::{dispatch_ens_offset, dispatch_peak_shave, size_for_zero_residual, Energy, StorageSpec};

fn case() -> impl Strategy<Value = (Vec<f64>, f64, Option<f64>)> {
    (
        prop::collection::vec(prop_oneof![Just(0.0), 0.0..5_000.0f64], 1..=12),
        0.0..1.3f64,
        prop::option::of(1.0..5_000.0f64),
    )
}

#[test]
fn triangle_threshold() {
    // (5000 - T) + 2 (3000 - T) = 3000 puts the threshold at 8000/3
    let s = common::hourly(&[1000.0, 3000.0, 5000.0, 3000.0, 1000.0]);
    let d = dispatch_peak_shave(&s, &StorageSpec::new(Energy::from_mwh(3000.0))).unwrap();
    let t = d.threshold_mw.unwrap();
    assert!((t - 8000.0 / 3.0).abs() < 1e-6, "{t}");
    assert!((d.energy_used.mwh() - 3000.0).abs() < 1e-5);
    assert_eq!(d.residual.values()[1], d.residual.values()[2]);
    assert_eq!(common::breakpoint_residual_peak(s.values(), 3000.0, f64::INFINITY, 1.0), 8000.0 / 3.0);
}

#[test]
fn power_limit_binds_before_energy() {
    let s = common::hourly(&[0.0, 3000.0, 0.0]);
    let spec = StorageSpec::new(Energy::from_mwh(10_000.0)).with_power_limit(Some(500.0)).unwrap();
    let d = dispatch_peak_shave(&s, &spec).unwrap();
    assert_eq!(d.residual_peak_mw(), 2500.0);
    assert_eq!(d.peak_shave_mw, 500.0);
}

#[test]
fn ens_offset_serves_largest_first() {
    let s = common::hourly(&[100.0, 300.0, 200.0, 300.0]);
    let d = dispatch_ens_offset(&s, &StorageSpec::new(Energy::from_mwh(450.0))).unwrap();
    assert_eq!(d.discharge.values(), &[0.0, 300.0, 0.0, 150.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn peak_shave_matches_oracles((values, e_frac, power) in case()) {
        let s = common::hourly(&values);
        let energy = e_frac * s.ens().mwh();
        let spec = StorageSpec::new(Energy::from_mwh(energy)).with_power_limit(power).unwrap();
        let d = dispatch_peak_shave(&s, &spec).unwrap();
        let cap = spec.power_cap_mw();
        let scale = s.peak_mw().max(1.0);
        let grid = common::grid_search_residual_peak(&values, energy, cap, 1.0);
        let exact = common::breakpoint_residual_peak(&values, energy, cap, 1.0);
        prop_assert!((d.residual_peak_mw() - grid).abs() <= 1e-6 * scale);
        prop_assert!((d.residual_peak_mw() - exact).abs() <= 1e-6 * scale);
    }

    #[test]
    fn dispatch_is_feasible((values, e_frac, power) in case(), ens_offset in any::<bool>()) {
        let s = common::hourly(&values);
        let energy = e_frac * s.ens().mwh();
        let spec = StorageSpec::new(Energy::from_mwh(energy)).with_power_limit(power).unwrap();
        let d = if ens_offset { dispatch_ens_offset(&s, &spec) } else { dispatch_peak_shave(&s, &spec) }.unwrap();
        let cap = spec.power_cap_mw();
        for (i, &v) in values.iter().enumerate() {
            let dv = d.discharge.values()[i];
            prop_assert!(dv >= 0.0 && dv <= v && dv <= cap);
            prop_assert_eq!(d.residual.values()[i], v - dv);
        }
        prop_assert!(d.energy_used.mwh() <= energy * (1.0 + 1e-9) + 1e-9);
    }

    #[test]
    fn ens_offset_removes_min_of_budget_and_ens(values in prop::collection::vec(0.0..5_000.0f64, 1..=12), e_frac in 0.0..1.5f64) {
        let s = common::hourly(&values);
        let ens = s.ens().mwh();
        let energy = e_frac * ens;
        let d = dispatch_ens_offset(&s, &StorageSpec::new(Energy::from_mwh(energy))).unwrap();
        let expected = (ens - energy).max(0.0);
        prop_assert!((d.residual_ens().mwh() - expected).abs() <= 1e-9 * ens.max(1.0));
    }

    #[test]
    fn zero_residual_size_is_tight(values in prop::collection::vec(1.0..5_000.0f64, 1..=12)) {
        let s = common::hourly(&values);
        let size = size_for_zero_residual(&s);
        for d in [dispatch_ens_offset(&s, &size.spec()).unwrap(), dispatch_peak_shave(&s, &size.spec()).unwrap()] {
            prop_assert!(d.residual.values().iter().all(|&r| r == 0.0));
        }
        let short = StorageSpec::new(Energy::from_mwh(size.energy.mwh() * 0.999));
        prop_assert!(dispatch_ens_offset(&s, &short).unwrap().residual_ens().mwh() > 0.0);
        let weak = size.spec().with_power_limit(Some(size.power_mw * 0.999)).unwrap();
        prop_assert!(dispatch_peak_shave(&s, &weak).unwrap().residual_peak_mw() > 0.0);
    }

    #[test]
    fn shave_grows_concavely(values in prop::collection::vec(0.0..5_000.0f64, 2..=12)) {
        let s = common::hourly(&values);
        let ens = s.ens().mwh();
        let shave: Vec<f64> = (0..=10)
            .map(|k| dispatch_peak_shave(&s, &StorageSpec::new(Energy::from_mwh(ens * k as f64 / 10.0))).unwrap().peak_shave_mw)
            .collect();
        let tol = 1e-5_f64.max(1e-6 * s.peak_mw());
        for w in shave.windows(2) {
            prop_assert!(w[1] >= w[0] - tol);
        }
        for w in shave.windows(3) {
            prop_assert!(w[2] - w[1] <= w[1] - w[0] + tol);
        }
    }
}
