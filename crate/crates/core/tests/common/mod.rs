//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use chrono::{TimeZone, Utc};
use shedsim::{SheddingSeries, TimeGrid};

pub fn hourly(values: &[f64]) -> SheddingSeries {
    let g = TimeGrid::hourly(Utc.with_ymd_and_hms(2021, 2, 15, 0, 0, 0).unwrap(), values.len()).unwrap();
    SheddingSeries::new(g, values.to_vec()).unwrap()
}

/// True when some discharge with `0 <= d <= P` and `sum d dt <= budget` keeps every residual at or below `t`.
fn ceiling_feasible(s: &[f64], t: f64, budget: f64, power: f64, dt: f64) -> bool {
    let mut need = 0.0;
    for &v in s {
        let gap = v - t;
        if gap > power {
            return false;
        }
        if gap > 0.0 {
            need += gap * dt;
        }
    }
    need <= budget
}

/// Lowest achievable residual peak by zooming a dense threshold grid onto the
/// feasibility boundary until the bracket is below 1e-7 MW.
pub fn grid_search_residual_peak(s: &[f64], budget: f64, power: f64, dt: f64) -> f64 {
    let peak = s.iter().copied().fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, peak);
    if ceiling_feasible(s, lo, budget, power, dt) {
        return 0.0;
    }
    const POINTS: usize = 1000;
    // invariant: lo infeasible, hi feasible
    while hi - lo > 1e-7 {
        let step = (hi - lo) / POINTS as f64;
        let k = (1..POINTS)
            .find(|&k| ceiling_feasible(s, lo + step * k as f64, budget, power, dt))
            .unwrap_or(POINTS);
        let new_hi = if k == POINTS { hi } else { lo + step * k as f64 };
        let new_lo = lo + step * (k - 1) as f64;
        if new_hi - new_lo >= hi - lo {
            break;
        }
        lo = new_lo;
        hi = new_hi;
    }
    hi
}

/// Exact residual peak: the needed energy is piecewise linear in the ceiling with
/// breakpoints at the samples, so solve linearly inside the bracketing segment.
pub fn breakpoint_residual_peak(s: &[f64], budget: f64, power: f64, dt: f64) -> f64 {
    let peak = s.iter().copied().fold(0.0, f64::max);
    let floor = (peak - power).max(0.0);
    let need = |t: f64| s.iter().map(|&v| (v - t).max(0.0)).sum::<f64>() * dt;
    if need(floor) <= budget {
        return floor;
    }
    let mut knots: Vec<f64> = s.iter().copied().filter(|&v| v > floor).collect();
    knots.push(floor);
    knots.sort_by(|a, b| b.total_cmp(a));
    knots.dedup();
    for w in knots.windows(2) {
        let (upper, lower) = (w[0], w[1]);
        if need(lower) > budget {
            let active = s.iter().filter(|&&v| v >= upper).count() as f64;
            return upper - (budget - need(upper)) / (active * dt);
        }
    }
    floor
}
