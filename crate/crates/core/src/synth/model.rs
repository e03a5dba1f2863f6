//! The generator's traffic and pricing formulas.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::study::Money;

use super::{ControllerParams, DemandParams};

/// Lowest speed the generator emits.
pub const SPEED_FLOOR_MPH: f64 = 5.0;
/// Corridor speed the controller steers toward.
pub const TARGET_SPEED_MPH: f64 = 55.0;

fn is_weekend(day: NaiveDate) -> bool {
    matches!(day.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Noise-free demand at `minute` of `day`, in vehicles per hour.
pub fn deterministic_demand(day: NaiveDate, minute: f64, p: &DemandParams) -> f64 {
    let z = (minute - p.peak_center_min) / p.peak_width_min;
    let base = p.baseline + p.peak_amplitude * (-0.5 * z * z).exp();
    if is_weekend(day) {
        base * p.weekend_factor
    } else {
        base
    }
}

/// Demand for one interval: the deterministic profile plus an AR(1)
/// disturbance carried in `ar_state`, clipped at zero.
pub fn gen_demand<R: Rng + ?Sized>(
    day: NaiveDate,
    minute: f64,
    p: &DemandParams,
    ar_state: &mut f64,
    rng: &mut R,
) -> f64 {
    let shock = if p.noise > 0.0 {
        Normal::new(0.0, p.noise).expect("finite sd").sample(rng)
    } else {
        0.0
    };
    *ar_state = p.ar_coef * *ar_state + shock;
    (deterministic_demand(day, minute, p) + *ar_state).max(0.0)
}

/// Bureau-of-Public-Roads-shaped speed–flow curve with additive jitter.
pub fn speed_from_flow(flow: f64, capacity: f64, free_flow: f64, jitter: f64) -> f64 {
    assert!(capacity > 0.0, "capacity must be positive");
    let r = flow / capacity;
    (free_flow / (1.0 + r.powi(4)) + jitter).max(SPEED_FLOOR_MPH)
}

/// Proportional controller on the speed error, clipped to the toll bounds
/// and quantized to the display step.
pub fn toll_controller_step(toll: Money, speed: f64, p: &ControllerParams, noise_cents: f64) -> Money {
    let next = toll.cents() as f64 + p.gain * (TARGET_SPEED_MPH - speed) + noise_cents;
    let lo = p.toll_min.cents() as f64;
    let hi = p.toll_max.cents() as f64;
    let step = p.step.cents() as f64;
    let q = (next.clamp(lo, hi) / step).round() * step;
    Money::from_cents(q.clamp(lo, hi) as u64)
}

/// Splits `total` into integer parts proportional to `weights` by largest
/// remainder; parts sum to `total` exactly.
pub fn split_lanes(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut parts: Vec<u64> = exact.iter().map(|e| e.floor() as u64).collect();
    let mut short = total - parts.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for i in order.into_iter().cycle() {
        if short == 0 {
            break;
        }
        parts[i] += 1;
        short -= 1;
    }
    parts
}
