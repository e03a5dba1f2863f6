use crate::num::Real;
use crate::study::RouteSpec;

use super::FusionError;

/// Length-weighted harmonic mean speed `L / Σ(lᵢ/vᵢ)` over `(length, speed)`
/// pairs, so that total length over this speed is the summed traversal time.
pub fn space_mean_speed<T: Real>(segments: &[(T, T)]) -> Result<T, FusionError> {
    if segments.is_empty() {
        return Err(FusionError::NoSegments);
    }
    let mut length = T::zero();
    let mut hours = T::zero();
    for &(l, v) in segments {
        if !(l > T::zero() && v > T::zero()) {
            return Err(FusionError::InvalidSegment(format!(
                "length {l} and speed {v} must both be positive"
            )));
        }
        length += l;
        hours += l / v;
    }
    Ok(length / hours)
}

/// Route travel time in minutes from per-segment speeds (aligned with the
/// route's segment order). `None` if any segment speed is missing.
pub fn route_travel_time<T: Real>(route: &RouteSpec, speeds: &[Option<T>]) -> Option<T> {
    debug_assert_eq!(route.segments().len(), speeds.len());
    let pairs: Option<Vec<(T, T)>> = route
        .segments()
        .iter()
        .zip(speeds)
        .map(|(s, v)| v.map(|v| (T::lit(s.length_miles), v)))
        .collect();
    let pairs = pairs?;
    let length: T = pairs.iter().map(|p| p.0).sum();
    let v = space_mean_speed(&pairs).ok()?;
    Some(length / v * T::lit(60.0))
}

/// Mean of the minute speeds that fell into one 6-minute bin.
pub fn aggregate_minutes_to_interval<T: Real>(minute_speeds: &[T]) -> Option<T> {
    if minute_speeds.is_empty() {
        return None;
    }
    let n = T::from_usize_lossy(minute_speeds.len());
    Some(minute_speeds.iter().copied().sum::<T>() / n)
}

/// `min(alternatives) − tt_toll`: positive when the toll road is faster.
/// Missing alternatives are skipped; `None` if none remain or the toll road
/// time is missing.
pub fn travel_time_difference<T: Real>(tt_toll: Option<T>, alternatives: &[Option<T>]) -> Option<T> {
    let best = alternatives.iter().flatten().copied().reduce(T::min)?;
    Some(best - tt_toll?)
}
