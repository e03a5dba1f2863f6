//! 15-minute lane counts onto the 6-minute grid.
//!
//! The two grids are incommensurate, so each period's lane-summed count is
//! read as a constant flow rate and every 6-minute bin receives the vehicles
//! that rate delivers during its overlap with each period.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDateTime};

use crate::ingest::VolumeFeedRecord;
use crate::num::Real;
use crate::study::TimeGrid;

use super::series::Series;

pub const VOLUME_PERIOD_MINUTES: i64 = 15;

/// Lane-summed counts per period for one station.
pub fn lane_totals(records: &[VolumeFeedRecord], station: &str) -> BTreeMap<NaiveDateTime, f64> {
    let mut out = BTreeMap::new();
    for r in records.iter().filter(|r| r.station_id == station) {
        *out.entry(r.period_start).or_insert(0.0) += r.count as f64;
    }
    out
}

/// Vehicles per grid bin from per-period totals. A bin overlapping a missing
/// period is missing.
pub fn resample_volume<T: Real>(period_totals: &BTreeMap<NaiveDateTime, T>, grid: &TimeGrid) -> Series<T> {
    let period = Duration::minutes(VOLUME_PERIOD_MINUTES);
    let period_min = T::lit(VOLUME_PERIOD_MINUTES as f64);
    let mut out = Series::missing(grid.interval_count());
    for idx in grid.iter() {
        let lo = grid.timestamp_of(idx);
        let hi = lo + grid.step();
        let mut p = floor_to_period(lo);
        let mut total = T::zero();
        let mut complete = true;
        while p < hi {
            let overlap = (hi.min(p + period) - lo.max(p)).num_seconds();
            match period_totals.get(&p) {
                Some(&count) => total += count * T::lit(overlap as f64 / 60.0) / period_min,
                None => {
                    complete = false;
                    break;
                }
            }
            p += period;
        }
        if complete {
            out.set(idx, Some(total));
        }
    }
    out
}

fn floor_to_period(ts: NaiveDateTime) -> NaiveDateTime {
    let day = ts.date().and_hms_opt(0, 0, 0).expect("midnight");
    let mins = (ts - day).num_minutes();
    day + Duration::minutes(mins - mins % VOLUME_PERIOD_MINUTES)
}

/// Corridor volume per bin: per-station series averaged over the stations
/// present at each bin.
pub fn station_volume(records: &[VolumeFeedRecord], stations: &[String], grid: &TimeGrid) -> Series<f64> {
    let per: Vec<Series<f64>> = stations
        .iter()
        .map(|s| resample_volume(&lane_totals(records, s), grid))
        .collect();
    let mut out = Series::missing(grid.interval_count());
    for i in 0..grid.interval_count() {
        let vals: Vec<f64> = per.iter().filter_map(|s| s[i]).collect();
        if !vals.is_empty() {
            out.0[i] = Some(vals.iter().sum::<f64>() / vals.len() as f64);
        }
    }
    out
}
