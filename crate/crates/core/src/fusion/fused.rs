use std::collections::HashMap;

use crate::ingest::{SpeedFeedRecord, TollFeedRecord, VolumeFeedRecord};
use crate::study::{IntervalIndex, Money, StudyConfig, TimeGrid};

use super::series::{impute_series, Series};
use super::speed::{route_travel_time, travel_time_difference};
use super::volume::station_volume;

/// All grid-aligned series a feature table is built from.
#[derive(Debug, Clone)]
pub struct FusedSeries {
    pub grid: TimeGrid,
    pub toll: Series<Money>,
    pub tt_toll: Series<f64>,
    pub tt_alt: Vec<(String, Series<f64>)>,
    pub tt_alt_best: Series<f64>,
    pub tt_diff: Series<f64>,
    pub volume: Series<f64>,
    /// Bins blanked because their wall-clock time is skipped or repeated.
    pub dst_ambiguous: Vec<IntervalIndex>,
}

/// Aligns the three feeds onto the configured grid. Records outside the
/// grid, of unknown segments, or of other toll pairs are ignored.
pub fn fuse(
    config: &StudyConfig,
    tolls: &[TollFeedRecord],
    speeds: &[SpeedFeedRecord],
    volumes: &[VolumeFeedRecord],
) -> FusedSeries {
    let grid = config.grid.clone();
    let n = grid.interval_count();
    let gap = config.max_gap;

    let mut seg_index: HashMap<&str, usize> = HashMap::new();
    for route in config.all_routes() {
        for s in route.segments() {
            let next = seg_index.len();
            seg_index.entry(s.id.as_str()).or_insert(next);
        }
    }
    let mut sums = vec![0.0f64; seg_index.len() * n];
    let mut counts = vec![0u16; seg_index.len() * n];
    for r in speeds {
        let (Some(&s), Ok(idx)) = (seg_index.get(r.segment_id.as_str()), grid.interval_of(r.timestamp)) else {
            continue;
        };
        sums[s * n + idx.0] += r.speed_mph;
        counts[s * n + idx.0] += 1;
    }
    let seg_series: Vec<Series<f64>> = (0..seg_index.len())
        .map(|s| {
            let raw = Series(
                (0..n)
                    .map(|i| {
                        let c = counts[s * n + i];
                        (c > 0).then(|| sums[s * n + i] / c as f64)
                    })
                    .collect(),
            );
            impute_series(&raw, gap)
        })
        .collect();

    let travel_times = |route: &crate::study::RouteSpec| -> Series<f64> {
        let cols: Vec<&Series<f64>> = route
            .segments()
            .iter()
            .map(|s| &seg_series[seg_index[s.id.as_str()]])
            .collect();
        let mut speeds = vec![None; cols.len()];
        Series(
            (0..n)
                .map(|i| {
                    for (slot, col) in speeds.iter_mut().zip(&cols) {
                        *slot = col[i];
                    }
                    route_travel_time(route, &speeds)
                })
                .collect(),
        )
    };

    let tt_toll = travel_times(&config.toll_route);
    let tt_alt: Vec<(String, Series<f64>)> = config
        .alt_routes
        .iter()
        .map(|r| (r.route_id().to_string(), travel_times(r)))
        .collect();
    let mut tt_alt_best = Series::missing(n);
    let mut tt_diff = Series::missing(n);
    let mut alts = vec![None; tt_alt.len()];
    for i in 0..n {
        for (slot, (_, s)) in alts.iter_mut().zip(&tt_alt) {
            *slot = s[i];
        }
        tt_alt_best.0[i] = alts.iter().flatten().copied().reduce(f64::min);
        tt_diff.0[i] = travel_time_difference(tt_toll[i], &alts);
    }

    let mut toll = Series::missing(n);
    for r in tolls {
        if r.entry_ramp != config.entry_ramp || r.exit_ramp != config.exit_ramp {
            continue;
        }
        if let Ok(idx) = grid.interval_of(r.timestamp) {
            toll.set(idx, Some(r.toll));
        }
    }
    let toll = impute_series(&toll, gap);
    let volume = impute_series(&station_volume(volumes, &config.volume_stations, &grid), gap);

    let dst_ambiguous = grid.dst_ambiguous_bins();
    let mut fused = FusedSeries { grid, toll, tt_toll, tt_alt, tt_alt_best, tt_diff, volume, dst_ambiguous };
    for &idx in &fused.dst_ambiguous.clone() {
        fused.toll.set(idx, None);
        fused.tt_toll.set(idx, None);
        fused.tt_alt_best.set(idx, None);
        fused.tt_diff.set(idx, None);
        fused.volume.set(idx, None);
        for (_, s) in &mut fused.tt_alt {
            s.set(idx, None);
        }
    }
    fused
}
