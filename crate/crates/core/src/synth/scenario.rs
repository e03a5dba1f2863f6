use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::fusion::space_mean_speed;
use crate::ingest::{write_feed, FeedKind, IngestError, SpeedFeedRecord, TollFeedRecord, VolumeFeedRecord};
use crate::seed::rng_for;
use crate::study::{tolling_intervals, IntervalIndex, RouteSpec};

use super::model::{gen_demand, speed_from_flow, split_lanes, toll_controller_step};
use super::{ScenarioConfig, SynthError};

pub const META_FILE: &str = "scenario.meta";
const ALIGN_MINUTES: u32 = 30;
const VOLUME_PERIOD: u32 = 15;

/// Vehicles the generator sent past a station in one volume period.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowIntegral {
    pub station_id: String,
    pub period_start: NaiveDateTime,
    pub vehicles: f64,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub tolls: Vec<TollFeedRecord>,
    pub speeds: Vec<SpeedFeedRecord>,
    pub volumes: Vec<VolumeFeedRecord>,
    pub flow_integrals: Vec<FlowIntegral>,
    /// Tolled grid bins of the configured direction: the bins every feed
    /// covers.
    pub expected_bins: Vec<IntervalIndex>,
    meta: String,
}

fn minute_of(t: NaiveTime) -> u32 {
    t.hour() * 60 + t.minute()
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("non-negative sd")
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Per-segment capacity with a fixed ±8% profile along the route.
fn capacities(route: &RouteSpec, base: f64) -> Vec<f64> {
    (0..route.segments().len()).map(|i| base * (1.0 + 0.08 * ((i + 1) as f64).sin())).collect()
}

struct RouteState<'a> {
    route: &'a RouteSpec,
    caps: Vec<f64>,
    free_flow: f64,
    /// Sum of this bin's minute speeds per segment.
    bin_sum: Vec<f64>,
}

impl<'a> RouteState<'a> {
    fn new(route: &'a RouteSpec, capacity: f64, free_flow: f64) -> Self {
        RouteState { route, caps: capacities(route, capacity), free_flow, bin_sum: vec![0.0; route.segments().len()] }
    }

    fn minute<R: Rng>(&mut self, ts: NaiveDateTime, flow: f64, jitter: &Normal<f64>, rng: &mut R, out: &mut Vec<SpeedFeedRecord>) {
        for (i, seg) in self.route.segments().iter().enumerate() {
            let v = round2(speed_from_flow(flow, self.caps[i], self.free_flow, jitter.sample(rng)));
            self.bin_sum[i] += v;
            out.push(SpeedFeedRecord { segment_id: seg.id.clone(), timestamp: ts, speed_mph: v });
        }
    }

    /// Space-mean speed of the finished bin; clears the accumulators.
    fn close_bin(&mut self, minutes: f64) -> f64 {
        let pairs: Vec<(f64, f64)> = self
            .route
            .segments()
            .iter()
            .zip(&self.bin_sum)
            .map(|(s, sum)| (s.length_miles, sum / minutes))
            .collect();
        self.bin_sum.iter_mut().for_each(|s| *s = 0.0);
        space_mean_speed(&pairs).expect("positive lengths and speeds")
    }
}

/// Runs the generator over every active day of the study grid. Only the
/// configured direction's tolling window, widened to half-hour bounds, is
/// simulated.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario, SynthError> {
    let study = &cfg.study;
    let window = study
        .windows
        .iter()
        .find(|w| w.direction() == study.direction)
        .ok_or_else(|| SynthError::Invalid(format!("no tolling window for {}", study.direction)))?;
    let span_start = minute_of(window.daily_start()) / ALIGN_MINUTES * ALIGN_MINUTES;
    let span_end = minute_of(window.daily_end()).div_ceil(ALIGN_MINUTES) * ALIGN_MINUTES;
    let step = study.grid.step_minutes();

    let (d, t, c) = (&cfg.demand, &cfg.traffic, &cfg.controller);
    let mut rng_demand = rng_for(cfg.seed, "synth/demand");
    let mut rng_speed = rng_for(cfg.seed, "synth/speed");
    let mut rng_toll = rng_for(cfg.seed, "synth/toll");
    let jitter = normal(t.speed_jitter);
    let toll_noise = normal(c.noise);
    let lane_weights: Vec<f64> = (0..t.lanes).map(|l| 1.0 + 0.15 * (t.lanes - 1 - l) as f64).collect();

    let mut toll_route = RouteState::new(&study.toll_route, t.capacity, t.free_flow);
    let mut alts: Vec<RouteState> =
        study.alt_routes.iter().map(|r| RouteState::new(r, t.alt_capacity, t.alt_free_flow)).collect();
    let n_alt = alts.len().max(1) as f64;
    let peak_demand = (d.baseline + d.peak_amplitude).max(1.0);

    let mut tolls = Vec::new();
    let mut speeds = Vec::new();
    let mut volumes = Vec::new();
    let mut flow_integrals = Vec::new();

    let days: Vec<NaiveDate> = study.grid.dates();
    for day in days {
        if !window.active_days().contains(day.weekday()) {
            continue;
        }
        let midnight = day.and_time(NaiveTime::MIN);
        let mut ar = 0.0;
        let mut toll = c.toll_min;
        let mut minute_flow = Vec::with_capacity((span_end - span_start) as usize);
        for bin in (span_start..span_end).step_by(step as usize) {
            let bin_ts = midnight + Duration::minutes(bin as i64);
            let tolled = window.contains(bin_ts);
            let demand = gen_demand(day, bin as f64 + step as f64 / 2.0, d, &mut ar, &mut rng_demand);
            let share = if tolled { (-t.elasticity * toll.to_dollars()).exp() } else { 1.0 };
            let flow = demand * share;
            let alt_flow = t.alt_load * t.alt_capacity * demand / peak_demand + t.diversion * (demand - flow) / n_alt;
            for m in 0..step {
                let ts = bin_ts + Duration::minutes(m as i64);
                let first = speeds.len();
                toll_route.minute(ts, flow, &jitter, &mut rng_speed, &mut speeds);
                for a in &mut alts {
                    a.minute(ts, alt_flow, &jitter, &mut rng_speed, &mut speeds);
                }
                speeds[first..].sort_by(|x, y| x.segment_id.cmp(&y.segment_id));
                minute_flow.push(flow);
            }
            let corridor = toll_route.close_bin(step as f64);
            for a in &mut alts {
                a.close_bin(step as f64);
            }
            let noise = toll_noise.sample(&mut rng_toll);
            if tolled {
                tolls.push(TollFeedRecord {
                    timestamp: bin_ts,
                    entry_ramp: study.entry_ramp.clone(),
                    exit_ramp: study.exit_ramp.clone(),
                    toll,
                });
                toll = toll_controller_step(toll, corridor, c, noise);
            }
        }
        for (p, chunk) in minute_flow.chunks(VOLUME_PERIOD as usize).enumerate() {
            let period_start = midnight + Duration::minutes((span_start + p as u32 * VOLUME_PERIOD) as i64);
            let vehicles: f64 = chunk.iter().map(|f| f / 60.0).sum();
            let total = vehicles.round() as u64;
            let first = volumes.len();
            for station in &study.volume_stations {
                for (l, count) in split_lanes(total, &lane_weights).into_iter().enumerate() {
                    volumes.push(VolumeFeedRecord {
                        station_id: station.clone(),
                        period_start,
                        lane_id: format!("L{}", l + 1),
                        count,
                    });
                }
                flow_integrals.push(FlowIntegral { station_id: station.clone(), period_start, vehicles });
            }
            volumes[first..].sort_by(|x, y| (&x.station_id, &x.lane_id).cmp(&(&y.station_id, &y.lane_id)));
        }
    }

    let expected_bins = tolling_intervals(&study.grid, &study.windows, study.direction);
    let meta = format!(
        "# synthetic scenario; load with --config to reproduce\n{}{}",
        study.to_kv_string(),
        cfg.to_kv_string()
    );
    Ok(Scenario { tolls, speeds, volumes, flow_integrals, expected_bins, meta })
}

impl Scenario {
    /// Resolved study and `synth.` keys, loadable as a configuration file.
    pub fn meta(&self) -> &str {
        &self.meta
    }

    /// Writes the three feeds and `scenario.meta` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, SynthError> {
        fs::create_dir_all(dir)?;
        let io = |e: IngestError| SynthError::Io(std::io::Error::other(e.to_string()));
        let open = |kind: FeedKind| -> Result<(PathBuf, BufWriter<File>), SynthError> {
            let p = dir.join(kind.file_name());
            Ok((p.clone(), BufWriter::new(File::create(p)?)))
        };
        let mut out = Vec::new();
        let (p, w) = open(FeedKind::Toll)?;
        write_feed(&self.tolls, w).map_err(io)?;
        out.push(p);
        let (p, w) = open(FeedKind::Speed)?;
        write_feed(&self.speeds, w).map_err(io)?;
        out.push(p);
        let (p, w) = open(FeedKind::Volume)?;
        write_feed(&self.volumes, w).map_err(io)?;
        out.push(p);
        let p = dir.join(META_FILE);
        File::create(&p)?.write_all(self.meta.as_bytes())?;
        out.push(p);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::{KvConfig, StudyConfig};
    use crate::synth::Preset;

    fn small(days: usize) -> ScenarioConfig {
        let kv = KvConfig::parse(&format!("grid.start = 2018-07-02\ngrid.days = {days}\n")).unwrap();
        ScenarioConfig::new(StudyConfig::from_kv(&kv).unwrap(), Preset::Standard)
    }

    #[test]
    fn shapes_and_bounds() {
        let cfg = small(7);
        let s = generate_scenario(&cfg).unwrap();
        // 5 weekdays x 40 tolled bins
        assert_eq!(s.tolls.len(), 200);
        assert_eq!(s.expected_bins.len(), 200);
        assert_eq!(s.speeds.len(), 5 * 240 * 80);
        assert_eq!(s.volumes.len(), 5 * 16 * 2);
        assert!(s.tolls.iter().all(|r| r.toll.cents() % 25 == 0 && r.toll >= cfg.controller.toll_min && r.toll <= cfg.controller.toll_max));
        assert!(s.speeds.iter().all(|r| r.speed_mph >= 5.0 && r.speed_mph <= 120.0));
        let peak = s.tolls.iter().map(|r| r.toll).max().unwrap();
        assert!(peak.cents() > 200, "peak toll {peak}");
    }

    #[test]
    fn vehicles_conserved() {
        let s = generate_scenario(&small(3)).unwrap();
        for f in &s.flow_integrals {
            let counted: u64 = s
                .volumes
                .iter()
                .filter(|v| v.station_id == f.station_id && v.period_start == f.period_start)
                .map(|v| v.count)
                .sum();
            assert!((counted as f64 - f.vehicles).abs() <= 1.0);
        }
    }

    #[test]
    fn seeded() {
        let a = generate_scenario(&small(3)).unwrap();
        let b = generate_scenario(&small(3)).unwrap();
        assert_eq!(a.speeds, b.speeds);
        assert_eq!(a.tolls, b.tolls);
        let mut other = small(3);
        other.seed += 1;
        assert_ne!(generate_scenario(&other).unwrap().speeds, a.speeds);
    }
}
