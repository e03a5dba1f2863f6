use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use sha2::{Digest, Sha256};

use crate::ingest::{format_timestamp, parse_timestamp};
use crate::study::{
    is_tolling, HorizonIndex, IntervalIndex, KvConfig, Money, StudyConfig, TargetKind,
};

use super::fused::FusedSeries;
use super::{DropCounts, FusionError};

pub const TABLE_FILE: &str = "features.csv";
pub const META_FILE: &str = "features.meta";

pub const CSV_HEADER: [&str; 14] = [
    "interval",
    "timestamp",
    "toll_cents",
    "tt_toll_min",
    "tt_alt_best_min",
    "tt_diff_min",
    "volume_veh",
    "minute_of_day",
    "day_of_week",
    "target_h1",
    "target_h2",
    "target_h3",
    "target_h4",
    "target_h5",
];

const BASE_FEATURES: [(&str, &str); 5] = [
    ("toll_cents", "cents"),
    ("tt_toll_min", "min"),
    ("tt_alt_best_min", "min"),
    ("tt_diff_min", "min"),
    ("volume_veh", "veh/6min"),
];
const CALENDAR_FEATURES: [(&str, &str); 2] = [("minute_of_day", "min"), ("day_of_week", "mon0")];

/// Model input columns in order.
pub fn feature_names(calendar: bool) -> Vec<&'static str> {
    let mut out: Vec<&str> = BASE_FEATURES.iter().map(|c| c.0).collect();
    if calendar {
        out.extend(CALENDAR_FEATURES.iter().map(|c| c.0));
    }
    out
}

/// Short hex digest of the input columns, their units and order, and the
/// target definition. Models refuse tables with a different hash.
pub fn schema_hash(target_kind: TargetKind, calendar: bool) -> String {
    let mut h = Sha256::new();
    h.update(b"tollcast-features/1\n");
    let cols = BASE_FEATURES.iter().chain(if calendar { &CALENDAR_FEATURES[..] } else { &[] });
    for (name, unit) in cols {
        h.update(format!("{name}:{unit}\n"));
    }
    h.update(format!("target:{}:{}:h1-h5\n", target_kind.code(), target_kind.unit()));
    hex::encode(&h.finalize()[..8])
}

/// Conditions at one interval, known at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub interval: IntervalIndex,
    pub timestamp: NaiveDateTime,
    pub toll_now: Money,
    pub tt_toll: f64,
    pub tt_alt_best: f64,
    pub tt_diff: f64,
    pub volume_now: f64,
    pub minute_of_day: u32,
    /// Monday = 0.
    pub day_of_week: u32,
}

impl Observation {
    pub fn features(&self, calendar: bool) -> Vec<f64> {
        let mut v = vec![
            self.toll_now.cents() as f64,
            self.tt_toll,
            self.tt_alt_best,
            self.tt_diff,
            self.volume_now,
        ];
        if calendar {
            v.push(self.minute_of_day as f64);
            v.push(self.day_of_week as f64);
        }
        v
    }

    /// Current value of the forecast quantity.
    pub fn current(&self, kind: TargetKind) -> f64 {
        match kind {
            TargetKind::TollPrice => self.toll_now.cents() as f64,
            TargetKind::TravelTimeDifference => self.tt_diff,
        }
    }

    pub fn date(&self) -> NaiveDate {
        self.timestamp.date()
    }
}

/// Observation at `idx` if every current feature is present.
pub fn observation_at(fused: &FusedSeries, idx: IntervalIndex) -> Option<Observation> {
    let timestamp = fused.grid.timestamp_of(idx);
    Some(Observation {
        interval: idx,
        timestamp,
        toll_now: *fused.toll.get(idx)?,
        tt_toll: *fused.tt_toll.get(idx)?,
        tt_alt_best: *fused.tt_alt_best.get(idx)?,
        tt_diff: *fused.tt_diff.get(idx)?,
        volume_now: *fused.volume.get(idx)?,
        minute_of_day: timestamp.hour() * 60 + timestamp.minute(),
        day_of_week: timestamp.weekday().num_days_from_monday(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub obs: Observation,
    /// Target at t + h·6 min, indexed by `HorizonIndex::slot`.
    pub targets: [f64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub schema_hash: String,
    pub target_kind: TargetKind,
    pub calendar_features: bool,
    pub config_digest: String,
    pub rows: Vec<FeatureRow>,
    pub drops: DropCounts,
}

/// One row per tolled interval of the configured direction whose features
/// and five in-window targets are all present.
pub fn build_feature_table(config: &StudyConfig, fused: &FusedSeries) -> Result<FeatureTable, FusionError> {
    let grid = &fused.grid;
    let kind = config.target_kind;
    let guard = kind.mape_guard();
    let tolled = |idx: IntervalIndex| {
        grid.contains(idx) && is_tolling(grid.timestamp_of(idx), config.direction, &config.windows)
    };
    let target_at = |idx: IntervalIndex| -> Option<f64> {
        match kind {
            TargetKind::TollPrice => fused.toll.get(idx).map(|m| m.cents() as f64),
            TargetKind::TravelTimeDifference => fused.tt_diff.get(idx).copied(),
        }
    };

    let mut drops = DropCounts::default();
    let mut rows = Vec::new();
    'rows: for idx in grid.iter().filter(|&i| tolled(i)) {
        drops.candidates += 1;
        if fused.dst_ambiguous.contains(&idx) {
            drops.dst_ambiguous += 1;
            continue;
        }
        let day = grid.date_of(idx);
        let mut targets = [0.0; 5];
        for h in HorizonIndex::ALL {
            let t = idx.offset(h.steps());
            if !tolled(t) || grid.date_of(t) != day {
                drops.target_off_window += 1;
                continue 'rows;
            }
        }
        let Some(obs) = observation_at(fused, idx) else {
            drops.missing_features += 1;
            continue;
        };
        for h in HorizonIndex::ALL {
            match target_at(idx.offset(h.steps())) {
                Some(v) => targets[h.slot()] = v,
                None => {
                    drops.missing_target += 1;
                    continue 'rows;
                }
            }
        }
        if targets.iter().any(|t| t.abs() < guard) {
            drops.target_below_guard += 1;
            continue;
        }
        rows.push(FeatureRow { obs, targets });
    }
    if rows.is_empty() {
        return Err(FusionError::EmptyTable(drops));
    }
    Ok(FeatureTable {
        schema_hash: schema_hash(kind, config.calendar_features),
        target_kind: kind,
        calendar_features: config.calendar_features,
        config_digest: config.digest(),
        rows,
        drops,
    })
}

impl FeatureTable {
    pub fn feature_names(&self) -> Vec<&'static str> {
        feature_names(self.calendar_features)
    }

    pub fn n_features(&self) -> usize {
        self.feature_names().len()
    }

    pub fn features(&self, row: usize) -> Vec<f64> {
        self.rows[row].obs.features(self.calendar_features)
    }

    /// Distinct calendar dates, ascending.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let mut d: Vec<NaiveDate> = self.rows.iter().map(|r| r.obs.date()).collect();
        d.dedup();
        d
    }

    /// Copy holding only the rows whose indices are listed.
    pub fn subset(&self, rows: &[usize]) -> FeatureTable {
        FeatureTable {
            rows: rows.iter().map(|&i| self.rows[i].clone()).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> FeatureTable {
        FeatureTable {
            schema_hash: self.schema_hash.clone(),
            target_kind: self.target_kind,
            calendar_features: self.calendar_features,
            config_digest: self.config_digest.clone(),
            rows: Vec::new(),
            drops: self.drops,
        }
    }

    pub fn write_csv(&self, out: impl Write) -> Result<(), FusionError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            let o = &r.obs;
            let mut rec = vec![
                o.interval.0.to_string(),
                format_timestamp(o.timestamp),
                o.toll_now.cents().to_string(),
                o.tt_toll.to_string(),
                o.tt_alt_best.to_string(),
                o.tt_diff.to_string(),
                o.volume_now.to_string(),
                o.minute_of_day.to_string(),
                o.day_of_week.to_string(),
            ];
            rec.extend(r.targets.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn meta_string(&self) -> String {
        format!(
            "schema_hash = {}\ntarget_kind = {}\ncalendar_features = {}\nconfig_digest = {}\nrows = {}\n",
            self.schema_hash,
            self.target_kind.code(),
            self.calendar_features,
            self.config_digest,
            self.rows.len()
        )
    }

    /// Reads a table written by [`write_csv`](Self::write_csv) with its
    /// sidecar. The sidecar hash must match the one implied by its target and
    /// calendar settings.
    pub fn read(csv_input: impl Read, meta: &str) -> Result<FeatureTable, FusionError> {
        let kv = KvConfig::parse(meta).map_err(|e| FusionError::Format(e.to_string()))?;
        let get = |k: &str| kv.get(k).ok_or_else(|| FusionError::Format(format!("sidecar lacks {k}")));
        let target_kind: TargetKind = get("target_kind")?
            .parse()
            .map_err(|e| FusionError::Format(format!("target_kind: {e}")))?;
        let calendar_features: bool = get("calendar_features")?
            .parse()
            .map_err(|_| FusionError::Format("calendar_features must be true or false".into()))?;
        let found = get("schema_hash")?.to_string();
        let expected = schema_hash(target_kind, calendar_features);
        if found != expected {
            return Err(FusionError::SchemaMismatch { expected, found });
        }

        let mut r = csv::Reader::from_reader(csv_input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != CSV_HEADER {
            return Err(FusionError::Format(format!("unexpected header {}", header.join(","))));
        }
        let mut rows: Vec<FeatureRow> = Vec::new();
        for (n, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = n + 2;
            let bad = |what: &str| FusionError::Format(format!("line {line}: invalid {what}"));
            let f = |i: usize| -> Result<f64, FusionError> {
                rec[i].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(CSV_HEADER[i]))
            };
            let u = |i: usize| -> Result<u64, FusionError> { rec[i].parse::<u64>().map_err(|_| bad(CSV_HEADER[i])) };
            let obs = Observation {
                interval: IntervalIndex(u(0)? as usize),
                timestamp: parse_timestamp(&rec[1]).map_err(|_| bad("timestamp"))?,
                toll_now: Money::from_cents(u(2)?),
                tt_toll: f(3)?,
                tt_alt_best: f(4)?,
                tt_diff: f(5)?,
                volume_now: f(6)?,
                minute_of_day: u(7)? as u32,
                day_of_week: u(8)? as u32,
            };
            let mut targets = [0.0; 5];
            for (k, t) in targets.iter_mut().enumerate() {
                *t = f(9 + k)?;
            }
            if rows.last().is_some_and(|p| p.obs.interval >= obs.interval) {
                return Err(FusionError::Format(format!("line {line}: intervals not increasing")));
            }
            rows.push(FeatureRow { obs, targets });
        }
        Ok(FeatureTable {
            schema_hash: found,
            target_kind,
            calendar_features,
            config_digest: get("config_digest")?.to_string(),
            rows,
            drops: DropCounts::default(),
        })
    }
}
