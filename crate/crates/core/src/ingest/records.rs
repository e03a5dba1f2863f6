use std::fmt;

use chrono::{Duration, NaiveDateTime, Timelike};

use crate::study::Money;

/// Wire format of every feed timestamp: local wall clock, minute resolution.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";
/// Tolls above this many cents are treated as feed corruption.
pub const TOLL_SANITY_CENTS: u64 = 5000;
/// Speeds above this are treated as feed corruption.
pub const SPEED_SANITY_MPH: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeedKind {
    Toll,
    Speed,
    Volume,
}

impl FeedKind {
    pub fn file_name(self) -> &'static str {
        match self {
            FeedKind::Toll => "toll.csv",
            FeedKind::Speed => "speed.csv",
            FeedKind::Volume => "volume.csv",
        }
    }
}

impl fmt::Display for FeedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeedKind::Toll => "toll",
            FeedKind::Speed => "speed",
            FeedKind::Volume => "volume",
        })
    }
}

/// Common contract of the three row types.
pub trait FeedRecord: Sized + Clone + PartialEq + fmt::Debug {
    const KIND: FeedKind;
    const HEADER: &'static [&'static str];

    /// Parses one data row; the error string is the rejection reason.
    fn from_fields(fields: &[&str]) -> Result<Self, String>;
    fn to_fields(&self) -> Vec<String>;
    fn timestamp(&self) -> NaiveDateTime;
    /// Series the record belongs to, for coverage.
    fn series_key(&self) -> String;
    /// Identity within one timestamp; two records with equal identity and
    /// timestamp are duplicates.
    fn identity(&self) -> String;
    /// Length of time the record describes.
    fn span(&self) -> Duration;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TollFeedRecord {
    pub timestamp: NaiveDateTime,
    pub entry_ramp: String,
    pub exit_ramp: String,
    pub toll: Money,
}

impl TollFeedRecord {
    pub fn pair_key(entry: &str, exit: &str) -> String {
        format!("{entry}->{exit}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedFeedRecord {
    pub segment_id: String,
    pub timestamp: NaiveDateTime,
    pub speed_mph: f64,
}

/// Lane count for one 15-minute period.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeFeedRecord {
    pub station_id: String,
    pub period_start: NaiveDateTime,
    pub lane_id: String,
    pub count: u64,
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime, String> {
    NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT).map_err(|_| format!("bad timestamp '{s}'"))
}

pub fn format_timestamp(ts: NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

fn ident(s: &str) -> Result<String, String> {
    let s = s.trim();
    if s.is_empty() {
        Err("empty identifier".into())
    } else {
        Ok(s.to_string())
    }
}

impl FeedRecord for TollFeedRecord {
    const KIND: FeedKind = FeedKind::Toll;
    const HEADER: &'static [&'static str] = &["timestamp", "entry_ramp", "exit_ramp", "toll_cents"];

    fn from_fields(f: &[&str]) -> Result<Self, String> {
        let timestamp = parse_timestamp(f[0])?;
        if timestamp.minute() % 6 != 0 {
            return Err("unaligned timestamp".into());
        }
        let raw = f[3].trim();
        if raw.starts_with('-') {
            return Err("negative toll".into());
        }
        let cents: u64 = raw.parse().map_err(|_| format!("invalid toll '{raw}'"))?;
        if cents > TOLL_SANITY_CENTS {
            return Err("toll above sanity bound".into());
        }
        Ok(TollFeedRecord {
            timestamp,
            entry_ramp: ident(f[1])?,
            exit_ramp: ident(f[2])?,
            toll: Money::from_cents(cents),
        })
    }

    fn to_fields(&self) -> Vec<String> {
        vec![
            format_timestamp(self.timestamp),
            self.entry_ramp.clone(),
            self.exit_ramp.clone(),
            self.toll.cents().to_string(),
        ]
    }

    fn timestamp(&self) -> NaiveDateTime {
        self.timestamp
    }

    fn series_key(&self) -> String {
        Self::pair_key(&self.entry_ramp, &self.exit_ramp)
    }

    fn identity(&self) -> String {
        self.series_key()
    }

    fn span(&self) -> Duration {
        Duration::minutes(6)
    }
}

impl FeedRecord for SpeedFeedRecord {
    const KIND: FeedKind = FeedKind::Speed;
    const HEADER: &'static [&'static str] = &["segment_id", "timestamp", "speed_mph"];

    fn from_fields(f: &[&str]) -> Result<Self, String> {
        let segment_id = ident(f[0])?;
        let timestamp = parse_timestamp(f[1])?;
        let raw = f[2].trim();
        let speed_mph: f64 = raw.parse().map_err(|_| format!("invalid speed '{raw}'"))?;
        if !speed_mph.is_finite() {
            return Err(format!("invalid speed '{raw}'"));
        }
        if speed_mph <= 0.0 {
            return Err("nonpositive speed".into());
        }
        if speed_mph > SPEED_SANITY_MPH {
            return Err("speed above sanity bound".into());
        }
        Ok(SpeedFeedRecord { segment_id, timestamp, speed_mph })
    }

    fn to_fields(&self) -> Vec<String> {
        vec![self.segment_id.clone(), format_timestamp(self.timestamp), self.speed_mph.to_string()]
    }

    fn timestamp(&self) -> NaiveDateTime {
        self.timestamp
    }

    fn series_key(&self) -> String {
        self.segment_id.clone()
    }

    fn identity(&self) -> String {
        self.segment_id.clone()
    }

    fn span(&self) -> Duration {
        Duration::minutes(1)
    }
}

impl FeedRecord for VolumeFeedRecord {
    const KIND: FeedKind = FeedKind::Volume;
    const HEADER: &'static [&'static str] = &["station_id", "period_start", "lane_id", "count"];

    fn from_fields(f: &[&str]) -> Result<Self, String> {
        let station_id = ident(f[0])?;
        let period_start = parse_timestamp(f[1])?;
        if period_start.minute() % 15 != 0 {
            return Err("unaligned period".into());
        }
        let lane_id = ident(f[2])?;
        let raw = f[3].trim();
        if raw.starts_with('-') {
            return Err("negative count".into());
        }
        let count: u64 = raw.parse().map_err(|_| format!("invalid count '{raw}'"))?;
        Ok(VolumeFeedRecord { station_id, period_start, lane_id, count })
    }

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.station_id.clone(),
            format_timestamp(self.period_start),
            self.lane_id.clone(),
            self.count.to_string(),
        ]
    }

    fn timestamp(&self) -> NaiveDateTime {
        self.period_start
    }

    fn series_key(&self) -> String {
        self.station_id.clone()
    }

    fn identity(&self) -> String {
        format!("{}/{}", self.station_id, self.lane_id)
    }

    fn span(&self) -> Duration {
        Duration::minutes(15)
    }
}
