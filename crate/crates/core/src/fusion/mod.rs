//! Feed fusion: per-segment minute speeds become route travel times, lane
//! counts become a 6-minute volume series, and the aligned series become a
//! feature table with five horizon targets per row.

mod fused;
mod series;
mod speed;
mod table;
mod volume;

use std::fmt;

use thiserror::Error;

pub use fused::{fuse, FusedSeries};
pub use series::{impute_series, Series};
pub use speed::{aggregate_minutes_to_interval, route_travel_time, space_mean_speed, travel_time_difference};
pub use table::{
    build_feature_table, feature_names, observation_at, schema_hash, FeatureRow, FeatureTable, Observation,
    CSV_HEADER, META_FILE, TABLE_FILE,
};
pub use volume::{lane_totals, resample_volume, station_volume, VOLUME_PERIOD_MINUTES};

/// Why candidate rows were left out of a feature table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropCounts {
    pub candidates: usize,
    pub dst_ambiguous: usize,
    pub missing_features: usize,
    pub target_off_window: usize,
    pub missing_target: usize,
    pub target_below_guard: usize,
}

impl DropCounts {
    pub fn dropped(&self) -> usize {
        self.dst_ambiguous
            + self.missing_features
            + self.target_off_window
            + self.missing_target
            + self.target_below_guard
    }
}

impl fmt::Display for DropCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} candidate intervals; dropped: dst_ambiguous={} missing_features={} target_off_window={} \
             missing_target={} target_below_guard={}",
            self.candidates,
            self.dst_ambiguous,
            self.missing_features,
            self.target_off_window,
            self.missing_target,
            self.target_below_guard
        )
    }
}

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("empty segment list")]
    NoSegments,
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error("feature table is empty ({0})")]
    EmptyTable(DropCounts),
    #[error("feature table format: {0}")]
    Format(String),
    #[error("schema hash mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("feature table csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("feature table io: {0}")]
    Io(#[from] std::io::Error),
}
