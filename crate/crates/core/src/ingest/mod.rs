//! Parsing and validation of the toll, segment-speed and volume feeds.
//!
//! Each feed is a UTF-8 CSV file with a mandatory header:
//!
//! | file         | header                                      |
//! |--------------|---------------------------------------------|
//! | `toll.csv`   | `timestamp,entry_ramp,exit_ramp,toll_cents` |
//! | `speed.csv`  | `segment_id,timestamp,speed_mph`            |
//! | `volume.csv` | `station_id,period_start,lane_id,count`     |
//!
//! Timestamps are local wall clock, `YYYY-MM-DDTHH:MM`.

mod parse;
mod records;
mod report;

use thiserror::Error;

pub use parse::{parse_any, parse_feed, write_feed, Feed};
pub use records::{
    format_timestamp, parse_timestamp, FeedKind, FeedRecord, SpeedFeedRecord, TollFeedRecord,
    VolumeFeedRecord, SPEED_SANITY_MPH, TIMESTAMP_FORMAT, TOLL_SANITY_CENTS,
};
pub use report::{coverage, Coverage, DuplicateFlag, FeedReport, Rejection};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{kind} feed is empty")]
    Empty { kind: FeedKind },
    #[error("{kind} feed header mismatch: expected `{expected}`, found `{found}`")]
    Header {
        kind: FeedKind,
        expected: String,
        found: String,
    },
    #[error("{kind} feed: {source}")]
    Csv {
        kind: FeedKind,
        #[source]
        source: csv::Error,
    },
    #[error("{kind} feed: {source}")]
    Io {
        kind: FeedKind,
        #[source]
        source: std::io::Error,
    },
}
