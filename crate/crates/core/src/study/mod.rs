//! Time discretization, tolling calendar, route geometry, money and study
//! configuration shared by every other module.

mod config;
mod grid;
mod money;
mod route;
mod tolling;

use chrono::NaiveDateTime;
use thiserror::Error;

pub use config::{ramp_id, CorridorDefaults, KvConfig, StudyConfig, TargetKind};
pub(crate) use config::split_list;
pub use grid::{
    eastern_transition_hour, HorizonIndex, IntervalIndex, TimeGrid, INTERVALS_PER_DAY,
    MINUTES_PER_DAY, STEP_MINUTES,
};
pub use money::Money;
pub use route::{RouteSpec, Segment};
pub use tolling::{is_tolling, tolling_intervals, validate_windows, Direction, TollingWindow, WeekdaySet};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("timestamp {ts} outside grid span [{start}, {end})")]
    OutOfSpan {
        ts: NaiveDateTime,
        start: NaiveDateTime,
        end: NaiveDateTime,
    },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("horizon {0} not in 1..=5")]
    Horizon(u8),
    #[error("invalid tolling window: {0}")]
    Window(String),
    #[error("invalid route: {0}")]
    Route(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("{0}")]
    Parse(String),
}
