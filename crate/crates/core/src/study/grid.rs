//! The 6-minute wall-clock grid every series lives on.

use std::fmt;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike, Weekday};

use super::StudyError;

/// Minutes per grid step.
pub const STEP_MINUTES: u32 = 6;
/// Minutes per day.
pub const MINUTES_PER_DAY: u32 = 1440;
/// Grid bins per day at the fixed 6-minute step.
pub const INTERVALS_PER_DAY: usize = (MINUTES_PER_DAY / STEP_MINUTES) as usize;

/// Zero-based position of a bin on a [`TimeGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IntervalIndex(pub usize);

impl IntervalIndex {
    pub fn get(self) -> usize {
        self.0
    }

    /// The index `steps` bins later.
    pub fn offset(self, steps: usize) -> IntervalIndex {
        IntervalIndex(self.0 + steps)
    }
}

impl fmt::Display for IntervalIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Forecast lead in grid steps; `h` means `t + 6h` minutes, `h` in `1..=5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HorizonIndex(u8);

impl HorizonIndex {
    pub const MAX: u8 = 5;

    pub const ALL: [HorizonIndex; 5] = [
        HorizonIndex(1),
        HorizonIndex(2),
        HorizonIndex(3),
        HorizonIndex(4),
        HorizonIndex(5),
    ];

    pub fn new(h: u8) -> Result<Self, StudyError> {
        if (1..=Self::MAX).contains(&h) {
            Ok(HorizonIndex(h))
        } else {
            Err(StudyError::Horizon(h))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn steps(self) -> usize {
        self.0 as usize
    }

    pub fn minutes(self) -> u32 {
        self.0 as u32 * STEP_MINUTES
    }

    /// Position in a `[_; 5]` per-horizon array.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for HorizonIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}", self.0)
    }
}

/// Fixed-step discretization of local wall-clock time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeGrid {
    start: NaiveDateTime,
    step_minutes: u32,
    interval_count: usize,
}

impl TimeGrid {
    /// Builds a grid. `step_minutes` must divide a day and `start` must sit on a
    /// step boundary so that bins line up with clock time on every day.
    pub fn new(
        start: NaiveDateTime,
        step_minutes: u32,
        interval_count: usize,
    ) -> Result<Self, StudyError> {
        if step_minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(step_minutes) {
            return Err(StudyError::Grid(format!(
                "step of {step_minutes} min does not divide a day"
            )));
        }
        if interval_count == 0 {
            return Err(StudyError::Grid("grid must have at least one interval".into()));
        }
        let minute_of_day = start.hour() * 60 + start.minute();
        if start.second() != 0 || start.nanosecond() != 0 || !minute_of_day.is_multiple_of(step_minutes) {
            return Err(StudyError::Grid(format!(
                "grid start {start} is not on a {step_minutes}-minute boundary"
            )));
        }
        Ok(TimeGrid { start, step_minutes, interval_count })
    }

    /// A 6-minute grid covering `days` whole days from midnight of `first_day`.
    pub fn daily(first_day: NaiveDate, days: usize) -> Result<Self, StudyError> {
        Self::new(first_day.and_time(NaiveTime::MIN), STEP_MINUTES, days * INTERVALS_PER_DAY)
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn step_minutes(&self) -> u32 {
        self.step_minutes
    }

    pub fn step(&self) -> Duration {
        Duration::minutes(self.step_minutes as i64)
    }

    pub fn interval_count(&self) -> usize {
        self.interval_count
    }

    pub fn intervals_per_day(&self) -> usize {
        (MINUTES_PER_DAY / self.step_minutes) as usize
    }

    /// Exclusive end of the grid span.
    pub fn end(&self) -> NaiveDateTime {
        self.start + self.step() * self.interval_count as i32
    }

    pub fn contains(&self, idx: IntervalIndex) -> bool {
        idx.0 < self.interval_count
    }

    /// Bin containing `ts`: `floor((ts - start) / step)`.
    pub fn interval_of(&self, ts: NaiveDateTime) -> Result<IntervalIndex, StudyError> {
        if ts < self.start || ts >= self.end() {
            return Err(StudyError::OutOfSpan {
                ts,
                start: self.start,
                end: self.end(),
            });
        }
        let secs = (ts - self.start).num_seconds();
        let idx = secs / (self.step_minutes as i64 * 60);
        Ok(IntervalIndex(idx as usize))
    }

    /// Start of bin `idx`. Defined for any index, including past the span.
    pub fn timestamp_of(&self, idx: IntervalIndex) -> NaiveDateTime {
        self.start + Duration::minutes(idx.0 as i64 * self.step_minutes as i64)
    }

    pub fn iter(&self) -> impl Iterator<Item = IntervalIndex> + '_ {
        (0..self.interval_count).map(IntervalIndex)
    }

    /// Calendar day each bin belongs to, counted from the grid's first date.
    pub fn date_of(&self, idx: IntervalIndex) -> NaiveDate {
        self.timestamp_of(idx).date()
    }

    /// Distinct dates touched by the grid, in order.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let first = self.start.date();
        let last = (self.end() - Duration::seconds(1)).date();
        first.iter_days().take_while(|d| *d <= last).collect()
    }

    /// Bins that cannot be mapped one-to-one onto real instants in the
    /// corridor zone (US Eastern rules): the skipped spring-forward hour and
    /// the repeated fall-back hour.
    pub fn dst_ambiguous_bins(&self) -> Vec<IntervalIndex> {
        let mut out = Vec::new();
        for date in self.dates() {
            let Some(hour) = eastern_transition_hour(date) else {
                continue;
            };
            let lo = date.and_hms_opt(hour, 0, 0).expect("valid hour");
            let hi = lo + Duration::hours(1);
            // bins are aligned to the hour, so overlap means the bin starts inside it
            out.extend(self.iter().filter(|&i| {
                let t = self.timestamp_of(i);
                t >= lo && t < hi
            }));
        }
        out
    }
}

/// Hour whose wall-clock bins are nonexistent or repeated on a DST transition
/// date in America/New_York (2007+ rules), if `date` is one.
pub fn eastern_transition_hour(date: NaiveDate) -> Option<u32> {
    let spring = nth_weekday(date.year(), 3, Weekday::Sun, 2);
    let fall = nth_weekday(date.year(), 11, Weekday::Sun, 1);
    if date == spring {
        Some(2)
    } else if date == fall {
        Some(1)
    } else {
        None
    }
}

fn nth_weekday(year: i32, month: u32, weekday: Weekday, n: u8) -> NaiveDate {
    NaiveDate::from_weekday_of_month_opt(year, month, weekday, n).expect("valid weekday of month")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M").unwrap()
    }

    fn july() -> TimeGrid {
        TimeGrid::daily(NaiveDate::from_ymd_opt(2018, 7, 1).unwrap(), 3).unwrap()
    }

    #[test]
    fn interval_of_examples() {
        let g = july();
        assert_eq!(g.interval_of(ts("2018-07-01 00:00")).unwrap(), IntervalIndex(0));
        assert_eq!(g.interval_of(ts("2018-07-01 00:11")).unwrap(), IntervalIndex(1));
        assert!(matches!(
            g.interval_of(ts("2018-06-30 23:59")),
            Err(StudyError::OutOfSpan { .. })
        ));
        assert!(g.interval_of(ts("2018-07-04 00:00")).is_err());
        assert_eq!(g.interval_of(ts("2018-07-03 23:59")).unwrap(), IntervalIndex(719));
    }

    #[test]
    fn day_has_240_bins() {
        assert_eq!(INTERVALS_PER_DAY, 240);
        assert_eq!(july().interval_count(), 720);
        assert_eq!(july().dates().len(), 3);
    }

    #[test]
    fn rejects_bad_steps_and_starts() {
        let start = ts("2018-07-01 00:00");
        assert!(TimeGrid::new(start, 7, 10).is_err());
        assert!(TimeGrid::new(start, 6, 0).is_err());
        assert!(TimeGrid::new(ts("2018-07-01 00:03"), 6, 10).is_err());
        assert!(TimeGrid::new(ts("2018-07-01 00:12"), 6, 10).is_ok());
    }

    #[test]
    fn horizons() {
        let mins: Vec<u32> = HorizonIndex::ALL.iter().map(|h| h.minutes()).collect();
        assert_eq!(mins, vec![6, 12, 18, 24, 30]);
        assert!(HorizonIndex::new(0).is_err());
        assert!(HorizonIndex::new(6).is_err());
    }

    #[test]
    fn dst_bins_on_transition_days() {
        // 2019-03-10 spring forward, 2019-11-03 fall back
        let g = TimeGrid::daily(NaiveDate::from_ymd_opt(2019, 3, 9).unwrap(), 2).unwrap();
        let bins = g.dst_ambiguous_bins();
        assert_eq!(bins.len(), 10);
        assert_eq!(g.timestamp_of(bins[0]), ts("2019-03-10 02:00"));
        let g = TimeGrid::daily(NaiveDate::from_ymd_opt(2019, 11, 3).unwrap(), 1).unwrap();
        let bins = g.dst_ambiguous_bins();
        assert_eq!(g.timestamp_of(bins[0]), ts("2019-11-03 01:00"));
        assert_eq!(bins.len(), 10);
        assert!(july().dst_ambiguous_bins().is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bin_brackets_timestamp(offset in 0i64..(3 * 1440 * 60)) {
                let g = july();
                let t = g.start() + Duration::seconds(offset);
                let idx = g.interval_of(t).unwrap();
                let lo = g.timestamp_of(idx);
                prop_assert!(lo <= t);
                prop_assert!(t < lo + g.step());
            }

            #[test]
            fn index_timestamp_bijective(i in 0usize..720) {
                let g = july();
                prop_assert_eq!(g.interval_of(g.timestamp_of(IntervalIndex(i))).unwrap(), IntervalIndex(i));
            }
        }
    }
}
