//! Directional tolling calendar.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDateTime, NaiveTime, Weekday};

use super::grid::{IntervalIndex, TimeGrid};
use super::StudyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Eastbound,
    Westbound,
}

impl Direction {
    pub fn code(self) -> &'static str {
        match self {
            Direction::Eastbound => "EB",
            Direction::Westbound => "WB",
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Eastbound => Direction::Westbound,
            Direction::Westbound => Direction::Eastbound,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Direction {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EB" | "EASTBOUND" => Ok(Direction::Eastbound),
            "WB" | "WESTBOUND" => Ok(Direction::Westbound),
            other => Err(StudyError::Parse(format!("unknown direction '{other}'"))),
        }
    }
}

/// Bit set over the seven weekdays (bit 0 = Monday).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WeekdaySet(u8);

impl WeekdaySet {
    pub const WEEKDAYS: WeekdaySet = WeekdaySet(0b0001_1111);
    pub const ALL: WeekdaySet = WeekdaySet(0b0111_1111);
    pub const EMPTY: WeekdaySet = WeekdaySet(0);

    pub fn with(self, day: Weekday) -> WeekdaySet {
        WeekdaySet(self.0 | 1 << day.num_days_from_monday())
    }

    pub fn contains(self, day: Weekday) -> bool {
        self.0 & (1 << day.num_days_from_monday()) != 0
    }

    pub fn intersects(self, other: WeekdaySet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn days(self) -> impl Iterator<Item = Weekday> {
        (0..7u8)
            .filter(move |i| self.0 & (1 << i) != 0)
            .map(|i| Weekday::try_from(i).expect("weekday index"))
    }
}

impl fmt::Display for WeekdaySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.days().map(|d| d.to_string()).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for WeekdaySet {
    type Err = StudyError;

    /// Accepts `weekdays`, `all`, or a comma list such as `Mon,Tue,Sat`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weekdays" => return Ok(WeekdaySet::WEEKDAYS),
            "all" | "daily" => return Ok(WeekdaySet::ALL),
            _ => {}
        }
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .try_fold(WeekdaySet::EMPTY, |set, p| {
                p.parse::<Weekday>()
                    .map(|d| set.with(d))
                    .map_err(|_| StudyError::Parse(format!("unknown weekday '{p}'")))
            })
    }
}

/// Daily clock-time span during which one direction is tolled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TollingWindow {
    direction: Direction,
    daily_start: NaiveTime,
    daily_end: NaiveTime,
    active_days: WeekdaySet,
}

impl TollingWindow {
    pub fn new(
        direction: Direction,
        daily_start: NaiveTime,
        daily_end: NaiveTime,
        active_days: WeekdaySet,
    ) -> Result<Self, StudyError> {
        if daily_start >= daily_end {
            return Err(StudyError::Window(format!(
                "{direction} window start {daily_start} is not before end {daily_end}"
            )));
        }
        Ok(TollingWindow { direction, daily_start, daily_end, active_days })
    }

    /// Morning peak, 5:30 to 9:30 AM, weekdays.
    pub fn eastbound_default() -> Self {
        Self::new(Direction::Eastbound, hm(5, 30), hm(9, 30), WeekdaySet::WEEKDAYS)
            .expect("valid default")
    }

    /// Evening peak, 3:00 to 7:00 PM, weekdays.
    pub fn westbound_default() -> Self {
        Self::new(Direction::Westbound, hm(15, 0), hm(19, 0), WeekdaySet::WEEKDAYS)
            .expect("valid default")
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn daily_start(&self) -> NaiveTime {
        self.daily_start
    }

    pub fn daily_end(&self) -> NaiveTime {
        self.daily_end
    }

    pub fn active_days(&self) -> WeekdaySet {
        self.active_days
    }

    /// Clock time in `[daily_start, daily_end)` on an active day.
    pub fn contains(&self, ts: NaiveDateTime) -> bool {
        let t = ts.time();
        self.active_days.contains(ts.weekday()) && t >= self.daily_start && t < self.daily_end
    }

    pub fn minutes_per_day(&self) -> i64 {
        (self.daily_end - self.daily_start).num_minutes()
    }

    fn overlaps(&self, other: &TollingWindow) -> bool {
        self.active_days.intersects(other.active_days)
            && self.daily_start < other.daily_end
            && other.daily_start < self.daily_end
    }
}

fn hm(h: u32, m: u32) -> NaiveTime {
    NaiveTime::from_hms_opt(h, m, 0).expect("valid clock time")
}

/// Rejects schedules where opposite directions are tolled at the same time.
pub fn validate_windows(windows: &[TollingWindow]) -> Result<(), StudyError> {
    for (i, a) in windows.iter().enumerate() {
        for b in &windows[i + 1..] {
            if a.direction != b.direction && a.overlaps(b) {
                return Err(StudyError::Window(format!(
                    "{} window {}-{} overlaps {} window {}-{}",
                    a.direction, a.daily_start, a.daily_end, b.direction, b.daily_start, b.daily_end
                )));
            }
        }
    }
    Ok(())
}

pub fn is_tolling(ts: NaiveDateTime, direction: Direction, windows: &[TollingWindow]) -> bool {
    windows
        .iter()
        .any(|w| w.direction == direction && w.contains(ts))
}

/// Grid indices whose bin start is tolled in `direction`, ascending.
pub fn tolling_intervals(
    grid: &TimeGrid,
    windows: &[TollingWindow],
    direction: Direction,
) -> Vec<IntervalIndex> {
    grid.iter()
        .filter(|&i| is_tolling(grid.timestamp_of(i), direction, windows))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn at(y: i32, mo: u32, d: u32, h: u32, mi: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, mo, d)
            .unwrap()
            .and_hms_opt(h, mi, 0)
            .unwrap()
    }

    fn defaults() -> Vec<TollingWindow> {
        vec![TollingWindow::eastbound_default(), TollingWindow::westbound_default()]
    }

    #[test]
    fn peak_windows() {
        let w = defaults();
        // 2018-07-02 is a Monday
        assert!(is_tolling(at(2018, 7, 2, 6, 0), Direction::Eastbound, &w));
        assert!(!is_tolling(at(2018, 7, 2, 10, 0), Direction::Eastbound, &w));
        assert!(is_tolling(at(2018, 7, 2, 16, 0), Direction::Westbound, &w));
        assert!(!is_tolling(at(2018, 7, 2, 6, 0), Direction::Westbound, &w));
        assert!(is_tolling(at(2018, 7, 2, 5, 30), Direction::Eastbound, &w));
        assert!(!is_tolling(at(2018, 7, 2, 9, 30), Direction::Eastbound, &w));
        // Saturday
        assert!(!is_tolling(at(2018, 7, 7, 6, 0), Direction::Eastbound, &w));
    }

    #[test]
    fn interval_counts() {
        let w = defaults();
        let monday = NaiveDate::from_ymd_opt(2018, 7, 2).unwrap();
        let one = TimeGrid::daily(monday, 1).unwrap();
        assert_eq!(tolling_intervals(&one, &w, Direction::Eastbound).len(), 40);
        let two = TimeGrid::daily(monday, 2).unwrap();
        assert_eq!(tolling_intervals(&two, &w, Direction::Westbound).len(), 80);
        let sunday = TimeGrid::daily(NaiveDate::from_ymd_opt(2018, 7, 1).unwrap(), 1).unwrap();
        assert!(tolling_intervals(&sunday, &w, Direction::Eastbound).is_empty());
    }

    #[test]
    fn per_day_count_matches_window_length() {
        let w = defaults();
        let grid = TimeGrid::daily(NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(), 28).unwrap();
        let eb = tolling_intervals(&grid, &w, Direction::Eastbound);
        let active = grid
            .dates()
            .iter()
            .filter(|d| WeekdaySet::WEEKDAYS.contains(d.weekday()))
            .count();
        assert_eq!(eb.len() as i64, active as i64 * w[0].minutes_per_day() / 6);
    }

    #[test]
    fn window_validation() {
        assert!(TollingWindow::new(Direction::Eastbound, hm(9, 0), hm(8, 0), WeekdaySet::ALL).is_err());
        assert!(validate_windows(&defaults()).is_ok());
        let clash = TollingWindow::new(Direction::Westbound, hm(9, 0), hm(10, 0), WeekdaySet::WEEKDAYS)
            .unwrap();
        assert!(validate_windows(&[TollingWindow::eastbound_default(), clash.clone()]).is_err());
        let weekend_only =
            TollingWindow::new(Direction::Westbound, hm(9, 0), hm(10, 0), "Sat,Sun".parse().unwrap())
                .unwrap();
        assert!(validate_windows(&[TollingWindow::eastbound_default(), weekend_only]).is_ok());
    }

    #[test]
    fn weekday_set_parsing() {
        assert_eq!("weekdays".parse::<WeekdaySet>().unwrap(), WeekdaySet::WEEKDAYS);
        let s: WeekdaySet = "Mon, Sat".parse().unwrap();
        assert!(s.contains(Weekday::Sat) && !s.contains(Weekday::Tue));
        assert!("Funday".parse::<WeekdaySet>().is_err());
        assert_eq!(WeekdaySet::WEEKDAYS.to_string(), "Mon,Tue,Wed,Thu,Fri");
    }
}
