use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use chrono::NaiveDateTime;

use crate::study::{IntervalIndex, TimeGrid};

use super::records::{FeedKind, FeedRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    /// 1-based line in the source file.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateFlag {
    pub line: u64,
    pub superseded_by: u64,
    pub key: String,
    pub timestamp: NaiveDateTime,
}

/// Outcome of parsing and checking one feed.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedReport {
    pub kind: FeedKind,
    pub total_rows: usize,
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
    pub duplicates: Vec<DuplicateFlag>,
    /// Per series: fraction of expected bins holding at least one record.
    pub coverage: BTreeMap<String, f64>,
}

impl FeedReport {
    pub fn with_coverage(mut self, cov: Coverage) -> Self {
        self.coverage = cov.per_key;
        self
    }

    pub fn min_coverage(&self) -> Option<f64> {
        self.coverage.values().copied().reduce(f64::min)
    }
}

impl fmt::Display for FeedReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: {} rows, {} accepted, {} rejected, {} duplicates",
            self.kind,
            self.total_rows,
            self.accepted,
            self.rejected.len(),
            self.duplicates.len()
        )?;
        for r in self.rejected.iter().take(20) {
            writeln!(f, "  line {}: {}", r.line, r.reason)?;
        }
        if self.rejected.len() > 20 {
            writeln!(f, "  ... {} more", self.rejected.len() - 20)?;
        }
        if let Some(min) = self.min_coverage() {
            let mean = self.coverage.values().sum::<f64>() / self.coverage.len() as f64;
            writeln!(f, "  coverage over {} series: min {min:.4}, mean {mean:.4}", self.coverage.len())?;
        }
        Ok(())
    }
}

/// Per-series coverage of a set of expected grid bins.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Coverage {
    pub per_key: BTreeMap<String, f64>,
    /// (series identity, timestamp) pairs seen more than once.
    pub duplicates: Vec<(String, NaiveDateTime)>,
}

/// Fraction of `expected_bins` that hold at least one record, for each of
/// `expected_keys`. A record covers every bin whose start falls in its span.
/// Keys with no records get 0; records of other keys are ignored.
pub fn coverage<R: FeedRecord>(
    records: &[R],
    grid: &TimeGrid,
    expected_keys: &[String],
    expected_bins: &[IntervalIndex],
) -> Coverage {
    let expected: BTreeSet<IntervalIndex> = expected_bins.iter().copied().collect();
    let mut hit: HashMap<&str, BTreeSet<IntervalIndex>> =
        expected_keys.iter().map(|k| (k.as_str(), BTreeSet::new())).collect();
    let mut seen: HashMap<(String, NaiveDateTime), usize> = HashMap::new();

    let step = grid.step();
    for r in records {
        *seen.entry((r.identity(), r.timestamp())).or_default() += 1;
        let key = r.series_key();
        let Some(bins) = hit.get_mut(key.as_str()) else {
            continue;
        };
        let start = r.timestamp();
        let Ok(first) = grid.interval_of(start) else {
            continue;
        };
        if r.span() < step {
            // sub-bin records cover the bin they fall in
            if expected.contains(&first) {
                bins.insert(first);
            }
            continue;
        }
        let end = start + r.span();
        let mut idx = first;
        if grid.timestamp_of(idx) < start {
            idx = idx.offset(1);
        }
        while grid.contains(idx) && grid.timestamp_of(idx) < end {
            if expected.contains(&idx) {
                bins.insert(idx);
            }
            idx = idx.offset(1);
        }
    }

    let denom = expected.len().max(1) as f64;
    let per_key = expected_keys
        .iter()
        .map(|k| (k.clone(), hit[k.as_str()].len() as f64 / denom))
        .collect();
    let mut duplicates: Vec<(String, NaiveDateTime)> =
        seen.into_iter().filter(|(_, n)| *n > 1).map(|(k, _)| k).collect();
    duplicates.sort();
    Coverage { per_key, duplicates }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{SpeedFeedRecord, VolumeFeedRecord};
    use chrono::{Duration, NaiveDate};

    fn grid(days: usize) -> TimeGrid {
        TimeGrid::daily(NaiveDate::from_ymd_opt(2018, 7, 2).unwrap(), days).unwrap()
    }

    fn speeds(g: &TimeGrid, skip_day: Option<usize>) -> Vec<SpeedFeedRecord> {
        let minutes = g.interval_count() as i64 * 6;
        (0..minutes)
            .filter(|m| skip_day.is_none_or(|d| *m / 1440 != d as i64))
            .map(|m| SpeedFeedRecord {
                segment_id: "s1".into(),
                timestamp: g.start() + Duration::minutes(m),
                speed_mph: 50.0,
            })
            .collect()
    }

    #[test]
    fn full_feed_covers_everything() {
        let g = grid(2);
        let bins: Vec<IntervalIndex> = g.iter().collect();
        let c = coverage(&speeds(&g, None), &g, &["s1".into()], &bins);
        assert_eq!(c.per_key["s1"], 1.0);
        assert!(c.duplicates.is_empty());
    }

    #[test]
    fn missing_day_out_of_ten() {
        let g = grid(10);
        let bins: Vec<IntervalIndex> = g.iter().collect();
        let c = coverage(&speeds(&g, Some(4)), &g, &["s1".into(), "s2".into()], &bins);
        assert!((c.per_key["s1"] - 0.9).abs() < 1e-12);
        assert_eq!(c.per_key["s2"], 0.0);
    }

    #[test]
    fn duplicate_minute_flagged() {
        let g = grid(1);
        let mut recs = speeds(&g, None);
        recs.push(recs[10].clone());
        let bins: Vec<IntervalIndex> = g.iter().collect();
        let c = coverage(&recs, &g, &["s1".into()], &bins);
        assert_eq!(c.duplicates, vec![("s1".to_string(), recs[10].timestamp)]);
    }

    #[test]
    fn volume_periods_cover_overlapping_bins() {
        let g = grid(1);
        let rec = VolumeFeedRecord {
            station_id: "V".into(),
            period_start: g.start(),
            lane_id: "L1".into(),
            count: 10,
        };
        let bins: Vec<IntervalIndex> = g.iter().collect();
        let c = coverage(&[rec], &g, &["V".into()], &bins);
        // bins starting at :00, :06, :12 begin inside the first 15 minutes
        assert!((c.per_key["V"] - 3.0 / 240.0).abs() < 1e-12);
    }
}
