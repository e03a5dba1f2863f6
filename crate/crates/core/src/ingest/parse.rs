use std::collections::HashMap;
use std::io::{Read, Write};

use csv::{ReaderBuilder, StringRecord, WriterBuilder};

use super::records::{FeedKind, FeedRecord, SpeedFeedRecord, TollFeedRecord, VolumeFeedRecord};
use super::report::{DuplicateFlag, FeedReport, Rejection};
use super::IngestError;

/// Parses one CSV feed. Malformed rows are rejected with their line number;
/// of several rows with the same identity and timestamp the last one wins and
/// the earlier ones are rejected and flagged. Output is sorted by timestamp
/// then identity.
pub fn parse_feed<R: FeedRecord>(input: impl Read) -> Result<(Vec<R>, FeedReport), IngestError> {
    let kind = R::KIND;
    let mut reader = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);

    let mut raw = StringRecord::new();
    let header_ok = match reader.read_record(&mut raw) {
        Ok(true) => true,
        Ok(false) => return Err(IngestError::Empty { kind }),
        Err(e) if e.is_io_error() => return Err(IngestError::Csv { kind, source: e }),
        Err(_) => false,
    };
    let found: Vec<String> = raw.iter().map(|s| s.trim().to_string()).collect();
    let found = found.iter().map(|s| s.trim_start_matches('\u{feff}')).collect::<Vec<_>>();
    if !header_ok || found != R::HEADER {
        return Err(IngestError::Header {
            kind,
            expected: R::HEADER.join(","),
            found: found.join(","),
        });
    }

    let mut accepted: Vec<(u64, R)> = Vec::new();
    let mut rejected = Vec::new();
    let mut total = 0usize;
    loop {
        let line_hint = reader.position().line() + 1;
        match reader.read_record(&mut raw) {
            Ok(false) => break,
            Ok(true) => {
                total += 1;
                let line = raw.position().map(|p| p.line()).unwrap_or(line_hint);
                if raw.len() != R::HEADER.len() {
                    rejected.push(Rejection {
                        line,
                        reason: format!("expected {} fields, found {}", R::HEADER.len(), raw.len()),
                    });
                    continue;
                }
                let fields: Vec<&str> = raw.iter().collect();
                match R::from_fields(&fields) {
                    Ok(rec) => accepted.push((line, rec)),
                    Err(reason) => rejected.push(Rejection { line, reason }),
                }
            }
            Err(e) if e.is_io_error() => return Err(IngestError::Csv { kind, source: e }),
            Err(e) => {
                total += 1;
                let line = e.position().map(|p| p.line()).unwrap_or(line_hint);
                rejected.push(Rejection { line, reason: format!("unreadable row: {e}") });
            }
        }
    }
    if total == 0 {
        return Err(IngestError::Empty { kind });
    }

    // last occurrence of each (identity, timestamp) wins
    let mut last: HashMap<(String, chrono::NaiveDateTime), u64> = HashMap::new();
    for (line, rec) in &accepted {
        last.insert((rec.identity(), rec.timestamp()), *line);
    }
    let mut duplicates = Vec::new();
    let mut kept = Vec::with_capacity(accepted.len());
    for (line, rec) in accepted {
        let key = (rec.identity(), rec.timestamp());
        let winner = last[&key];
        if winner == line {
            kept.push(rec);
        } else {
            duplicates.push(DuplicateFlag { line, superseded_by: winner, key: key.0, timestamp: key.1 });
            rejected.push(Rejection { line, reason: format!("duplicate superseded by line {winner}") });
        }
    }
    kept.sort_by(|a, b| a.timestamp().cmp(&b.timestamp()).then_with(|| a.identity().cmp(&b.identity())));
    rejected.sort_by_key(|r| r.line);

    let report = FeedReport {
        kind,
        total_rows: total,
        accepted: kept.len(),
        rejected,
        duplicates,
        coverage: Default::default(),
    };
    Ok((kept, report))
}

/// Writes records with the canonical header.
pub fn write_feed<R: FeedRecord>(records: &[R], out: impl Write) -> Result<(), IngestError> {
    let mut w = WriterBuilder::new().from_writer(out);
    let io = |e: csv::Error| IngestError::Csv { kind: R::KIND, source: e };
    w.write_record(R::HEADER).map_err(io)?;
    for r in records {
        w.write_record(r.to_fields()).map_err(io)?;
    }
    w.flush().map_err(|e| IngestError::Io { kind: R::KIND, source: e })?;
    Ok(())
}

/// Records of any feed kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Feed {
    Toll(Vec<TollFeedRecord>),
    Speed(Vec<SpeedFeedRecord>),
    Volume(Vec<VolumeFeedRecord>),
}

impl Feed {
    pub fn len(&self) -> usize {
        match self {
            Feed::Toll(r) => r.len(),
            Feed::Speed(r) => r.len(),
            Feed::Volume(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dispatches [`parse_feed`] on a runtime kind.
pub fn parse_any(kind: FeedKind, input: impl Read) -> Result<(Feed, FeedReport), IngestError> {
    Ok(match kind {
        FeedKind::Toll => {
            let (r, rep) = parse_feed::<TollFeedRecord>(input)?;
            (Feed::Toll(r), rep)
        }
        FeedKind::Speed => {
            let (r, rep) = parse_feed::<SpeedFeedRecord>(input)?;
            (Feed::Speed(r), rep)
        }
        FeedKind::Volume => {
            let (r, rep) = parse_feed::<VolumeFeedRecord>(input)?;
            (Feed::Volume(r), rep)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::Money;

    const TOLL: &str = "timestamp,entry_ramp,exit_ramp,toll_cents\n\
        2018-07-02T05:36,EB-R01,EB-R08,550\n\
        2018-07-02T05:30,EB-R01,EB-R08,500\n\
        2018-07-02T05:42,EB-R01,EB-R08,575\n";

    #[test]
    fn well_formed_toll_file() {
        let (recs, rep) = parse_feed::<TollFeedRecord>(TOLL.as_bytes()).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(rep.accepted, 3);
        assert!(rep.rejected.is_empty());
        assert_eq!(recs[0].toll, Money::from_cents(500));
        assert!(recs.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    }

    #[test]
    fn speed_rejections_are_line_numbered() {
        let text = "segment_id,timestamp,speed_mph\n\
            s1,2018-07-02T05:30,55.5\n\
            s1,2018-07-02T05:31,-5\n\
            s1,2018-07-02T05:32,150\n\
            s1,not-a-time,50\n\
            s1,2018-07-02T05:33\n\
            s1,2018-07-02T05:34,NaN\n";
        let (recs, rep) = parse_feed::<SpeedFeedRecord>(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(rep.accepted + rep.rejected.len(), rep.total_rows);
        let reasons: Vec<(u64, &str)> = rep.rejected.iter().map(|r| (r.line, r.reason.as_str())).collect();
        assert_eq!(reasons[0], (3, "nonpositive speed"));
        assert_eq!(reasons[1], (4, "speed above sanity bound"));
        assert!(reasons[2].1.starts_with("bad timestamp"));
        assert!(reasons[3].1.starts_with("expected 3 fields"));
        assert!(reasons[4].1.starts_with("invalid speed"));
    }

    #[test]
    fn volume_unaligned_period() {
        let text = "station_id,period_start,lane_id,count\n\
            V1,2018-07-02T05:07,L1,10\n\
            V1,2018-07-02T05:15,L1,-3\n\
            V1,2018-07-02T05:30,L1,12\n";
        let (recs, rep) = parse_feed::<VolumeFeedRecord>(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(rep.rejected[0].reason, "unaligned period");
        assert_eq!(rep.rejected[1].reason, "negative count");
    }

    #[test]
    fn toll_bounds_and_alignment() {
        let text = "timestamp,entry_ramp,exit_ramp,toll_cents\n\
            2018-07-02T05:31,A,B,500\n\
            2018-07-02T05:36,A,B,5001\n\
            2018-07-02T05:42,A,B,4.5\n\
            2018-07-02T05:48,,B,100\n";
        let (recs, rep) = parse_feed::<TollFeedRecord>(text.as_bytes()).unwrap();
        assert!(recs.is_empty());
        let reasons: Vec<&str> = rep.rejected.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(reasons[0], "unaligned timestamp");
        assert_eq!(reasons[1], "toll above sanity bound");
        assert!(reasons[2].starts_with("invalid toll"));
        assert_eq!(reasons[3], "empty identifier");
    }

    #[test]
    fn fatal_header_and_empty() {
        assert!(matches!(
            parse_feed::<TollFeedRecord>("".as_bytes()),
            Err(IngestError::Empty { .. })
        ));
        assert!(matches!(
            parse_feed::<TollFeedRecord>("timestamp,entry_ramp,exit_ramp,toll_cents\n".as_bytes()),
            Err(IngestError::Empty { .. })
        ));
        let bad = "time,entry,exit,toll\n2018-07-02T05:30,A,B,1\n";
        let err = parse_feed::<TollFeedRecord>(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("timestamp,entry_ramp,exit_ramp,toll_cents"));
    }

    #[test]
    fn duplicates_keep_last() {
        let text = "segment_id,timestamp,speed_mph\n\
            s1,2018-07-02T05:30,40\n\
            s1,2018-07-02T05:30,45\n\
            s2,2018-07-02T05:30,50\n";
        let (recs, rep) = parse_feed::<SpeedFeedRecord>(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].speed_mph, 45.0);
        assert_eq!(rep.duplicates.len(), 1);
        assert_eq!(rep.duplicates[0].line, 2);
        assert_eq!(rep.duplicates[0].superseded_by, 3);
        assert_eq!(rep.accepted + rep.rejected.len(), 3);
    }

    #[test]
    fn quoted_fields() {
        let text = "timestamp,entry_ramp,exit_ramp,toll_cents\n\"2018-07-02T05:30\",\"EB,R01\",EB-R08,\"500\"\n";
        let (recs, _) = parse_feed::<TollFeedRecord>(text.as_bytes()).unwrap();
        assert_eq!(recs[0].entry_ramp, "EB,R01");
        let mut out = Vec::new();
        write_feed(&recs, &mut out).unwrap();
        let (again, _) = parse_feed::<TollFeedRecord>(out.as_slice()).unwrap();
        assert_eq!(again, recs);
    }

    #[test]
    fn parse_is_idempotent() {
        let a = parse_feed::<TollFeedRecord>(TOLL.as_bytes()).unwrap();
        let b = parse_feed::<TollFeedRecord>(TOLL.as_bytes()).unwrap();
        assert_eq!(a, b);
        let (feed, _) = parse_any(FeedKind::Toll, TOLL.as_bytes()).unwrap();
        assert_eq!(feed.len(), 3);
    }

    mod props {
        use super::*;
        use chrono::{Duration, NaiveDate};
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn speed_round_trip(
                rows in proptest::collection::btree_map(
                    (0u32..3, 0i64..500),
                    0.1f64..120.0,
                    1..40,
                )
            ) {
                let base = NaiveDate::from_ymd_opt(2019, 1, 7).unwrap().and_hms_opt(0, 0, 0).unwrap();
                let mut recs: Vec<SpeedFeedRecord> = rows
                    .into_iter()
                    .map(|((seg, minute), v)| SpeedFeedRecord {
                        segment_id: format!("seg{seg}"),
                        timestamp: base + Duration::minutes(minute),
                        speed_mph: v,
                    })
                    .collect();
                recs.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.segment_id.cmp(&b.segment_id)));
                let mut buf = Vec::new();
                write_feed(&recs, &mut buf).unwrap();
                let (back, rep) = parse_feed::<SpeedFeedRecord>(buf.as_slice()).unwrap();
                prop_assert!(rep.rejected.is_empty());
                prop_assert_eq!(back, recs);
            }

            #[test]
            fn volume_round_trip(
                rows in proptest::collection::btree_map((0u32..2, 0u32..3, 0i64..96), 0u64..5000, 1..30)
            ) {
                let base = NaiveDate::from_ymd_opt(2019, 1, 7).unwrap().and_hms_opt(0, 0, 0).unwrap();
                let mut recs: Vec<VolumeFeedRecord> = rows
                    .into_iter()
                    .map(|((st, lane, p), count)| VolumeFeedRecord {
                        station_id: format!("V{st}"),
                        period_start: base + Duration::minutes(15 * p),
                        lane_id: format!("L{lane}"),
                        count,
                    })
                    .collect();
                recs.sort_by(|a, b| a.period_start.cmp(&b.period_start).then(a.identity().cmp(&b.identity())));
                let mut buf = Vec::new();
                write_feed(&recs, &mut buf).unwrap();
                let (back, _) = parse_feed::<VolumeFeedRecord>(buf.as_slice()).unwrap();
                prop_assert_eq!(back, recs);
            }
        }
    }
}
