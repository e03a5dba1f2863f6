use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::fusion::FeatureTable;
use crate::models::{Algorithm, ArtifactMeta, FittedModel, ModelArtifact};
use crate::num::Real;
use crate::study::{HorizonIndex, TargetKind};

use super::boxstats::{error_distribution, ErrorDistribution};
use super::metrics::{compute_metrics, Metrics};
use super::split::{Split, SplitAssignment};
use super::svg;
use super::EvalError;

pub const METRICS_FILE: &str = "metrics.csv";
pub const BOXSTATS_FILE: &str = "errors_boxstats.csv";
pub const SCATTER_FILE: &str = "scatter_toll_vs_ttdiff.csv";
pub const MAE_SVG_FILE: &str = "mae_by_horizon.svg";
pub const BOX_SVG_FILE: &str = "errors_box.svg";

/// Factor from table units to reported units: dollars for tolls, minutes
/// for travel-time differences.
pub fn report_scale(kind: TargetKind) -> f64 {
    match kind {
        TargetKind::TollPrice => 0.01,
        TargetKind::TravelTimeDifference => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum SplitLabel {
    Test,
    Train,
    TestDay(NaiveDate),
}

impl std::fmt::Display for SplitLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitLabel::Test => f.write_str("test"),
            SplitLabel::Train => f.write_str("train"),
            SplitLabel::TestDay(d) => write!(f, "test@{d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsEntry {
    pub algorithm: Algorithm,
    pub horizon: HorizonIndex,
    pub split: SplitLabel,
    /// MAE in reported units.
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub entries: Vec<MetricsEntry>,
}

impl MetricsReport {
    pub fn get(&self, algorithm: Algorithm, horizon: HorizonIndex, split: &SplitLabel) -> Option<&Metrics> {
        self.entries
            .iter()
            .find(|e| e.algorithm == algorithm && e.horizon == horizon && &e.split == split)
            .map(|e| &e.metrics)
    }

    pub fn pooled_test(&self, algorithm: Algorithm, horizon: HorizonIndex) -> Option<&Metrics> {
        self.get(algorithm, horizon, &SplitLabel::Test)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("algorithm,horizon_min,split,mae,mape,r2\n");
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                e.algorithm,
                e.horizon.minutes(),
                e.split,
                e.metrics.mae,
                opt(e.metrics.mape),
                opt(e.metrics.r2)
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionEntry {
    pub algorithm: Algorithm,
    pub horizon: HorizonIndex,
    /// Test-row errors (actual − predicted) in reported units.
    pub distribution: ErrorDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub timestamp: chrono::NaiveDateTime,
    pub split: Option<Split>,
    pub toll_cents: u64,
    pub tt_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub target_kind: TargetKind,
    pub metrics: MetricsReport,
    pub distributions: Vec<DistributionEntry>,
    pub scatter: Vec<ScatterPoint>,
    /// Rows every artifact could predict, by split.
    pub test_rows: usize,
    pub train_rows: usize,
}

fn persistence_for<T: Real>(table: &FeatureTable, horizon: HorizonIndex) -> ModelArtifact<T> {
    ModelArtifact {
        meta: ArtifactMeta {
            algorithm: Algorithm::Persistence,
            target_kind: table.target_kind,
            horizon,
            schema_hash: table.schema_hash.clone(),
            seed: 0,
            feature_names: table.feature_names().iter().map(|s| s.to_string()).collect(),
            standardizer: None,
            target_scale: T::one(),
            train_days: Vec::new(),
            train_rows: 0,
        },
        model: FittedModel::Persistence,
    }
}

/// Scores every artifact on the rows all of them can predict. A
/// persistence artifact is supplied for any horizon lacking one.
pub fn evaluate_suite<T: Real>(
    artifacts: &[ModelArtifact<T>],
    table: &FeatureTable,
    split: &SplitAssignment,
) -> Result<SuiteReport, EvalError> {
    if artifacts.is_empty() {
        return Err(EvalError::Missing("no artifacts to evaluate".into()));
    }
    let mut seen = BTreeSet::new();
    for a in artifacts {
        a.check_schema(table)?;
        if a.meta.target_kind != table.target_kind {
            return Err(EvalError::Missing(format!(
                "{} artifact predicts {}, table target is {}",
                a.meta.algorithm,
                a.meta.target_kind.code(),
                table.target_kind.code()
            )));
        }
        if !seen.insert((a.meta.algorithm, a.meta.horizon)) {
            return Err(EvalError::Missing(format!(
                "duplicate artifact for {} at {} min",
                a.meta.algorithm,
                a.meta.horizon.minutes()
            )));
        }
    }
    let horizons: BTreeSet<HorizonIndex> = artifacts.iter().map(|a| a.meta.horizon).collect();
    let baselines: Vec<ModelArtifact<T>> = horizons
        .iter()
        .filter(|&&h| !seen.contains(&(Algorithm::Persistence, h)))
        .map(|&h| persistence_for(table, h))
        .collect();
    let mut all: Vec<&ModelArtifact<T>> = artifacts.iter().chain(&baselines).collect();
    all.sort_by_key(|a| (a.meta.algorithm, a.meta.horizon));

    let predictions: Vec<Vec<Option<f64>>> = all
        .iter()
        .map(|a| Ok(a.predict_table(table)?.into_iter().map(|p| p.map(|v| v.as_f64())).collect()))
        .collect::<Result<_, EvalError>>()?;

    let n = table.rows.len();
    let common: Vec<bool> = (0..n).map(|r| predictions.iter().all(|p| p[r].is_some())).collect();
    let (train, _, test) = split.rows(table);
    let train: Vec<usize> = train.into_iter().filter(|&r| common[r]).collect();
    let test: Vec<usize> = test.into_iter().filter(|&r| common[r]).collect();
    if test.len() < 4 {
        return Err(EvalError::Missing(format!("only {} test rows are predictable by every model", test.len())));
    }
    let test_days: BTreeSet<NaiveDate> = test.iter().map(|&r| table.rows[r].obs.date()).collect();

    let kind = table.target_kind;
    let scale = report_scale(kind);
    let guard = kind.mape_guard();
    let mut entries = Vec::new();
    let mut distributions = Vec::new();
    for (a, pred) in all.iter().zip(&predictions) {
        let slot = a.meta.horizon.slot();
        let pair = |rows: &[usize]| -> (Vec<f64>, Vec<f64>) {
            rows.iter().map(|&r| (table.rows[r].targets[slot], pred[r].expect("common row"))).unzip()
        };
        let score = |rows: &[usize]| -> Result<Metrics, EvalError> {
            let (y, p) = pair(rows);
            let mut m = compute_metrics(&y, &p, guard)?;
            m.mae *= scale;
            Ok(m)
        };
        let mut push = |split: SplitLabel, metrics: Metrics| {
            entries.push(MetricsEntry { algorithm: a.meta.algorithm, horizon: a.meta.horizon, split, metrics })
        };
        push(SplitLabel::Test, score(&test)?);
        if train.len() >= 2 {
            push(SplitLabel::Train, score(&train)?);
        }
        for &d in &test_days {
            let rows: Vec<usize> = test.iter().copied().filter(|&r| table.rows[r].obs.date() == d).collect();
            if rows.len() >= 2 {
                push(SplitLabel::TestDay(d), score(&rows)?);
            }
        }
        let (y, p) = pair(&test);
        let errors: Vec<f64> = y.iter().zip(&p).map(|(a, b)| (a - b) * scale).collect();
        distributions.push(DistributionEntry {
            algorithm: a.meta.algorithm,
            horizon: a.meta.horizon,
            distribution: error_distribution(&errors)?,
        });
    }

    let scatter = table
        .rows
        .iter()
        .map(|r| ScatterPoint {
            timestamp: r.obs.timestamp,
            split: split.which(r.obs.date()),
            toll_cents: r.obs.toll_now.cents(),
            tt_diff: r.obs.tt_diff,
        })
        .collect();
    Ok(SuiteReport {
        target_kind: kind,
        metrics: MetricsReport { entries },
        distributions,
        scatter,
        test_rows: test.len(),
        train_rows: train.len(),
    })
}

impl SuiteReport {
    pub fn boxstats_csv(&self) -> String {
        let mut s = String::from("algorithm,horizon_min,min,whisker_low,q1,median,q3,whisker_high,max,outliers\n");
        for e in &self.distributions {
            let d = &e.distribution;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                e.algorithm,
                e.horizon.minutes(),
                d.min,
                d.whisker_low,
                d.q1,
                d.median,
                d.q3,
                d.whisker_high,
                d.max,
                d.outliers
            );
        }
        s
    }

    pub fn scatter_csv(&self) -> String {
        let mut s = String::from("timestamp,split,toll_cents,tt_diff_min\n");
        for p in &self.scatter {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                p.timestamp.format("%Y-%m-%dT%H:%M:%S"),
                p.split.map_or("none", Split::code),
                p.toll_cents,
                p.tt_diff
            );
        }
        s
    }

    /// Writes the report files into `dir`, returning their paths.
    pub fn write(&self, dir: &Path, with_svg: bool) -> Result<Vec<PathBuf>, EvalError> {
        fs::create_dir_all(dir)?;
        let files = vec![
            (METRICS_FILE, self.metrics.to_csv()),
            (BOXSTATS_FILE, self.boxstats_csv()),
            (SCATTER_FILE, self.scatter_csv()),
        ];
        let mut out = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body)?;
            out.push(path);
        }
        if with_svg {
            out.extend(write_charts(dir, &self.metrics, &self.distributions, self.target_kind)?);
        }
        Ok(out)
    }
}

/// Writes the MAE bar chart and the error box plot into `dir`.
pub fn write_charts(
    dir: &Path,
    metrics: &MetricsReport,
    distributions: &[DistributionEntry],
    kind: TargetKind,
) -> Result<Vec<PathBuf>, EvalError> {
    let bars = dir.join(MAE_SVG_FILE);
    fs::write(&bars, svg::mae_bars(metrics, kind))?;
    let boxes = dir.join(BOX_SVG_FILE);
    fs::write(&boxes, svg::error_boxes(distributions, kind))?;
    Ok(vec![bars, boxes])
}

fn csv_rows<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>, EvalError> {
    let mut lines = text.lines();
    let found = lines.next().unwrap_or("");
    if found != header {
        return Err(EvalError::Missing(format!("expected header '{header}', found '{found}'")));
    }
    Ok(lines.enumerate().filter(|(_, l)| !l.is_empty()).map(|(i, l)| (i + 2, l.split(',').collect())))
}

fn field<T: std::str::FromStr>(line: usize, v: &str) -> Result<T, EvalError> {
    v.parse().map_err(|_| EvalError::Missing(format!("line {line}: bad value '{v}'")))
}

fn horizon_field(line: usize, v: &str) -> Result<HorizonIndex, EvalError> {
    let m: u32 = field(line, v)?;
    u8::try_from(m / crate::study::STEP_MINUTES)
        .ok()
        .filter(|_| m.is_multiple_of(crate::study::STEP_MINUTES))
        .and_then(|h| HorizonIndex::new(h).ok())
        .ok_or_else(|| EvalError::Missing(format!("line {line}: bad horizon '{v}'")))
}

fn algo_field(line: usize, v: &str) -> Result<Algorithm, EvalError> {
    v.parse().map_err(|e: String| EvalError::Missing(format!("line {line}: {e}")))
}

impl MetricsReport {
    /// Reads the format written by [`MetricsReport::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut entries = Vec::new();
        for (line, f) in csv_rows(text, "algorithm,horizon_min,split,mae,mape,r2")? {
            if f.len() != 6 {
                return Err(EvalError::Missing(format!("line {line}: expected 6 fields")));
            }
            let split = match f[2] {
                "test" => SplitLabel::Test,
                "train" => SplitLabel::Train,
                other => match other.strip_prefix("test@") {
                    Some(d) => SplitLabel::TestDay(field(line, d)?),
                    None => return Err(EvalError::Missing(format!("line {line}: bad split '{other}'"))),
                },
            };
            let opt = |v: &str| -> Result<Option<f64>, EvalError> {
                if v == "NA" {
                    Ok(None)
                } else {
                    field(line, v).map(Some)
                }
            };
            entries.push(MetricsEntry {
                algorithm: algo_field(line, f[0])?,
                horizon: horizon_field(line, f[1])?,
                split,
                metrics: Metrics { n: 0, mae: field(line, f[3])?, mape: opt(f[4])?, r2: opt(f[5])? },
            });
        }
        Ok(MetricsReport { entries })
    }
}

/// Reads the format written by [`SuiteReport::boxstats_csv`].
pub fn parse_boxstats(text: &str) -> Result<Vec<DistributionEntry>, EvalError> {
    let mut out = Vec::new();
    for (line, f) in csv_rows(text, "algorithm,horizon_min,min,whisker_low,q1,median,q3,whisker_high,max,outliers")? {
        if f.len() != 10 {
            return Err(EvalError::Missing(format!("line {line}: expected 10 fields")));
        }
        let v = |i: usize| field::<f64>(line, f[i]);
        out.push(DistributionEntry {
            algorithm: algo_field(line, f[0])?,
            horizon: horizon_field(line, f[1])?,
            distribution: ErrorDistribution {
                min: v(2)?,
                whisker_low: v(3)?,
                q1: v(4)?,
                median: v(5)?,
                q3: v(6)?,
                whisker_high: v(7)?,
                max: v(8)?,
                outliers: field(line, f[9])?,
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const METRICS: &str = "\
algorithm,horizon_min,split,mae,mape,r2
persistence,6,test,0.25,0.1,NA
rf,30,test@2018-07-11,0.125,NA,0.5
";

    #[test]
    fn metrics_csv_round_trip() {
        let m = MetricsReport::from_csv(METRICS).unwrap();
        assert_eq!(m.entries[1].split, SplitLabel::TestDay(NaiveDate::from_ymd_opt(2018, 7, 11).unwrap()));
        assert_eq!(m.entries[0].metrics.r2, None);
        assert_eq!(m.entries[1].metrics.mape, None);
        assert_eq!(m.to_csv(), METRICS);
    }

    #[test]
    fn malformed_metrics_are_refused() {
        for bad in [
            "algorithm,horizon,split,mae,mape,r2\n",
            "algorithm,horizon_min,split,mae,mape,r2\nrf,7,test,1,1,1\n",
            "algorithm,horizon_min,split,mae,mape,r2\nsvm,6,test,1,1,1\n",
            "algorithm,horizon_min,split,mae,mape,r2\nrf,6,valid,1,1,1\n",
            "algorithm,horizon_min,split,mae,mape,r2\nrf,6,test,x,1,1\n",
        ] {
            assert!(MetricsReport::from_csv(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn report_units() {
        assert_eq!(report_scale(TargetKind::TollPrice), 0.01);
        assert_eq!(report_scale(TargetKind::TravelTimeDifference), 1.0);
        assert_eq!(SplitLabel::Train.to_string(), "train");
    }
}
