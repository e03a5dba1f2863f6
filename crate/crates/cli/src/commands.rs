use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime};
use log::{info, warn};

use tollcast::eval::{
    evaluate_suite, make_split, parse_boxstats, report_scale, write_charts, MetricsReport, SplitAssignment,
    BOXSTATS_FILE, METRICS_FILE,
};
use tollcast::fusion::{build_feature_table, fuse, observation_at, schema_hash, FeatureTable, FusedSeries, META_FILE, TABLE_FILE};
use tollcast::ingest::{coverage, parse_feed, FeedRecord, FeedReport, SpeedFeedRecord, TollFeedRecord, VolumeFeedRecord};
use tollcast::models::{fit_model, Algorithm, FitInput, ModelArtifact};
use tollcast::study::{is_tolling, tolling_intervals, HorizonIndex, IntervalIndex, KvConfig, StudyConfig, TargetKind};
use tollcast::synth::{generate_scenario, ScenarioConfig};

use crate::failure::Failure;

pub const MODEL_DIR: &str = "models";
pub const REPORT_FILE: &str = "report.md";
pub const MODEL_EXT: &str = "model";

/// Settings and bookkeeping shared by every subcommand.
pub struct Ctx {
    pub kv: KvConfig,
    pub study: StudyConfig,
    pub out: PathBuf,
    pub svg: bool,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Ctx {
    fn read(&mut self, path: &Path) -> Result<BufReader<File>, Failure> {
        let f = File::open(path).map_err(|e| Failure::Data(format!("cannot open {}: {e}", path.display())))?;
        self.inputs.push(path.to_path_buf());
        Ok(BufReader::new(f))
    }

    fn read_string(&mut self, path: &Path) -> Result<String, Failure> {
        let s = fs::read_to_string(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push(path.to_path_buf());
        Ok(s)
    }

    fn write(&mut self, path: PathBuf, body: impl AsRef<[u8]>) -> Result<(), Failure> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, body)?;
        self.outputs.push(path);
        Ok(())
    }
}

pub fn model_file_name(algorithm: Algorithm, target: TargetKind, horizon: HorizonIndex) -> String {
    format!("{}_{}_h{}.{MODEL_EXT}", algorithm.code(), target.code(), horizon.get())
}

pub fn synth(ctx: &mut Ctx) -> Result<(), Failure> {
    let cfg = ScenarioConfig::from_kv(ctx.study.clone(), &ctx.kv)?;
    let scenario = generate_scenario(&cfg)?;
    let files = scenario.write(&ctx.out)?;
    println!(
        "synthetic scenario: {} toll, {} speed, {} volume records over {} days (seed {})",
        scenario.tolls.len(),
        scenario.speeds.len(),
        scenario.volumes.len(),
        ctx.study.grid.dates().len(),
        cfg.seed
    );
    for f in &files {
        println!("  wrote {}", f.display());
    }
    ctx.outputs.extend(files);
    Ok(())
}

struct Feeds {
    tolls: Vec<TollFeedRecord>,
    speeds: Vec<SpeedFeedRecord>,
    volumes: Vec<VolumeFeedRecord>,
    reports: Vec<FeedReport>,
}

fn read_feed<R: FeedRecord>(ctx: &mut Ctx, dir: &Path, keys: Vec<String>) -> Result<(Vec<R>, FeedReport), Failure> {
    let path = dir.join(R::KIND.file_name());
    let (records, report) = parse_feed::<R>(ctx.read(&path)?)?;
    let bins = tolling_intervals(&ctx.study.grid, &ctx.study.windows, ctx.study.direction);
    let cov = coverage(&records, &ctx.study.grid, &keys, &bins);
    Ok((records, report.with_coverage(cov)))
}

fn read_feeds(ctx: &mut Ctx, dir: &Path) -> Result<Feeds, Failure> {
    let s = &ctx.study;
    let pair = vec![TollFeedRecord::pair_key(&s.entry_ramp, &s.exit_ramp)];
    let segments: Vec<String> = s.all_routes().flat_map(|r| r.segments().iter().map(|g| g.id.clone())).collect();
    let stations = s.volume_stations.clone();
    let (tolls, rt) = read_feed::<TollFeedRecord>(ctx, dir, pair)?;
    let (speeds, rs) = read_feed::<SpeedFeedRecord>(ctx, dir, segments)?;
    let (volumes, rv) = read_feed::<VolumeFeedRecord>(ctx, dir, stations)?;
    for r in [&rt, &rs, &rv] {
        if !r.rejected.is_empty() {
            warn!("{} feed: {} rows rejected", r.kind, r.rejected.len());
        }
    }
    Ok(Feeds { tolls, speeds, volumes, reports: vec![rt, rs, rv] })
}

pub fn validate(ctx: &mut Ctx, data: &Path) -> Result<(), Failure> {
    let feeds = read_feeds(ctx, data)?;
    for r in &feeds.reports {
        print!("{r}");
    }
    let worst = feeds.reports.iter().filter_map(FeedReport::min_coverage).fold(1.0, f64::min);
    println!("minimum coverage of tolled bins across all series: {worst:.4}");
    Ok(())
}

fn fused(ctx: &mut Ctx, data: &Path) -> Result<FusedSeries, Failure> {
    let feeds = read_feeds(ctx, data)?;
    Ok(fuse(&ctx.study, &feeds.tolls, &feeds.speeds, &feeds.volumes))
}

pub fn fuse_cmd(ctx: &mut Ctx, data: &Path) -> Result<(), Failure> {
    let series = fused(ctx, data)?;
    let table = build_feature_table(&ctx.study, &series)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    ctx.write(ctx.out.join(TABLE_FILE), csv)?;
    ctx.write(ctx.out.join(META_FILE), table.meta_string())?;
    println!(
        "feature table: {} rows, target {}, schema {}",
        table.rows.len(),
        table.target_kind.code(),
        table.schema_hash
    );
    println!("{}", table.drops);
    Ok(())
}

fn load_table(ctx: &mut Ctx) -> Result<FeatureTable, Failure> {
    let meta = ctx.read_string(&ctx.out.join(META_FILE))?;
    let csv = ctx.read(&ctx.out.join(TABLE_FILE))?;
    Ok(FeatureTable::read(csv, &meta)?)
}

fn schema_mismatch(expected: &str, target: TargetKind, calendar: bool, found: &str) -> Failure {
    Failure::Data(format!(
        "feature schema mismatch: expected {expected} (target={}, calendar={calendar}), table has {found}; re-run fuse",
        target.code()
    ))
}

fn split_for(ctx: &Ctx, table: &FeatureTable) -> Result<SplitAssignment, Failure> {
    Ok(make_split(&table.dates(), ctx.study.seed)?)
}

pub fn train(ctx: &mut Ctx, algo: Algorithm, horizons: &[HorizonIndex], target: Option<TargetKind>) -> Result<(), Failure> {
    let target = target.unwrap_or(ctx.study.target_kind);
    let table = load_table(ctx)?;
    let expected = schema_hash(target, ctx.study.calendar_features);
    if expected != table.schema_hash {
        return Err(schema_mismatch(&expected, target, ctx.study.calendar_features, &table.schema_hash));
    }
    let split = split_for(ctx, &table)?;
    let (train, valid, test) = split.rows(&table);
    info!("split: {} train, {} validation, {} test rows", train.len(), valid.len(), test.len());
    for &h in horizons {
        let input = FitInput { table: &table, train: &train, valid: &valid, horizon: h };
        let (artifact, log) = fit_model::<f64>(algo, input, &ctx.study)?;
        let path = ctx.out.join(MODEL_DIR).join(model_file_name(algo, target, h));
        ctx.write(path.clone(), artifact.to_bytes())?;
        match log {
            Some(l) => println!(
                "{algo} {} min: {} epochs, best epoch {}, validation MAPE {:.4} -> {}",
                h.minutes(),
                l.epochs_run,
                l.best_epoch,
                l.best_val_mape,
                path.display()
            ),
            None => println!("{algo} {} min: {} training rows -> {}", h.minutes(), train.len(), path.display()),
        }
    }
    Ok(())
}

fn load_artifacts(ctx: &mut Ctx, target: TargetKind) -> Result<Vec<ModelArtifact<f64>>, Failure> {
    let dir = ctx.out.join(MODEL_DIR);
    let mut paths: Vec<PathBuf> = match fs::read_dir(&dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == MODEL_EXT))
            .collect(),
        Err(_) => Vec::new(),
    };
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let a = ModelArtifact::<f64>::load(ctx.read(&p)?).map_err(|e| Failure::from(e).context(&p))?;
        if a.meta.target_kind == target {
            out.push(a);
        }
    }
    Ok(out)
}

pub fn evaluate(ctx: &mut Ctx) -> Result<(), Failure> {
    let table = load_table(ctx)?;
    let artifacts = load_artifacts(ctx, table.target_kind)?;
    if artifacts.is_empty() {
        return Err(Failure::Data(format!(
            "no {} models under {}; run train first",
            table.target_kind.code(),
            ctx.out.join(MODEL_DIR).display()
        )));
    }
    for a in &artifacts {
        if a.meta.schema_hash != table.schema_hash {
            return Err(schema_mismatch(&a.meta.schema_hash, a.meta.target_kind, table.calendar_features, &table.schema_hash));
        }
    }
    let split = split_for(ctx, &table)?;
    let report = evaluate_suite(&artifacts, &table, &split)?;
    let files = report.write(&ctx.out, ctx.svg)?;
    println!("evaluated on {} test rows ({} test days)", report.test_rows, split.test_days.len());
    print!("{}", summary_table(&report.metrics, table.target_kind));
    ctx.outputs.extend(files);
    Ok(())
}

fn summary_table(m: &MetricsReport, kind: TargetKind) -> String {
    let unit = if kind == TargetKind::TollPrice { "$" } else { "min" };
    let mut s = format!("| algorithm | horizon (min) | MAE ({unit}) | MAPE | R² | MAE vs persistence |\n|---|---|---|---|---|---|\n");
    for e in m.entries.iter().filter(|e| e.split == tollcast::eval::SplitLabel::Test) {
        let base = m.pooled_test(Algorithm::Persistence, e.horizon).map(|b| b.mae);
        let rel = match base {
            Some(b) if b > 0.0 => format!("{:+.1}%", 100.0 * (e.metrics.mae / b - 1.0)),
            _ => "NA".into(),
        };
        let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.4}"));
        s.push_str(&format!(
            "| {} | {} | {:.4} | {} | {} | {rel} |\n",
            e.algorithm,
            e.horizon.minutes(),
            e.metrics.mae,
            opt(e.metrics.mape),
            opt(e.metrics.r2)
        ));
    }
    s
}

pub fn parse_at(s: &str) -> Result<NaiveDateTime, Failure> {
    ["%Y-%m-%dT%H:%M", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%d %H:%M:%S"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s.trim(), f).ok())
        .ok_or_else(|| Failure::Usage(format!("--at '{s}' is not a timestamp like 2018-07-02T07:30")))
}

pub fn predict(ctx: &mut Ctx, at: NaiveDateTime, data: &Path) -> Result<(), Failure> {
    let s = &ctx.study;
    if !is_tolling(at, s.direction, &s.windows) {
        return Err(Failure::Data(format!(
            "no toll is defined at {at}: it is outside the {} tolling window; choose an in-window timestamp",
            s.direction
        )));
    }
    let target = s.target_kind;
    let expected = schema_hash(target, s.calendar_features);
    let idx = s.grid.interval_of(at)?;
    if s.grid.timestamp_of(idx) != at {
        return Err(Failure::Usage(format!("--at {at} is not on the {}-minute grid", s.grid.step_minutes())));
    }
    let series = fused(ctx, data)?;
    let day = series.grid.date_of(idx);
    let mut history = Vec::new();
    let mut i = idx;
    loop {
        match observation_at(&series, i) {
            Some(o) if o.date() == day => history.push(o),
            _ => break,
        }
        if i.get() == 0 {
            break;
        }
        i = IntervalIndex(i.get() - 1);
    }
    history.reverse();
    let Some(now) = history.last().cloned() else {
        return Err(Failure::Data(format!("features are missing at {at}; cannot predict")));
    };

    let artifacts = load_artifacts(ctx, target)?;
    for a in &artifacts {
        if a.meta.schema_hash != expected {
            return Err(schema_mismatch(&expected, target, ctx.study.calendar_features, &a.meta.schema_hash));
        }
    }
    let mut algos: Vec<Algorithm> = artifacts.iter().map(|a| a.meta.algorithm).filter(|&a| a != Algorithm::Persistence).collect();
    algos.sort();
    algos.dedup();
    if algos.is_empty() {
        return Err(Failure::Data(format!("no trained {} models under {}", target.code(), ctx.out.join(MODEL_DIR).display())));
    }

    let unit = target.unit();
    println!("forecast at {} ({} in {unit}); current value {}", at.format("%Y-%m-%dT%H:%M"), target.code(), now.current(target));
    let mut header = String::from("horizon_min,target_time,persistence");
    for a in &algos {
        header.push(',');
        header.push_str(a.code());
    }
    println!("{header}");
    for h in HorizonIndex::ALL {
        let when = at + Duration::minutes(h.minutes() as i64);
        let mut line = format!("{},{},{}", h.minutes(), when.format("%Y-%m-%dT%H:%M"), now.current(target));
        for &algo in &algos {
            let p = artifacts
                .iter()
                .find(|x| x.meta.algorithm == algo && x.meta.horizon == h)
                .and_then(|x| x.predict_history(&history));
            line.push(',');
            line.push_str(&p.map_or("NA".to_string(), |v| format!("{v:.4}")));
        }
        println!("{line}");
    }
    Ok(())
}

pub fn report(ctx: &mut Ctx) -> Result<(), Failure> {
    let metrics = MetricsReport::from_csv(&ctx.read_string(&ctx.out.join(METRICS_FILE))?)?;
    let boxes = parse_boxstats(&ctx.read_string(&ctx.out.join(BOXSTATS_FILE))?)?;
    let kind = ctx.study.target_kind;
    let mut md = format!("# Forecast evaluation ({})\n\n## Pooled test metrics\n\n", kind.code());
    md.push_str(&summary_table(&metrics, kind));
    md.push_str(&format!(
        "\n## Test error distribution ({})\n\n| algorithm | horizon (min) | whisker low | Q1 | median | Q3 | whisker high | outliers |\n|---|---|---|---|---|---|---|---|\n",
        if report_scale(kind) < 1.0 { "$" } else { "min" }
    ));
    for e in &boxes {
        let d = &e.distribution;
        md.push_str(&format!(
            "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {} |\n",
            e.algorithm,
            e.horizon.minutes(),
            d.whisker_low,
            d.q1,
            d.median,
            d.q3,
            d.whisker_high,
            d.outliers
        ));
    }
    print!("{md}");
    ctx.write(ctx.out.join(REPORT_FILE), md)?;
    if ctx.svg {
        let files = write_charts(&ctx.out, &metrics, &boxes, kind)?;
        ctx.outputs.extend(files);
    }
    Ok(())
}

impl Failure {
    fn context(self, path: &Path) -> Failure {
        match self {
            Failure::Data(m) => Failure::Data(format!("{}: {m}", path.display())),
            other => other,
        }
    }
}
