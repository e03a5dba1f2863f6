//! Flat `key = value` study configuration.
//!
//! Lines are UTF-8, `#` starts a comment, blank lines are ignored. Keys are
//! dotted (`mlp.hidden`, `route.I66.segments`). Keys under `synth.` belong to
//! the scenario generator and are passed through untouched. Every other key
//! must be one of the documented study keys, so a typo fails loudly.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use chrono::{NaiveDate, NaiveTime};
use sha2::{Digest, Sha256};

use super::grid::TimeGrid;
use super::route::{RouteSpec, Segment};
use super::tolling::{validate_windows, Direction, TollingWindow, WeekdaySet};
use super::StudyError;
use crate::models::{ForestParams, LstmParams, MlpParams};

/// What the models forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetKind {
    /// Toll for the configured entry/exit pair, in cents.
    TollPrice,
    /// Fastest alternative minus toll-road travel time, in minutes.
    TravelTimeDifference,
}

impl TargetKind {
    pub fn code(self) -> &'static str {
        match self {
            TargetKind::TollPrice => "toll",
            TargetKind::TravelTimeDifference => "ttdiff",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            TargetKind::TollPrice => "cents",
            TargetKind::TravelTimeDifference => "min",
        }
    }

    /// Smallest |y| kept for percentage metrics: one unit of the target scale.
    pub fn mape_guard(self) -> f64 {
        1.0
    }
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for TargetKind {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "toll" | "tollprice" => Ok(TargetKind::TollPrice),
            "ttdiff" | "tt_diff" | "traveltimedifference" => Ok(TargetKind::TravelTimeDifference),
            other => Err(StudyError::Parse(format!("unknown target kind '{other}'"))),
        }
    }
}

/// Parsed key-value file, before interpretation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self, StudyError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(StudyError::Config { line: n + 1, msg: "expected `key = value`".into() });
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(StudyError::Config { line: n + 1, msg: "empty key".into() });
            }
            if entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(StudyError::Config { line: n + 1, msg: format!("duplicate key '{key}'") });
            }
        }
        Ok(KvConfig { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, StudyError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| StudyError::Parse(format!("{key} = {v}: {e}")))
            })
            .transpose()
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, StudyError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Entries under `prefix.`, with the prefix stripped.
    pub fn section(&self, prefix: &str) -> KvConfig {
        let p = format!("{prefix}.");
        KvConfig {
            entries: self
                .entries
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&p).map(|s| (s.to_string(), v.clone())))
                .collect(),
        }
    }
}

/// Everything a study run needs besides the feed files.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub grid: TimeGrid,
    /// Peak direction being forecast.
    pub direction: Direction,
    pub toll_route: RouteSpec,
    pub alt_routes: Vec<RouteSpec>,
    pub windows: Vec<TollingWindow>,
    pub target_kind: TargetKind,
    pub entry_ramp: String,
    pub exit_ramp: String,
    pub volume_stations: Vec<String>,
    /// Longest gap, in intervals, that forward-fill imputation bridges.
    pub max_gap: usize,
    /// Adds minute-of-day and day-of-week columns to the model inputs.
    pub calendar_features: bool,
    pub forest: ForestParams,
    pub mlp: MlpParams,
    pub lstm: LstmParams,
    pub seed: u64,
}

pub const DEFAULT_START: (i32, u32, u32) = (2018, 7, 1);
pub const DEFAULT_DAYS: usize = 90;

const SCALAR_KEYS: &[&str] = &[
    "seed",
    "grid.start",
    "grid.days",
    "direction",
    "target",
    "window.eb",
    "window.wb",
    "window.days",
    "toll.entry_ramp",
    "toll.exit_ramp",
    "volume.stations",
    "fusion.max_gap",
    "features.calendar",
    "rf.n_trees",
    "rf.max_depth",
    "rf.min_leaf",
    "rf.features_per_split",
    "mlp.hidden",
    "mlp.l2",
    "mlp.batch",
    "mlp.epochs",
    "mlp.patience",
    "mlp.lr",
    "lstm.lookback",
    "lstm.hidden",
    "lstm.dense",
    "lstm.batch",
    "lstm.epochs",
    "lstm.patience",
    "lstm.lr",
    "adam.beta1",
    "adam.beta2",
    "adam.eps",
];

impl StudyConfig {
    /// Built-in study: 90 days from 2018-07-01, eastbound, toll target, the
    /// default three-route corridor and model hyperparameters.
    pub fn default_for(direction: Direction) -> Self {
        Self::from_kv(&KvConfig {
            entries: BTreeMap::from([("direction".to_string(), direction.code().to_string())]),
        })
        .expect("built-in defaults are valid")
    }

    pub fn parse(text: &str) -> Result<Self, StudyError> {
        Self::from_kv(&KvConfig::parse(text)?)
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self, StudyError> {
        for (k, _) in kv.iter() {
            let known = SCALAR_KEYS.contains(&k)
                || k.starts_with("synth.")
                || is_route_key(k);
            if !known {
                return Err(StudyError::Parse(format!("unknown configuration key '{k}'")));
            }
        }

        let (y, m, d) = DEFAULT_START;
        let start: NaiveDate = kv.parsed_or("grid.start", NaiveDate::from_ymd_opt(y, m, d).unwrap())?;
        let days: usize = kv.parsed_or("grid.days", DEFAULT_DAYS)?;
        let grid = TimeGrid::daily(start, days)?;
        let direction: Direction = kv.parsed_or("direction", Direction::Eastbound)?;
        let target_kind = kv.parsed_or("target", TargetKind::TollPrice)?;

        let active: WeekdaySet = kv.parsed_or("window.days", WeekdaySet::WEEKDAYS)?;
        let eb = kv.get("window.eb").unwrap_or("05:30-09:30");
        let wb = kv.get("window.wb").unwrap_or("15:00-19:00");
        let windows = vec![
            parse_window(Direction::Eastbound, eb, active)?,
            parse_window(Direction::Westbound, wb, active)?,
        ];
        validate_windows(&windows)?;

        let (toll_route, alt_routes) = parse_routes(kv, direction)?;

        let defaults = CorridorDefaults::for_direction(direction);
        let entry_ramp = kv.get("toll.entry_ramp").unwrap_or(&defaults.entry).to_string();
        let exit_ramp = kv.get("toll.exit_ramp").unwrap_or(&defaults.exit).to_string();
        let volume_stations = match kv.get("volume.stations") {
            Some(v) => split_list(v),
            None => vec![defaults.station.clone()],
        };
        if volume_stations.is_empty() {
            return Err(StudyError::Parse("volume.stations is empty".into()));
        }

        let forest = ForestParams::from_kv(&kv.section("rf"))?;
        let adam = kv.section("adam");
        let mlp = MlpParams::from_kv(&kv.section("mlp"), &adam)?;
        let lstm = LstmParams::from_kv(&kv.section("lstm"), &adam)?;

        Ok(StudyConfig {
            grid,
            direction,
            toll_route,
            alt_routes,
            windows,
            target_kind,
            entry_ramp,
            exit_ramp,
            volume_stations,
            max_gap: kv.parsed_or("fusion.max_gap", 2)?,
            calendar_features: kv.parsed_or("features.calendar", true)?,
            forest,
            mlp,
            lstm,
            seed: kv.parsed_or("seed", 2018)?,
        })
    }

    pub fn all_routes(&self) -> impl Iterator<Item = &RouteSpec> {
        std::iter::once(&self.toll_route).chain(self.alt_routes.iter())
    }

    /// Canonical resolved form: every key, sorted, defaults made explicit.
    pub fn to_kv_string(&self) -> String {
        let mut kv = BTreeMap::<String, String>::new();
        let mut put = |k: &str, v: String| {
            kv.insert(k.to_string(), v);
        };
        put("seed", self.seed.to_string());
        put("grid.start", self.grid.start().date().to_string());
        put("grid.days", (self.grid.interval_count() / self.grid.intervals_per_day()).to_string());
        put("direction", self.direction.code().into());
        put("target", self.target_kind.code().into());
        for w in &self.windows {
            let key = match w.direction() {
                Direction::Eastbound => "window.eb",
                Direction::Westbound => "window.wb",
            };
            put(key, format!("{}-{}", w.daily_start().format("%H:%M"), w.daily_end().format("%H:%M")));
            put("window.days", w.active_days().to_string());
        }
        put("toll.entry_ramp", self.entry_ramp.clone());
        put("toll.exit_ramp", self.exit_ramp.clone());
        put("volume.stations", self.volume_stations.join(","));
        put("fusion.max_gap", self.max_gap.to_string());
        put("features.calendar", self.calendar_features.to_string());
        for (role, r) in std::iter::once(("toll", &self.toll_route))
            .chain(self.alt_routes.iter().map(|r| ("alt", r)))
        {
            let id = r.route_id();
            put(&format!("route.{id}.role"), role.into());
            put(&format!("route.{id}.direction"), r.direction().code().into());
            let segs: Vec<String> = r
                .segments()
                .iter()
                .map(|s| format!("{}:{}", s.id, s.length_miles))
                .collect();
            put(&format!("route.{id}.segments"), segs.join(","));
        }
        self.forest.write_kv(&mut |k, v| put(&format!("rf.{k}"), v));
        self.mlp.write_kv(&mut |k, v| put(&format!("mlp.{k}"), v));
        self.lstm.write_kv(&mut |k, v| put(&format!("lstm.{k}"), v));
        let a = &self.mlp.adam;
        put("adam.beta1", a.beta1.to_string());
        put("adam.beta2", a.beta2.to_string());
        put("adam.eps", a.eps.to_string());

        let mut out = String::new();
        for (k, v) in kv {
            writeln!(out, "{k} = {v}").expect("write to string");
        }
        out
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_kv_string().as_bytes()))
    }
}

fn is_route_key(k: &str) -> bool {
    let parts: Vec<&str> = k.split('.').collect();
    parts.len() == 3
        && parts[0] == "route"
        && matches!(parts[2], "role" | "direction" | "segments")
}

pub(crate) fn split_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse_window(direction: Direction, v: &str, days: WeekdaySet) -> Result<TollingWindow, StudyError> {
    let (a, b) = v
        .split_once('-')
        .ok_or_else(|| StudyError::Parse(format!("window '{v}' is not HH:MM-HH:MM")))?;
    let t = |s: &str| {
        NaiveTime::parse_from_str(s.trim(), "%H:%M")
            .map_err(|e| StudyError::Parse(format!("window time '{s}': {e}")))
    };
    TollingWindow::new(direction, t(a)?, t(b)?, days)
}

fn parse_routes(kv: &KvConfig, direction: Direction) -> Result<(RouteSpec, Vec<RouteSpec>), StudyError> {
    let routes = kv.section("route");
    let mut ids: Vec<String> = routes
        .iter()
        .filter_map(|(k, _)| k.split_once('.').map(|(id, _)| id.to_string()))
        .collect();
    ids.dedup();
    if ids.is_empty() {
        let d = CorridorDefaults::for_direction(direction);
        return Ok((d.toll_route, d.alt_routes));
    }

    let mut toll = Vec::new();
    let mut alts = Vec::new();
    for id in ids {
        let sec = routes.section(&id);
        let role = sec.get("role").unwrap_or("alt");
        let dir: Direction = sec.parsed_or("direction", direction)?;
        if dir != direction {
            return Err(StudyError::Route(format!(
                "route {id} runs {dir} but the study direction is {direction}"
            )));
        }
        let segs_raw = sec
            .get("segments")
            .ok_or_else(|| StudyError::Route(format!("route {id} has no segments key")))?;
        let mut segments = Vec::new();
        for item in split_list(segs_raw) {
            let (sid, len) = item
                .split_once(':')
                .ok_or_else(|| StudyError::Parse(format!("segment '{item}' is not id:miles")))?;
            let length_miles: f64 = len
                .trim()
                .parse()
                .map_err(|e| StudyError::Parse(format!("segment '{item}': {e}")))?;
            segments.push(Segment { id: sid.trim().to_string(), length_miles });
        }
        let spec = RouteSpec::new(id.clone(), dir, segments)?;
        match role {
            "toll" => toll.push(spec),
            "alt" => alts.push(spec),
            other => return Err(StudyError::Route(format!("route {id} has unknown role '{other}'"))),
        }
    }
    if toll.len() != 1 {
        return Err(StudyError::Route(format!("expected exactly one toll route, found {}", toll.len())));
    }
    if alts.is_empty() {
        return Err(StudyError::Route("at least one alternative route is required".into()));
    }
    let toll = toll.pop().expect("one toll route");
    let mut seen = std::collections::HashSet::new();
    for r in std::iter::once(&toll).chain(&alts) {
        for s in r.segments() {
            if !seen.insert(s.id.clone()) {
                return Err(StudyError::Route(format!("segment {} is shared by two routes", s.id)));
            }
        }
    }
    Ok((toll, alts))
}

/// Built-in three-route corridor: the toll road with 28 segments and two
/// alternatives with 22 and 30.
#[derive(Debug, Clone)]
pub struct CorridorDefaults {
    pub toll_route: RouteSpec,
    pub alt_routes: Vec<RouteSpec>,
    pub entry: String,
    pub exit: String,
    pub station: String,
}

impl CorridorDefaults {
    pub const TOLL_ROUTE: &'static str = "I66";
    pub const ALT_ROUTES: [&'static str; 2] = ["GWPK", "US50"];
    pub const RAMP_COUNT: usize = 8;

    pub fn for_direction(direction: Direction) -> Self {
        let toll_route = default_route(Self::TOLL_ROUTE, direction, 28, 10.0);
        let alt_routes = vec![
            default_route(Self::ALT_ROUTES[0], direction, 22, 12.5),
            default_route(Self::ALT_ROUTES[1], direction, 30, 11.0),
        ];
        CorridorDefaults {
            toll_route,
            alt_routes,
            entry: ramp_id(direction, 1),
            exit: ramp_id(direction, Self::RAMP_COUNT),
            station: format!("VOL-{}-{}", Self::TOLL_ROUTE, direction.code()),
        }
    }
}

pub fn ramp_id(direction: Direction, n: usize) -> String {
    format!("{}-R{n:02}", direction.code())
}

fn default_route(id: &str, direction: Direction, n: usize, total_miles: f64) -> RouteSpec {
    let raw: Vec<f64> = (0..n).map(|i| 0.7 + 0.06 * ((i * 37 % 11) as f64)).collect();
    let scale = total_miles / raw.iter().sum::<f64>();
    let segments = raw
        .iter()
        .enumerate()
        .map(|(i, r)| Segment {
            id: format!("{id}-{}-{:02}", direction.code(), i + 1),
            length_miles: (r * scale * 1000.0).round() / 1000.0,
        })
        .collect();
    RouteSpec::new(id, direction, segments).expect("default route is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_corridor_layout() {
        let c = StudyConfig::default_for(Direction::Eastbound);
        assert_eq!(c.toll_route.segments().len(), 28);
        assert_eq!(c.alt_routes[0].segments().len(), 22);
        assert_eq!(c.alt_routes[1].segments().len(), 30);
        assert!((c.toll_route.total_length() - 10.0).abs() < 0.02);
        assert_eq!(c.grid.interval_count(), 90 * 240);
        assert_eq!(c.target_kind, TargetKind::TollPrice);
        assert_eq!(c.max_gap, 2);
    }

    #[test]
    fn parses_keys_and_comments() {
        let text = "# study\nseed = 7\n\ntarget = ttdiff  # trailing\ngrid.days = 10\nmlp.hidden = 8,8,4,4\nsynth.noise = 0\n";
        let c = StudyConfig::parse(text).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.target_kind, TargetKind::TravelTimeDifference);
        assert_eq!(c.grid.interval_count(), 2400);
        assert_eq!(c.mlp.hidden, [8, 8, 4, 4]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(KvConfig::parse("novalue"), Err(StudyError::Config { line: 1, .. })));
        assert!(KvConfig::parse("a = 1\na = 2").is_err());
        assert!(StudyConfig::parse("mlp.hiden = 1,2,3,4").is_err());
        assert!(StudyConfig::parse("mlp.hidden = 1,2,3").is_err());
        assert!(StudyConfig::parse("window.wb = 08:00-10:00").is_err());
        assert!(StudyConfig::parse("target = speed").is_err());
    }

    #[test]
    fn explicit_routes() {
        let text = "route.A.role = toll\nroute.A.segments = a1:2, a2:3\nroute.B.segments = b1:5\n";
        let c = StudyConfig::parse(text).unwrap();
        assert_eq!(c.toll_route.route_id(), "A");
        assert_eq!(c.alt_routes.len(), 1);
        assert!(StudyConfig::parse("route.A.role = toll\nroute.A.segments = a1:2\n").is_err());
        let shared = "route.A.role = toll\nroute.A.segments = a1:2\nroute.B.segments = a1:5\n";
        assert!(StudyConfig::parse(shared).is_err());
    }

    #[test]
    fn canonical_form_round_trips() {
        let c = StudyConfig::parse("seed = 11\nrf.n_trees = 17\n").unwrap();
        let again = StudyConfig::parse(&c.to_kv_string()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.digest(), again.digest());
        assert_ne!(c.digest(), StudyConfig::default_for(Direction::Eastbound).digest());
    }
}
