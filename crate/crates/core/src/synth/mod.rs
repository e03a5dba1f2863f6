//! Seeded synthetic corridor: demand, speed–flow, a feedback toll
//! controller, and the three feed files they produce.

mod model;
mod scenario;

use std::str::FromStr;

use thiserror::Error;

use crate::study::{KvConfig, Money, StudyConfig, StudyError};

pub use model::{
    deterministic_demand, gen_demand, speed_from_flow, split_lanes, toll_controller_step, SPEED_FLOOR_MPH,
    TARGET_SPEED_MPH,
};
pub use scenario::{generate_scenario, FlowIntegral, Scenario, META_FILE};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error("scenario io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandParams {
    /// Off-peak demand, vehicles per hour.
    pub baseline: f64,
    pub peak_amplitude: f64,
    /// Minute of day of the peak.
    pub peak_center_min: f64,
    /// Standard deviation of the peak, minutes.
    pub peak_width_min: f64,
    /// Multiplier on the deterministic part on Saturdays and Sundays.
    pub weekend_factor: f64,
    /// Per-interval AR(1) coefficient of the disturbance.
    pub ar_coef: f64,
    /// Innovation standard deviation, vehicles per hour.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficParams {
    /// Toll-road capacity, vehicles per hour.
    pub capacity: f64,
    pub free_flow: f64,
    pub alt_capacity: f64,
    pub alt_free_flow: f64,
    /// Alternative-route background load at peak demand, as a fraction of
    /// its capacity; it follows the demand process.
    pub alt_load: f64,
    /// Share of diverted toll-road demand taken by the alternatives.
    pub diversion: f64,
    /// Demand on the toll road decays as `exp(-elasticity · toll_dollars)`.
    pub elasticity: f64,
    /// Standard deviation of per-segment, per-minute speed noise, mph.
    pub speed_jitter: f64,
    pub lanes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    /// Cents per mph of speed shortfall, per interval.
    pub gain: f64,
    pub toll_min: Money,
    pub toll_max: Money,
    pub step: Money,
    /// Standard deviation of the additive noise, cents.
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Standard,
    /// A weak peak and persistent demand noise: the travel-time difference
    /// moves slowly around a steady level.
    FlatTtDiff,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(Preset::Standard),
            "flat_ttdiff" => Ok(Preset::FlatTtDiff),
            _ => Err(format!("unknown preset '{s}' (expected standard or flat_ttdiff)")),
        }
    }
}

impl Preset {
    fn code(self) -> &'static str {
        match self {
            Preset::Standard => "standard",
            Preset::FlatTtDiff => "flat_ttdiff",
        }
    }
}

/// Everything that determines a generated scenario. Corridor layout, span
/// and tolling windows come from the study configuration.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub study: StudyConfig,
    pub seed: u64,
    pub preset: Preset,
    pub demand: DemandParams,
    pub traffic: TrafficParams,
    pub controller: ControllerParams,
}

pub const SYNTH_KEYS: &[&str] = &[
    "synth.seed",
    "synth.preset",
    "synth.baseline",
    "synth.peak_amplitude",
    "synth.peak_center",
    "synth.peak_width",
    "synth.weekend_factor",
    "synth.ar_coef",
    "synth.noise",
    "synth.capacity",
    "synth.free_flow",
    "synth.alt_capacity",
    "synth.alt_free_flow",
    "synth.alt_load",
    "synth.diversion",
    "synth.elasticity",
    "synth.speed_jitter",
    "synth.lanes",
    "synth.gain",
    "synth.toll_min",
    "synth.toll_max",
    "synth.toll_noise",
];

fn parse_clock(v: &str) -> Result<f64, SynthError> {
    let (h, m) = v
        .split_once(':')
        .ok_or_else(|| SynthError::Invalid(format!("synth.peak_center '{v}' is not HH:MM")))?;
    let h: u32 = h.trim().parse().map_err(|_| SynthError::Invalid(format!("bad hour in '{v}'")))?;
    let m: u32 = m.trim().parse().map_err(|_| SynthError::Invalid(format!("bad minute in '{v}'")))?;
    if h > 23 || m > 59 {
        return Err(SynthError::Invalid(format!("synth.peak_center '{v}' out of range")));
    }
    Ok((h * 60 + m) as f64)
}

impl ScenarioConfig {
    /// Study defaults plus the built-in preset.
    pub fn new(study: StudyConfig, preset: Preset) -> Self {
        Self::from_kv(study, &KvConfig::parse(&format!("synth.preset = {}", preset.code())).expect("literal"))
            .expect("built-in presets are valid")
    }

    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let kv = KvConfig::parse(text)?;
        Self::from_kv(StudyConfig::from_kv(&kv)?, &kv)
    }

    /// Reads the `synth.` keys of `kv` on top of the preset's defaults.
    pub fn from_kv(study: StudyConfig, kv: &KvConfig) -> Result<Self, SynthError> {
        for (k, _) in kv.iter() {
            if k.starts_with("synth.") && !SYNTH_KEYS.contains(&k) {
                return Err(SynthError::Invalid(format!("unknown configuration key '{k}'")));
            }
        }
        let preset: Preset = kv
            .get("synth.preset")
            .map(str::parse)
            .transpose()
            .map_err(SynthError::Invalid)?
            .unwrap_or(Preset::Standard);
        let window = study
            .windows
            .iter()
            .find(|w| w.direction() == study.direction)
            .ok_or_else(|| SynthError::Invalid(format!("no tolling window for {}", study.direction)))?;
        let to_min = |t: chrono::NaiveTime| {
            use chrono::Timelike;
            (t.hour() * 60 + t.minute()) as f64
        };
        let mid = 0.5 * (to_min(window.daily_start()) + to_min(window.daily_end()));

        let flat = preset == Preset::FlatTtDiff;
        let f = |key: &str, default: f64| kv.parsed_or::<f64>(key, default);
        let demand = DemandParams {
            baseline: f("synth.baseline", if flat { 1200.0 } else { 1500.0 })?,
            peak_amplitude: f("synth.peak_amplitude", if flat { 200.0 } else { 3500.0 })?,
            peak_center_min: match kv.get("synth.peak_center") {
                Some(v) => parse_clock(v)?,
                None => mid,
            },
            peak_width_min: f("synth.peak_width", 45.0)?,
            weekend_factor: f("synth.weekend_factor", 0.5)?,
            ar_coef: f("synth.ar_coef", if flat { 0.9 } else { 0.8 })?,
            noise: f("synth.noise", if flat { 100.0 } else { 120.0 })?,
        };
        let traffic = TrafficParams {
            capacity: f("synth.capacity", 3600.0)?,
            free_flow: f("synth.free_flow", 65.0)?,
            alt_capacity: f("synth.alt_capacity", 4000.0)?,
            alt_free_flow: f("synth.alt_free_flow", 45.0)?,
            alt_load: f("synth.alt_load", if flat { 0.7 } else { 0.5 })?,
            diversion: f("synth.diversion", 0.5)?,
            elasticity: f("synth.elasticity", 0.3)?,
            speed_jitter: f("synth.speed_jitter", if flat { 0.5 } else { 1.5 })?,
            lanes: kv.parsed_or("synth.lanes", 2usize)?,
        };
        let controller = ControllerParams {
            gain: f("synth.gain", 8.0)?,
            toll_min: Money::from_cents(kv.parsed_or("synth.toll_min", 50u64)?),
            toll_max: Money::from_cents(kv.parsed_or("synth.toll_max", 4000u64)?),
            step: Money::from_cents(25),
            noise: f("synth.toll_noise", 5.0)?,
        };
        let seed = kv.parsed_or("synth.seed", study.seed)?;
        let cfg = ScenarioConfig { study, seed, preset, demand, traffic, controller };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Invalid(m.to_string()));
        let (d, t, c) = (&self.demand, &self.traffic, &self.controller);
        if !(0.0..1.0).contains(&d.ar_coef) {
            return bad("synth.ar_coef must be in [0, 1)");
        }
        if d.baseline < 0.0 || d.peak_amplitude < 0.0 || d.noise < 0.0 || d.weekend_factor < 0.0 {
            return bad("demand parameters must be non-negative");
        }
        if d.peak_width_min <= 0.0 {
            return bad("synth.peak_width must be positive");
        }
        if t.capacity <= 0.0 || t.alt_capacity <= 0.0 {
            return bad("capacities must be positive");
        }
        if !(t.free_flow > SPEED_FLOOR_MPH && t.free_flow <= 100.0 && t.alt_free_flow > SPEED_FLOOR_MPH && t.alt_free_flow <= 100.0) {
            return bad("free-flow speeds must lie in (5, 100] mph");
        }
        if t.alt_load < 0.0 || !(0.0..=1.0).contains(&t.diversion) || t.elasticity < 0.0 || t.speed_jitter < 0.0 {
            return bad("traffic parameters out of range");
        }
        if t.lanes == 0 {
            return bad("synth.lanes must be at least 1");
        }
        if !(c.toll_min > Money::ZERO && c.toll_min < c.toll_max) {
            return bad("toll bounds must satisfy 0 < toll_min < toll_max");
        }
        if c.toll_max.cents() > crate::ingest::TOLL_SANITY_CENTS {
            return bad("synth.toll_max exceeds the feed sanity bound");
        }
        if c.toll_min.cents() % c.step.cents() != 0 || c.toll_max.cents() % c.step.cents() != 0 {
            return bad("toll bounds must be multiples of 25 cents");
        }
        if c.gain < 0.0 || c.noise < 0.0 {
            return bad("controller parameters must be non-negative");
        }
        Ok(())
    }

    /// Resolved `synth.` keys, sorted.
    pub fn to_kv_string(&self) -> String {
        let (d, t, c) = (&self.demand, &self.traffic, &self.controller);
        let center = d.peak_center_min.round() as u32;
        let lines = [
            ("synth.alt_capacity", t.alt_capacity.to_string()),
            ("synth.alt_free_flow", t.alt_free_flow.to_string()),
            ("synth.alt_load", t.alt_load.to_string()),
            ("synth.ar_coef", d.ar_coef.to_string()),
            ("synth.baseline", d.baseline.to_string()),
            ("synth.capacity", t.capacity.to_string()),
            ("synth.diversion", t.diversion.to_string()),
            ("synth.elasticity", t.elasticity.to_string()),
            ("synth.free_flow", t.free_flow.to_string()),
            ("synth.gain", c.gain.to_string()),
            ("synth.lanes", t.lanes.to_string()),
            ("synth.noise", d.noise.to_string()),
            ("synth.peak_amplitude", d.peak_amplitude.to_string()),
            ("synth.peak_center", format!("{:02}:{:02}", center / 60, center % 60)),
            ("synth.peak_width", d.peak_width_min.to_string()),
            ("synth.preset", self.preset.code().to_string()),
            ("synth.seed", self.seed.to_string()),
            ("synth.speed_jitter", t.speed_jitter.to_string()),
            ("synth.toll_max", c.toll_max.cents().to_string()),
            ("synth.toll_min", c.toll_min.cents().to_string()),
            ("synth.toll_noise", c.noise.to_string()),
            ("synth.weekend_factor", d.weekend_factor.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
