//! `tollcast`: synthesize, validate, fuse, train, evaluate, predict and
//! report from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3
//! numerical failure.

mod commands;
mod failure;
mod manifest;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use tollcast::models::Algorithm;
use tollcast::study::{HorizonIndex, KvConfig, StudyConfig, TargetKind};

use commands::Ctx;
use failure::Failure;
use manifest::{digests, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "tollcast", version, about = "Multi-horizon toll and travel-time-difference forecasting")]
struct Cli {
    /// Study configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Working directory for every input and output file.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Also write SVG charts (evaluate, report).
    #[arg(long, global = true)]
    svg: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scenario: toll.csv, speed.csv, volume.csv.
    Synth,
    /// Parse the three feeds and report rejects and coverage.
    Validate {
        /// Directory holding the feeds (default: --out).
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Fuse the feeds into features.csv.
    Fuse {
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Fit one algorithm for one or all horizons.
    Train {
        #[arg(long, value_enum)]
        algo: AlgoArg,
        /// 1..5 (6 to 30 minutes ahead) or `all`.
        #[arg(long, default_value = "all", value_parser = parse_horizons)]
        horizon: Horizons,
        #[arg(long, value_enum)]
        target: Option<TargetArg>,
    },
    /// Score every trained model against persistence on the test days.
    Evaluate,
    /// Forecast the five horizons after a tolled timestamp.
    Predict {
        /// Local timestamp, e.g. 2018-07-02T07:30.
        #[arg(long, value_name = "TIMESTAMP")]
        at: String,
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Summarize metrics.csv and errors_boxstats.csv into report.md.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Validate { .. } => "validate",
            Command::Fuse { .. } => "fuse",
            Command::Train { .. } => "train",
            Command::Evaluate => "evaluate",
            Command::Predict { .. } => "predict",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgoArg {
    Persistence,
    Rf,
    Mlp,
    Lstm,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Persistence => Algorithm::Persistence,
            AlgoArg::Rf => Algorithm::RandomForest,
            AlgoArg::Mlp => Algorithm::Mlp,
            AlgoArg::Lstm => Algorithm::Lstm,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TargetArg {
    Toll,
    Ttdiff,
}

impl From<TargetArg> for TargetKind {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Toll => TargetKind::TollPrice,
            TargetArg::Ttdiff => TargetKind::TravelTimeDifference,
        }
    }
}

#[derive(Debug, Clone)]
struct Horizons(Vec<HorizonIndex>);

fn parse_horizons(s: &str) -> Result<Horizons, String> {
    if s == "all" {
        return Ok(Horizons(HorizonIndex::ALL.to_vec()));
    }
    let h: u8 = s.parse().map_err(|_| format!("expected 1..5 or all, got '{s}'"))?;
    HorizonIndex::new(h).map(|h| Horizons(vec![h])).map_err(|e| e.to_string())
}

fn load_config(cli: &Cli) -> Result<(KvConfig, Vec<PathBuf>), Failure> {
    let (mut kv, inputs) = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Usage(format!("cannot read --config {}: {e}", p.display())))?;
            (KvConfig::parse(&text)?, vec![p.clone()])
        }
        None => (KvConfig::default(), Vec::new()),
    };
    if let Some(seed) = cli.seed {
        kv.set("seed", seed.to_string());
    }
    Ok((kv, inputs))
}

fn dispatch(cli: &Cli, ctx: &mut Ctx) -> Result<(), Failure> {
    let data = |d: &Option<PathBuf>| d.clone().unwrap_or_else(|| cli.out.clone());
    match &cli.command {
        Command::Synth => commands::synth(ctx),
        Command::Validate { data: d } => commands::validate(ctx, &data(d)),
        Command::Fuse { data: d } => commands::fuse_cmd(ctx, &data(d)),
        Command::Train { algo, horizon, target } => {
            commands::train(ctx, (*algo).into(), &horizon.0, target.map(Into::into))
        }
        Command::Evaluate => commands::evaluate(ctx),
        Command::Predict { at, data: d } => {
            let at = commands::parse_at(at)?;
            commands::predict(ctx, at, &data(d))
        }
        Command::Report => commands::report(ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let started = Instant::now();

    let mut config_inputs = Vec::new();
    let mut digest = String::new();
    let mut seed = 0;
    let result = load_config(&cli).and_then(|(kv, inputs)| {
        config_inputs = inputs;
        let study = StudyConfig::from_kv(&kv)?;
        digest = study.digest();
        seed = study.seed;
        let mut ctx = Ctx { kv, study, out: cli.out.clone(), svg: cli.svg, inputs: Vec::new(), outputs: Vec::new() };
        let r = dispatch(&cli, &mut ctx);
        Ok((ctx.inputs, ctx.outputs, r))
    });
    let (inputs, outputs, outcome) = match result {
        Ok((i, o, r)) => (i, o, r),
        Err(e) => (Vec::new(), Vec::new(), Err(e)),
    };
    let exit_code = outcome.as_ref().err().map_or(0, Failure::exit_code);
    if let Err(e) = &outcome {
        eprintln!("tollcast {}: {e}", cli.command.name());
    }

    let mut all_inputs = config_inputs;
    all_inputs.extend(inputs);
    let m = RunManifest {
        command: cli.command.name().to_string(),
        args: std::env::args().skip(1).collect(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: digest,
        seed,
        inputs: digests(&all_inputs),
        outputs: digests(&outputs),
        exit_code,
        error: outcome.err().map(|e| e.to_string()),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    if let Err(e) = m.write(&cli.out) {
        eprintln!("tollcast: could not write run manifest: {e}");
    }
    ExitCode::from(exit_code)
}
