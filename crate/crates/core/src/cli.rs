//! The `behavcal` command line.
//!
//! Settings resolve as: command-line flag, then the `--config` file
//! (`key = value` lines, keys named like the long flags with `_` for `-`),
//! then built-in defaults. `BEHAVCAL_CONFIG` supplies a default config path.
//! Every file written with `--out` gets a `<out>.config.json` sidecar holding
//! the resolved settings, which is enough to replay the run.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::behavior::{self, LogBase, ThresholdGrid};
use crate::claims::Aggregation;
use crate::config::parse_key_values;
use crate::error::{Error, Result};
use crate::metrics::{self, MetricOptions};
use crate::model::{self, Dataset};
use crate::rewards::{self, decide, RewardKind, RiskPrior};
use crate::simulate::{self, AgentSpec, RNG_ALGORITHM};
use crate::tts::{self, Strategy};

pub const CONFIG_ENV: &str = "BEHAVCAL_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "behavcal",
    version,
    about = "Behavioral calibration toolkit",
    after_help = "Settings precedence: command-line flags > --config file > defaults.\n\
                  The config file holds `key = value` lines named after the long flags\n\
                  (e.g. `grid = 201`, `nll_floor = 1e-4`). BEHAVCAL_CONFIG sets a default\n\
                  config path. Exit codes: 1 usage, 2 data, 3 numeric domain."
)]
pub struct Cli {
    /// Worker threads (default: available parallelism). Output never depends on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// `key = value` settings file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Output format (default: json, or csv when --out ends in .csv).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Io {
    /// Input JSONL (`-` for stdin).
    #[arg(value_name = "INPUT")]
    pub input_pos: Option<String>,
    /// Input JSONL (`-` for stdin); alternative to the positional argument.
    #[arg(long = "input", short = 'i', conflicts_with = "input_pos")]
    pub input: Option<String>,
    /// Output path (`-` for stdout).
    #[arg(long, short = 'o', default_value = "-")]
    pub out: String,
}

impl Io {
    fn input(&self) -> &str {
        self.input.as_deref().or(self.input_pos.as_deref()).unwrap_or("-")
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a prediction log and summarise problems.
    Validate {
        #[command(flatten)]
        io: Io,
    },
    /// Generate a synthetic prediction log.
    Simulate(SimulateArgs),
    /// Score every record under a reward.
    Reward(RewardArgs),
    /// Calibration and discrimination metrics.
    Metrics(MetricsArgs),
    /// Accuracy / hallucination / abstention curves over risk thresholds.
    Sweep(SweepArgs),
    /// Check the behavioural-calibration objectives.
    Objectives(ObjectivesArgs),
    /// Test-time scaling curves over grouped samples.
    Tts(TtsArgs),
    /// Validation, metrics and objectives in one document.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Report map: calibrated, overconfident, underconfident, power(γ), constant(c).
    #[arg(long)]
    pub agent: Option<String>,
    /// Difficulty prior: uniform, beta(a,b), point(q1,…).
    #[arg(long)]
    pub difficulty: Option<String>,
    /// Number of questions.
    #[arg(long, short = 'n')]
    pub n: Option<usize>,
    /// Claims per response (claim chains).
    #[arg(long)]
    pub n_claims: Option<usize>,
    /// Grouped samples per question (ensembles).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub distractors: Option<usize>,
    /// Per-sample concentration around the question's success probability.
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path (`-` for stdout).
    #[arg(long, short = 'o', default_value = "-")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct RewardArgs {
    #[command(flatten)]
    pub io: Io,
    /// explicit, bounded, brier, ce or integrated.
    #[arg(long)]
    pub kind: Option<String>,
    /// Risk threshold for explicit / bounded rewards.
    #[arg(long, short = 't')]
    pub threshold: Option<f64>,
    /// Risk prior for the integrated reward: uniform, beta00[:ε], table:PATH.
    #[arg(long)]
    pub prior: Option<String>,
    #[arg(long)]
    pub ce_epsilon: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct MetricArgs {
    /// Evaluate responses or individual claims.
    #[arg(long, value_parser = ["response", "claim"])]
    pub level: Option<String>,
    /// Recompute response confidence from claims: product or min.
    #[arg(long)]
    pub aggregate: Option<String>,
    #[arg(long)]
    pub nll_floor: Option<f64>,
    #[arg(long)]
    pub epsilon_h: Option<f64>,
    /// Threshold grid points.
    #[arg(long)]
    pub grid: Option<usize>,
    /// SNR-gain logarithm: e or 10.
    #[arg(long)]
    pub log_base: Option<String>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub io: Io,
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Also write the calibration diagram CSV here.
    #[arg(long)]
    pub diagram: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ObjectivesArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Reference accuracy (default: the input's own accuracy).
    #[arg(long)]
    pub baseline_acc: Option<f64>,
    #[arg(long)]
    pub epsilon_h: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TtsArgs {
    #[command(flatten)]
    pub io: Io,
    /// Strategies (comma separated) or `all`.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Values of k, comma separated.
    #[arg(long = "k")]
    pub k_values: Option<String>,
    #[arg(long)]
    pub resamples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub io: Io,
    #[command(flatten)]
    pub metric: MetricArgs,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

/// Resolves settings across flags, config file and defaults.
struct Settings {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, Value>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => parse_key_values(&std::fs::read_to_string(p)?)?,
            None => BTreeMap::new(),
        };
        Ok(Settings {
            file,
            resolved: BTreeMap::new(),
        })
    }

    fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Serialize,
        T::Err: std::fmt::Display,
    {
        let v = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(s) => s
                    .parse()
                    .map_err(|e| Error::Usage(format!("config `{key} = {s}`: {e}")))?,
                None => default,
            },
        };
        self.resolved.insert(key.to_owned(), json!(v));
        Ok(v)
    }

    fn get_opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Serialize,
        T::Err: std::fmt::Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(s) => Some(
                    s.parse()
                        .map_err(|e| Error::Usage(format!("config `{key} = {s}`: {e}")))?,
                ),
                None => None,
            },
        };
        self.resolved.insert(key.to_owned(), json!(v));
        Ok(v)
    }

    fn note(&mut self, key: &str, value: impl Serialize) {
        self.resolved.insert(key.to_owned(), json!(value));
    }
}

fn read_input(path: &str) -> Result<Dataset> {
    let ds = if path == "-" {
        model::read_jsonl(io::stdin().lock(), "<stdin>")
    } else {
        let f = File::open(path).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{path}: {e}"))))?;
        model::read_jsonl(BufReader::new(f), path)
    };
    ds.map_err(|e| match e {
        Error::Json { line, message } => Error::Json {
            line,
            message: format!("{path}: {message}"),
        },
        other => other,
    })
}

fn open_out(path: &str) -> Result<Box<dyn Write>> {
    Ok(if path == "-" {
        Box::new(BufWriter::new(io::stdout().lock()))
    } else {
        Box::new(BufWriter::new(File::create(path)?))
    })
}

fn resolve_format(flag: Option<Format>, out: &str, default: Format) -> Format {
    flag.unwrap_or_else(|| {
        if out.ends_with(".csv") {
            Format::Csv
        } else if out.ends_with(".json") {
            Format::Json
        } else {
            default
        }
    })
}

fn write_json(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn write_sidecar(out: &str, command: &str, settings: &Settings) -> Result<()> {
    if out == "-" {
        return Ok(());
    }
    let doc = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "rng": RNG_ALGORITHM,
        "config": settings.resolved,
    });
    let mut f = BufWriter::new(File::create(format!("{out}.config.json"))?);
    write_json(&mut f, &doc)?;
    f.flush()?;
    Ok(())
}

struct MetricSetup {
    options: MetricOptions,
    level: String,
    aggregate: Option<Aggregation>,
}

fn metric_setup(s: &mut Settings, a: &MetricArgs) -> Result<MetricSetup> {
    let level = s.get("level", a.level.clone(), "response".to_owned())?;
    if level != "response" && level != "claim" {
        return Err(Error::Usage(format!("level must be response or claim, got `{level}`")));
    }
    let aggregate: Option<Aggregation> = s.get_opt::<String>("aggregate", a.aggregate.clone())?.map(|x| x.parse()).transpose()?;
    let log_base: LogBase = s.get("log_base", a.log_base.clone(), "e".to_owned())?.parse()?;
    let options = MetricOptions {
        nll_floor: s.get("nll_floor", a.nll_floor, metrics::DEFAULT_NLL_FLOOR)?,
        epsilon_h: s.get_opt("epsilon_h", a.epsilon_h)?,
        grid_points: s.get("grid", a.grid, behavior::DEFAULT_GRID_POINTS)?,
        log_base,
        smece: Default::default(),
    };
    Ok(MetricSetup {
        options,
        level,
        aggregate,
    })
}

fn prepare(ds: Dataset, setup: &MetricSetup) -> Result<Dataset> {
    let ds = match setup.aggregate {
        Some(how) => ds.with_aggregated_confidence(how)?,
        None => ds,
    };
    Ok(if setup.level == "claim" { ds.claim_level() } else { ds })
}

#[derive(Serialize)]
struct RewardRow {
    id: String,
    valid: bool,
    confidence: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    action: Option<rewards::Action>,
    reward: f64,
}

fn run_reward(a: &RewardArgs, s: &mut Settings, format: Option<Format>) -> Result<()> {
    let kind: RewardKind = s.get("kind", a.kind.clone(), "brier".to_owned())?.parse()?;
    let ds = read_input(a.io.input())?;
    let mut rows = Vec::with_capacity(ds.len());
    let t = match kind {
        RewardKind::Explicit | RewardKind::Bounded => Some(s.get_opt("threshold", a.threshold)?.ok_or_else(|| {
            Error::Usage("explicit and bounded rewards need --threshold".to_owned())
        })?),
        _ => None,
    };
    let ce_eps = s.get("ce_epsilon", a.ce_epsilon, rewards::DEFAULT_CE_EPSILON)?;
    let prior = if kind == RewardKind::Integrated {
        let spec = s.get("prior", a.prior.clone(), "uniform".to_owned())?;
        Some(RiskPrior::from_spec(&spec)?)
    } else {
        None
    };
    for r in &ds.records {
        let p = r.confidence()?;
        let (action, reward) = match kind {
            RewardKind::Explicit => {
                let act = decide(p, t.unwrap());
                (Some(act), rewards::reward_explicit(act, r.valid, t.unwrap())?)
            }
            RewardKind::Bounded => {
                let act = decide(p, t.unwrap());
                (Some(act), rewards::reward_bounded(act, r.valid, t.unwrap())?)
            }
            RewardKind::Brier => (None, rewards::reward_brier(r.valid, p)),
            RewardKind::Ce => (None, rewards::reward_ce(r.valid, p, ce_eps)?),
            RewardKind::Integrated => (None, rewards::reward_integrated(r.valid, p, prior.as_ref().unwrap())),
        };
        rows.push(RewardRow {
            id: r.id.clone(),
            valid: r.valid,
            confidence: p,
            action,
            reward,
        });
    }
    let mean = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.reward).sum::<f64>() / rows.len() as f64
    };
    let mut out = open_out(&a.io.out)?;
    match resolve_format(format, &a.io.out, Format::Json) {
        Format::Json => write_json(&mut out, &json!({ "kind": kind, "mean": mean, "records": rows }))?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["id", "valid", "confidence", "action", "reward"]).map_err(metrics::csv_io)?;
            for r in &rows {
                let act = r.action.map(|x| format!("{x:?}").to_lowercase()).unwrap_or_default();
                w.write_record([r.id.clone(), r.valid.to_string(), r.confidence.to_string(), act, r.reward.to_string()])
                    .map_err(metrics::csv_io)?;
            }
            w.flush()?;
        }
    }
    out.flush()?;
    Ok(())
}

fn run_metrics(a: &MetricsArgs, s: &mut Settings, format: Option<Format>) -> Result<()> {
    let setup = metric_setup(s, &a.metric)?;
    let ds = prepare(read_input(a.io.input())?, &setup)?;
    let (report, diagram) = metrics::metric_report(&ds, &setup.options)?;
    if let Some(path) = &a.diagram {
        let mut f = BufWriter::new(File::create(path)?);
        diagram.write_csv(&mut f)?;
        f.flush()?;
    }
    let mut out = open_out(&a.io.out)?;
    match resolve_format(format, &a.io.out, Format::Json) {
        Format::Json => write_json(&mut out, &report)?,
        Format::Csv => report.write_csv(&mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn run_sweep(a: &SweepArgs, s: &mut Settings, format: Option<Format>) -> Result<()> {
    let grid = s.get("grid", a.grid, behavior::DEFAULT_GRID_POINTS)?;
    let ds = read_input(a.io.input())?;
    let sw = behavior::sweep(&ds, &ThresholdGrid::uniform(grid)?)?;
    let mut out = open_out(&a.io.out)?;
    match resolve_format(format, &a.io.out, Format::Json) {
        Format::Json => write_json(&mut out, &sw)?,
        Format::Csv => sw.write_csv(&mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn run_objectives(a: &ObjectivesArgs, s: &mut Settings) -> Result<()> {
    let grid = s.get("grid", a.grid, behavior::DEFAULT_GRID_POINTS)?;
    let tolerance = s.get("tolerance", a.tolerance, 0.05)?;
    let ds = read_input(a.io.input())?;
    let baseline = match s.get_opt("baseline_acc", a.baseline_acc)? {
        Some(b) => b,
        None => metrics::predictive_accuracy(&ds)?,
    };
    let sw = behavior::sweep(&ds, &ThresholdGrid::uniform(grid)?)?;
    let eps = s.get("epsilon_h", a.epsilon_h, sw.default_epsilon_h())?;
    let report = behavior::check_objectives_with(&sw, baseline, tolerance, eps)?;
    let mut out = open_out(&a.io.out)?;
    write_json(&mut out, &report)?;
    out.flush()?;
    Ok(())
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|x| x.trim().parse().map_err(|e| Error::Usage(format!("bad {what} `{x}`: {e}"))))
        .collect()
}

fn run_tts(a: &TtsArgs, s: &mut Settings, format: Option<Format>) -> Result<()> {
    let strategies = s.get("strategy", a.strategy.clone(), "all".to_owned())?;
    let strategies: Vec<Strategy> = if strategies == "all" {
        Strategy::ALL.to_vec()
    } else {
        parse_list(&strategies, "strategy")?
    };
    let ks: Vec<usize> = parse_list(&s.get("k", a.k_values.clone(), "1,2,4,8".to_owned())?, "k")?;
    let resamples = s.get("resamples", a.resamples, 1000)?;
    let seed = s.get("seed", a.seed, 0)?;
    let ds = read_input(a.io.input())?;
    let groups = tts::groups_from_dataset(&ds)?;
    let mut points = Vec::new();
    for st in strategies {
        points.extend(tts::scaling_curve(&groups, st, &ks, resamples, seed)?);
    }
    let mut out = open_out(&a.io.out)?;
    match resolve_format(format, &a.io.out, Format::Csv) {
        Format::Json => write_json(&mut out, &points)?,
        Format::Csv => tts::write_curve_csv(&points, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn run_report(a: &ReportArgs, s: &mut Settings, format: Option<Format>) -> Result<()> {
    let setup = metric_setup(s, &a.metric)?;
    let tolerance = s.get("tolerance", a.tolerance, 0.05)?;
    let raw = read_input(a.io.input())?;
    let validation = model::validate(&raw);
    let ds = prepare(raw, &setup)?;
    let (report, _) = metrics::metric_report(&ds, &setup.options)?;
    let sw = behavior::sweep(&ds, &ThresholdGrid::uniform(setup.options.grid_points)?)?;
    let eps = setup.options.epsilon_h.unwrap_or_else(|| sw.default_epsilon_h());
    let objectives = behavior::check_objectives_with(&sw, report.predictive_accuracy, tolerance, eps)?;
    let mut out = open_out(&a.io.out)?;
    match resolve_format(format, &a.io.out, Format::Json) {
        Format::Json => write_json(
            &mut out,
            &json!({ "label": ds.label, "validation": validation, "metrics": report, "objectives": objectives }),
        )?,
        Format::Csv => report.write_csv(&mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn run_simulate(a: &SimulateArgs, s: &mut Settings) -> Result<()> {
    let mut spec = AgentSpec::default();
    let agent = s.get("agent", a.agent.clone(), "calibrated".to_owned())?;
    spec.report = agent.parse()?;
    let difficulty = s.get("difficulty", a.difficulty.clone(), "uniform".to_owned())?;
    spec.difficulty = difficulty.parse()?;
    spec.n_questions = s.get("n", a.n, spec.n_questions)?;
    spec.n_claims = s.get_opt("n_claims", a.n_claims)?;
    spec.samples_per_question = s.get_opt("samples", a.samples)?;
    spec.n_distractors = s.get("distractors", a.distractors, spec.n_distractors)?;
    spec.intra_spread = s.get_opt("spread", a.spread)?;
    spec.seed = s.get("seed", a.seed, 0)?;
    let ds = simulate::generate(&spec)?;
    let mut out = open_out(&a.out)?;
    ds.write_jsonl(&mut out)?;
    out.flush()?;
    Ok(())
}

fn run_validate(io: &Io) -> Result<bool> {
    let ds = read_input(io.input())?;
    let summary = model::validate(&ds);
    let mut out = open_out(&io.out)?;
    write_json(&mut out, &summary)?;
    out.flush()?;
    Ok(!summary.is_fatal())
}

/// Runs a parsed command line. Returns `Ok(false)` when validation found a
/// fatal problem.
pub fn run(cli: &Cli) -> Result<bool> {
    let mut settings = Settings::load(cli.config.as_deref())?;
    let threads = settings.get_opt("threads", cli.threads)?;
    settings.resolved.remove("threads");
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {threads:?} threads: {e}")))?;
    let fmt = cli.format;
    let (name, out, ok) = pool.install(|| -> Result<(&str, String, bool)> {
        Ok(match &cli.command {
            Command::Validate { io } => ("validate", io.out.clone(), run_validate(io)?),
            Command::Simulate(a) => {
                run_simulate(a, &mut settings)?;
                ("simulate", a.out.clone(), true)
            }
            Command::Reward(a) => {
                run_reward(a, &mut settings, fmt)?;
                ("reward", a.io.out.clone(), true)
            }
            Command::Metrics(a) => {
                run_metrics(a, &mut settings, fmt)?;
                ("metrics", a.io.out.clone(), true)
            }
            Command::Sweep(a) => {
                run_sweep(a, &mut settings, fmt)?;
                ("sweep", a.io.out.clone(), true)
            }
            Command::Objectives(a) => {
                run_objectives(a, &mut settings)?;
                ("objectives", a.io.out.clone(), true)
            }
            Command::Tts(a) => {
                run_tts(a, &mut settings, fmt)?;
                ("tts", a.io.out.clone(), true)
            }
            Command::Report(a) => {
                run_report(a, &mut settings, fmt)?;
                ("report", a.io.out.clone(), true)
            }
        })
    })?;
    if let Some(f) = fmt {
        settings.note("format", f);
    }
    if let Some(input) = input_of(&cli.command) {
        settings.note("input", input);
    }
    write_sidecar(&out, name, &settings)?;
    Ok(ok)
}

fn input_of(c: &Command) -> Option<&str> {
    match c {
        Command::Validate { io } => Some(io.input()),
        Command::Simulate(_) => None,
        Command::Reward(a) => Some(a.io.input()),
        Command::Metrics(a) => Some(a.io.input()),
        Command::Sweep(a) => Some(a.io.input()),
        Command::Objectives(a) => Some(a.io.input()),
        Command::Tts(a) => Some(a.io.input()),
        Command::Report(a) => Some(a.io.input()),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
