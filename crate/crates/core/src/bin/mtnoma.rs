use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mtnoma::analytics::{exact_aar_with_budget, mc_aar, optimal_load, DecodeMode, SelectionModel};
use mtnoma::config::{self, GridConfig};
use mtnoma::error::{Error, Result};
use mtnoma::experiments::{barring_demo, compare, BarringDemoParams, CompareParams};
use mtnoma::grid::PowerGrid;
use mtnoma::output::{self, Document, Format, Metadata, Tabular};
use mtnoma::powermap::refine::{refine_power_map_q_learning, GridEnvironment, QLearningConfig};
use mtnoma::powermap::{generate_power_map, Area, ChannelModel, Point, PowerMap};
use mtnoma::sim::{run_simulation, sweep};

#[derive(Parser)]
#[command(name = "mtnoma", version, about = "Multi-power-level NOMA random access toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the received power levels of a grid.
    Levels {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Exact average arrival rate by enumeration.
    AarExact {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(short = 'n', long)]
        devices: usize,
        #[arg(long, value_enum, default_value = "collision-limited")]
        decode_mode: Mode,
        #[arg(long, default_value_t = mtnoma::analytics::DEFAULT_ENUMERATION_BUDGET)]
        budget: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Monte Carlo average arrival rate.
    AarMc {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(short = 'n', long)]
        devices: usize,
        #[arg(long, value_enum, default_value = "collision-limited")]
        decode_mode: Mode,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Device count maximizing the average arrival rate.
    OptimalLoad {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 200)]
        n_max: usize,
        #[arg(long, value_enum, default_value = "collision-limited")]
        decode_mode: Mode,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Generate or refine power maps.
    Powermap {
        #[command(subcommand)]
        action: PowermapCommand,
    },
    /// Run one simulation.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Sweep one config key over a list of values.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Dotted config key, e.g. traffic.total_devices.
        #[arg(long)]
        axis: String,
        /// Comma-separated values, or start:end[:step] for integers.
        #[arg(long)]
        values: String,
        #[arg(long, default_value_t = 1)]
        replications: usize,
        /// Defaults to the config seed.
        #[arg(long)]
        base_seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// GB, GF and semi-GF over a device-count axis.
    Compare {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Grant-free traffic with and without barring.
    BarringDemo {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Subcommand)]
enum PowermapCommand {
    /// Build a map from a TOML description of area, regions and channel.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Refine a map with multi-agent Q-learning.
    Refine {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, default_value_t = 0.1)]
        exploration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GridArgs {
    #[arg(short = 'N', long = "levels")]
    levels: usize,
    #[arg(short = 'M', long = "rbs", default_value_t = 1)]
    rbs: usize,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 1.0)]
    margin: f64,
}

impl GridArgs {
    fn config(&self) -> GridConfig {
        GridConfig { levels: self.levels, rbs: self.rbs, theta: self.theta, noise: self.noise, margin: self.margin }
    }

    fn build(&self) -> Result<PowerGrid> {
        self.config().build()
    }
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a config key: --set traffic.total_devices=40
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct ParamArgs {
    /// Optional TOML file of experiment parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct OutArgs {
    #[arg(long, value_enum, default_value = "json")]
    format: OutFormat,
    /// Output file; defaults to $MTNOMA_OUTPUT_DIR/<command>.<ext>, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    CollisionLimited,
    Sinr,
}

impl From<Mode> for DecodeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::CollisionLimited => DecodeMode::CollisionLimited,
            Mode::Sinr => DecodeMode::Sinr,
        }
    }
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    raw.iter()
        .map(|s| match s.split_once('=') {
            Some((k, v)) => Ok((k.trim().to_string(), v.trim().to_string())),
            None => Err(Error::InvalidParameter(format!("override '{s}' is not KEY=VALUE"))),
        })
        .collect()
}

fn parse_values(text: &str) -> Result<Vec<toml::Value>> {
    let bad = || Error::InvalidParameter(format!("cannot read values '{text}'"));
    if !text.contains(',') && text.contains(':') {
        let parts: Vec<i64> = text.split(':').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
        let (start, end, step) = match parts[..] {
            [a, b] => (a, b, 1),
            [a, b, s] if s > 0 => (a, b, s),
            _ => return Err(bad()),
        };
        return Ok((start..=end).step_by(step as usize).map(toml::Value::Integer).collect());
    }
    Ok(text.split(',').map(|v| config::parse_scalar(v.trim())).collect())
}

/// Emits either a JSON document or a CSV table.
fn emit<M: Serialize, R: Tabular>(out: &OutArgs, stem: &str, meta: Metadata, metrics: &M, rows: &[R]) -> Result<()> {
    let format = Format::from(out.format);
    let mut bytes = Vec::new();
    match format {
        Format::Json => output::write_json(&Document { meta, metrics }, &mut bytes)?,
        Format::Csv => output::write_csv(&meta, rows, &mut bytes)?,
    }
    output::deliver(output::destination(out.out.as_deref(), stem, format).as_deref(), &bytes)
}

#[derive(Serialize, Deserialize)]
struct LevelRow {
    level: usize,
    power: f64,
}

impl Tabular for LevelRow {
    const COLUMNS: &'static [&'static str] = &["level", "power"];
}

#[derive(Serialize, Deserialize)]
struct AarRow {
    devices: usize,
    expected_successes_per_slot: f64,
    per_rb: f64,
    stderr: f64,
    trials: u64,
}

impl Tabular for AarRow {
    const COLUMNS: &'static [&'static str] = &["devices", "expected_successes_per_slot", "per_rb", "stderr", "trials"];
}

#[derive(Serialize, Deserialize)]
struct OptimalRow {
    n: usize,
    aar: f64,
    exact: bool,
}

impl Tabular for OptimalRow {
    const COLUMNS: &'static [&'static str] = &["n", "aar", "exact"];
}

#[derive(Serialize)]
struct AarQuery {
    grid: GridConfig,
    devices: usize,
    decode_mode: DecodeMode,
    trials: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateDoc {
    grid: GridConfig,
    area: Area,
    grid_rows: usize,
    grid_cols: usize,
    #[serde(default)]
    channel: ChannelModel,
    max_tpl: f64,
    #[serde(default)]
    base_station: Option<Point>,
}

fn load_params<T: Default + Serialize + for<'de> Deserialize<'de>>(args: &ParamArgs) -> Result<(T, Vec<String>)> {
    let mut doc: toml::Table = match &args.config {
        Some(p) => toml::from_str(&fs::read_to_string(p)?)?,
        None => toml::Table::new(),
    };
    for (k, v) in parse_overrides(&args.overrides)? {
        config::set_path(&mut doc, &k, config::parse_scalar(&v))?;
    }
    let mut present: Vec<String> = doc.keys().cloned().collect();
    present.sort();
    let params: T = toml::Value::Table(doc).try_into()?;
    let all = serde_json::to_value(&params)?;
    let defaulted = all
        .as_object()
        .map(|o| o.keys().filter(|k| !present.contains(k)).cloned().collect())
        .unwrap_or_default();
    Ok((params, defaulted))
}

fn read_run_config(run: &RunArgs) -> Result<config::ParsedConfig> {
    let text = fs::read_to_string(&run.config)?;
    let base = run.config.parent().map(Path::to_path_buf);
    config::parse_config_with_overrides(&text, base.as_deref(), &parse_overrides(&run.overrides)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Levels { grid, out } => {
            let g = grid.build()?;
            let rows: Vec<LevelRow> =
                g.levels().iter().enumerate().map(|(level, &power)| LevelRow { level, power }).collect();
            let meta = Metadata::new(None, &grid.config(), vec![])?;
            emit(&out, "levels", meta, &rows, &rows)
        }
        Command::AarExact { grid, devices, decode_mode, budget, out } => {
            let g = grid.build()?;
            let mode = decode_mode.into();
            let r = exact_aar_with_budget(devices, &g, &SelectionModel::Uniform, mode, budget)?;
            let query = AarQuery { grid: grid.config(), devices, decode_mode: mode, trials: None };
            let row = AarRow { devices, expected_successes_per_slot: r.expected_successes_per_slot, per_rb: r.per_rb, stderr: r.stderr, trials: r.trials };
            emit(&out, "aar-exact", Metadata::new(None, &query, vec![])?, &r, &[row])
        }
        Command::AarMc { grid, devices, decode_mode, trials, seed, out } => {
            let g = grid.build()?;
            let mode = decode_mode.into();
            let r = mc_aar(devices, &g, &SelectionModel::Uniform, mode, trials, seed)?;
            let query = AarQuery { grid: grid.config(), devices, decode_mode: mode, trials: Some(trials) };
            let row = AarRow { devices, expected_successes_per_slot: r.expected_successes_per_slot, per_rb: r.per_rb, stderr: r.stderr, trials: r.trials };
            emit(&out, "aar-mc", Metadata::new(Some(seed), &query, vec![])?, &r, &[row])
        }
        Command::OptimalLoad { grid, n_max, decode_mode, out } => {
            let g = grid.build()?;
            let r = optimal_load(&g, decode_mode.into(), n_max)?;
            let query = serde_json::json!({ "grid": grid.config(), "n_max": n_max, "decode_mode": DecodeMode::from(decode_mode) });
            let row = OptimalRow { n: r.n, aar: r.aar, exact: r.exact };
            emit(&out, "optimal-load", Metadata::new(None, &query, vec![])?, &r, &[row])
        }
        Command::Powermap { action: PowermapCommand::Generate { config, out } } => {
            let doc: GenerateDoc = toml::from_str(&fs::read_to_string(&config)?)?;
            let grid = doc.grid.build()?;
            let bs = doc.base_station.unwrap_or(Point::new(0.0, 0.0));
            let map = generate_power_map(&doc.area, doc.grid_rows, doc.grid_cols, &doc.channel, bs, &grid, doc.max_tpl)?;
            let dest = output::destination(out.as_deref(), "powermap", Format::Json);
            output::deliver(dest.as_deref(), format!("{}\n", map.to_json()?).as_bytes())
        }
        Command::Powermap { action: PowermapCommand::Refine { map, episodes, steps, exploration, seed, out } } => {
            let initial = PowerMap::load(&map)?;
            let cfg = QLearningConfig { episodes, steps_per_episode: steps, exploration, seed, ..QLearningConfig::default() };
            let mut env = GridEnvironment::new(initial.grid.clone());
            let r = refine_power_map_q_learning(&initial, &cfg, &mut env)?;
            eprintln!("episodes run: {}, converged: {}", r.episodes_run, r.converged);
            let dest = output::destination(out.as_deref(), "powermap-refined", Format::Json);
            output::deliver(dest.as_deref(), format!("{}\n", r.map.to_json()?).as_bytes())
        }
        Command::Simulate { run, seed, out } => {
            let mut parsed = read_run_config(&run)?;
            if let Some(s) = seed {
                parsed.config.seed = s;
            }
            let series = run_simulation(&parsed.config, parsed.config.seed, run.workers)?;
            let meta = Metadata::new(Some(parsed.config.seed), &parsed.config, parsed.defaulted)?;
            emit(&out, "simulate", meta, &series, &series.slots)
        }
        Command::Sweep { run, axis, values, replications, base_seed, out } => {
            let parsed = read_run_config(&run)?;
            let seed = base_seed.unwrap_or(parsed.config.seed);
            let values = parse_values(&values)?;
            let rows = sweep(&parsed.config, &axis, &values, replications, seed, run.workers)?;
            let query = serde_json::json!({
                "run": parsed.config, "axis": axis, "values": values, "replications": replications,
            });
            let meta = Metadata::new(Some(seed), &query, parsed.defaulted)?;
            emit(&out, "sweep", meta, &rows, &rows)
        }
        Command::Compare { params, out } => {
            let (p, defaulted) = load_params::<CompareParams>(&params)?;
            let report = compare(&p, params.workers)?;
            eprintln!(
                "max semi-GF gain over GB: {:.1}%, max semi-GF/GF ratio: {:.2}",
                100.0 * report.max_gain_over_gb,
                report.max_ratio_over_gf
            );
            emit(&out, "compare", Metadata::new(Some(p.seed), &p, defaulted)?, &report, &report.rows)
        }
        Command::BarringDemo { params, out } => {
            let (p, defaulted) = load_params::<BarringDemoParams>(&params)?;
            let report = barring_demo(&p, params.workers)?;
            eprintln!("optimal load {} with max AAR {:.3}", report.optimal_load, report.max_aar);
            emit(&out, "barring-demo", Metadata::new(Some(p.seed), &p, defaulted)?, &report, &report.rows)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mtnoma: {e}");
            ExitCode::FAILURE
        }
    }
}
