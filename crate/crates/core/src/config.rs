//! Run configuration.
//!
//! A run is described by one TOML document:
//!
//! ```toml
//! slots = 10000
//! seed = 7
//! scheme = "gf"              # "gb", "gf" or a [scheme.semi_gf] table
//!
//! [grid]
//! N = 2
//! M = 10
//! ```
//!
//! Everything else has a default; [`ParsedConfig::defaulted`] lists the keys
//! that were filled in, and outputs echo that list. Any scalar key can be
//! overridden by dotted path (`traffic.total_devices=40`) before validation.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::DecodeMode;
use crate::barring::LoadEstimator;
use crate::error::{Error, Result};
use crate::grid::PowerGrid;
use crate::powermap::{generate_power_map, Area, ChannelModel, Point, PowerMap};
use crate::protocols::{Fading, SemiGfProtocol, ThresholdType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "N")]
    pub levels: usize,
    #[serde(rename = "M")]
    pub rbs: usize,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default = "one")]
    pub noise: f64,
    #[serde(default = "one")]
    pub margin: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<PowerGrid> {
        PowerGrid::new(self.levels, self.rbs, self.theta, self.noise, self.margin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    #[default]
    Dynamic,
    OpenLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GbFadingKind {
    None,
    /// Two-point fading calibrated so the open-loop threshold is violated
    /// with probability `epsilon`.
    #[default]
    TwoPoint,
    /// Rayleigh power fading (not calibrated to `epsilon`).
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiGfConfig {
    #[serde(default = "upper_limit")]
    pub threshold: ThresholdType,
    #[serde(default)]
    pub protocol: ProtocolKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_estimation_window")]
    pub estimation_window: usize,
    #[serde(default = "one")]
    pub qos_sinr: f64,
    /// Mean received power of GB devices. Defaults to twice the power that
    /// admits every level under the upper limit.
    #[serde(default)]
    pub gb_mean_power: Option<f64>,
    #[serde(default)]
    pub gb_fading: GbFadingKind,
}

impl SemiGfConfig {
    pub fn protocol(&self) -> SemiGfProtocol {
        match self.protocol {
            ProtocolKind::Dynamic => SemiGfProtocol::Dynamic,
            ProtocolKind::OpenLoop => SemiGfProtocol::OpenLoop {
                estimation_window: self.estimation_window,
                violation_prob: self.epsilon,
            },
        }
    }

    /// Fading of the GB received power.
    pub fn gb_fading(&self, grid: &PowerGrid) -> Fading {
        let mean = self.gb_mean_power.expect("resolved config");
        match self.gb_fading {
            GbFadingKind::None => Fading::None,
            GbFadingKind::Exponential => Fading::Rayleigh,
            GbFadingKind::TwoPoint => Fading::calibrated_two_point(
                self.epsilon,
                mean,
                self.qos_sinr,
                grid.noise_power(),
                grid.levels(),
                self.threshold,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Gb,
    Gf,
    SemiGf(SemiGfConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrafficModel {
    /// Each idle device gets a packet with `activation_prob` per slot; 1 is
    /// saturation.
    Bernoulli { activation_prob: f64 },
    /// At `burst_slot` each idle device activates with `burst_fraction`;
    /// otherwise with `background_prob`.
    Burst {
        burst_slot: u64,
        burst_fraction: f64,
        #[serde(default)]
        background_prob: f64,
    },
}

impl Default for TrafficModel {
    fn default() -> Self {
        TrafficModel::Bernoulli { activation_prob: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    /// Defaults to M.
    #[serde(default)]
    pub total_devices: Option<usize>,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default)]
    pub model: TrafficModel,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig { total_devices: None, max_attempts: default_max_attempts(), model: TrafficModel::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarringConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_period")]
    pub period: usize,
    /// Defaults to 100 n*.
    #[serde(default)]
    pub load_cap: Option<usize>,
    /// Upper end of the optimal-load search; defaults to 10 N M.
    #[serde(default)]
    pub search_max: Option<usize>,
    #[serde(default)]
    pub estimator: LoadEstimator,
}

impl Default for BarringConfig {
    fn default() -> Self {
        BarringConfig {
            enabled: false,
            period: default_period(),
            load_cap: None,
            search_max: None,
            estimator: LoadEstimator::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum PowerMapSource {
    /// One region holding every level.
    Uniform,
    File { path: PathBuf },
    Inline { map: PowerMap },
    Generate {
        area: Area,
        grid_rows: usize,
        grid_cols: usize,
        #[serde(default)]
        channel: ChannelModel,
        max_tpl: f64,
        #[serde(default = "origin")]
        base_station: Point,
    },
}

impl PowerMapSource {
    pub fn resolve(&self, grid: &PowerGrid) -> Result<PowerMap> {
        let map = match self {
            PowerMapSource::Uniform => PowerMap::uniform(grid),
            PowerMapSource::File { path } => PowerMap::load(path)?,
            PowerMapSource::Inline { map } => map.clone(),
            PowerMapSource::Generate { area, grid_rows, grid_cols, channel, max_tpl, base_station } => {
                generate_power_map(area, *grid_rows, *grid_cols, channel, *base_station, grid, *max_tpl)?
            }
        };
        map.validate_against(grid)?;
        Ok(map)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub decode_mode: DecodeMode,
    pub scheme: Scheme,
    #[serde(default)]
    pub traffic: TrafficConfig,
    #[serde(default)]
    pub barring: BarringConfig,
    #[serde(default)]
    pub power_map: Option<PowerMapSource>,
    /// Fading of GF received powers (SINR decoding only).
    #[serde(default)]
    pub gf_fading: Fading,
    #[serde(default = "default_slots")]
    pub slots: u64,
    #[serde(default)]
    pub seed: u64,
    /// Slots excluded from summary statistics.
    #[serde(default)]
    pub warmup: u64,
    /// Windowed-AAR block length; defaults to the barring period when
    /// barring is on, else 100.
    #[serde(default)]
    pub window: Option<u64>,
    #[serde(default = "yes")]
    pub record_slots: bool,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn upper_limit() -> ThresholdType {
    ThresholdType::UpperLimit
}
fn default_epsilon() -> f64 {
    0.6
}
fn default_estimation_window() -> usize {
    10
}
fn default_max_attempts() -> u32 {
    50
}
fn default_period() -> usize {
    20
}
fn default_slots() -> u64 {
    100_000
}
fn origin() -> Point {
    Point::new(0.0, 0.0)
}

/// A validated config with every default made explicit.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: RunConfig,
    /// Dotted keys that took their default value.
    pub defaulted: Vec<String>,
}

/// Parses and validates a TOML document. Relative file paths are resolved
/// against `base_dir`.
pub fn parse_config(text: &str, base_dir: Option<&Path>) -> Result<ParsedConfig> {
    let doc: toml::Table = toml::from_str(text)?;
    parse_table(doc, base_dir)
}

/// Like [`parse_config`], applying `key=value` overrides first.
pub fn parse_config_with_overrides(
    text: &str,
    base_dir: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<ParsedConfig> {
    let mut doc: toml::Table = toml::from_str(text)?;
    for (key, value) in overrides {
        set_path(&mut doc, key, parse_scalar(value))?;
    }
    parse_table(doc, base_dir)
}

pub fn parse_table(doc: toml::Table, base_dir: Option<&Path>) -> Result<ParsedConfig> {
    let mut present = BTreeSet::new();
    collect_keys(&toml::Value::Table(doc.clone()), "", &mut present);
    let mut config: RunConfig = toml::Value::Table(doc).try_into()?;
    if let (Some(base), Some(PowerMapSource::File { path })) = (base_dir, config.power_map.as_mut()) {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
    config.resolve()?;
    let mut resolved = BTreeSet::new();
    collect_keys(&config.to_toml_value()?, "", &mut resolved);
    let defaulted = resolved
        .into_iter()
        .filter(|k| !present.contains(k) && !present.iter().any(|p| k.starts_with(&format!("{p}."))))
        .collect();
    Ok(ParsedConfig { config, defaulted })
}

fn collect_keys(v: &toml::Value, prefix: &str, out: &mut BTreeSet<String>) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                collect_keys(v, &key, out);
            }
        }
        _ => {
            out.insert(prefix.to_string());
        }
    }
}

/// Reads `value` as a TOML literal, falling back to a bare string.
pub fn parse_scalar(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

/// Sets a dotted key, creating intermediate tables. A string replacing a
/// table (e.g. `scheme=gf` over `[scheme.semi_gf]`) replaces it whole.
pub fn set_path(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "is not a valid dotted key"));
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        if !entry.is_table() {
            *entry = toml::Value::Table(toml::Table::new());
        }
        table = entry.as_table_mut().expect("just ensured a table");
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Fills computed defaults and checks every constraint.
    pub fn resolve(&mut self) -> Result<()> {
        let g = &self.grid;
        if g.levels < 1 {
            return Err(Error::config("grid.N", "≥ 1"));
        }
        if g.rbs < 1 {
            return Err(Error::config("grid.M", "≥ 1"));
        }
        for (key, v) in [("grid.theta", g.theta), ("grid.noise", g.noise)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "> 0"));
            }
        }
        if !(g.margin >= 1.0 && g.margin.is_finite()) {
            return Err(Error::config("grid.margin", "≥ 1"));
        }
        let grid = g.build()?;

        if self.slots < 1 {
            return Err(Error::config("slots", "≥ 1"));
        }
        if self.warmup >= self.slots {
            return Err(Error::config("warmup", "< slots"));
        }
        let devices = *self.traffic.total_devices.get_or_insert(grid.num_rbs());
        if devices < 1 {
            return Err(Error::config("traffic.total_devices", "≥ 1"));
        }
        if self.traffic.max_attempts < 1 {
            return Err(Error::config("traffic.max_attempts", "≥ 1"));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        match self.traffic.model {
            TrafficModel::Bernoulli { activation_prob } if !unit(activation_prob) => {
                return Err(Error::config("traffic.model.activation_prob", "in [0, 1]"));
            }
            TrafficModel::Burst { burst_fraction, .. } if !unit(burst_fraction) => {
                return Err(Error::config("traffic.model.burst_fraction", "in [0, 1]"));
            }
            TrafficModel::Burst { background_prob, .. } if !unit(background_prob) => {
                return Err(Error::config("traffic.model.background_prob", "in [0, 1]"));
            }
            _ => {}
        }

        if self.barring.period < 1 {
            return Err(Error::config("barring.period", "≥ 1"));
        }
        let search = *self
            .barring
            .search_max
            .get_or_insert(10 * grid.num_levels() * grid.num_rbs());
        if search < 1 {
            return Err(Error::config("barring.search_max", "≥ 1"));
        }
        if let Some(cap) = self.barring.load_cap {
            if cap < 1 {
                return Err(Error::config("barring.load_cap", "≥ 1"));
            }
        }
        let window = *self.window.get_or_insert(if self.barring.enabled {
            self.barring.period as u64
        } else {
            100
        });
        if window < 1 {
            return Err(Error::config("window", "≥ 1"));
        }

        if let Fading::TwoPoint { low, high, p_low } = self.gf_fading {
            if !(low > 0.0 && high > 0.0 && unit(p_low)) {
                return Err(Error::config("gf_fading", "needs positive factors and p_low in [0, 1]"));
            }
        }

        if let Scheme::SemiGf(s) = &mut self.scheme {
            if !unit(s.epsilon) {
                return Err(Error::config("scheme.semi_gf.epsilon", "in [0, 1]"));
            }
            if s.estimation_window < 1 {
                return Err(Error::config("scheme.semi_gf.estimation_window", "≥ 1"));
            }
            if !(s.qos_sinr > 0.0) {
                return Err(Error::config("scheme.semi_gf.qos_sinr", "> 0"));
            }
            let top = *grid.levels().last().expect("grid has levels");
            let mean = *s
                .gb_mean_power
                .get_or_insert(2.0 * s.qos_sinr * (top + grid.noise_power()));
            if !(mean > 0.0 && mean.is_finite()) {
                return Err(Error::config("scheme.semi_gf.gb_mean_power", "> 0"));
            }
            if self.power_map.is_none() {
                return Err(Error::config("power_map", "is required when scheme is semi_gf"));
            }
        }
        if let Some(PowerMapSource::File { path }) = &self.power_map {
            if !path.exists() {
                return Err(Error::config("power_map.path", format!("{} does not exist", path.display())));
            }
        }
        if let Some(src) = &self.power_map {
            src.resolve(&grid).map_err(|e| Error::config("power_map", format!("is unusable: {e}")))?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<PowerGrid> {
        self.grid.build()
    }

    pub fn total_devices(&self) -> usize {
        self.traffic.total_devices.unwrap_or(self.grid.rbs)
    }

    pub fn window(&self) -> u64 {
        self.window.unwrap_or(100)
    }

    pub fn to_toml_value(&self) -> Result<toml::Value> {
        toml::Value::try_from(self).map_err(|e| Error::InvalidInput(format!("config does not serialize: {e}")))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(format!("config does not serialize: {e}")))
    }

    /// Copy with one dotted key replaced, re-validated.
    pub fn with_override(&self, key: &str, value: toml::Value) -> Result<RunConfig> {
        let toml::Value::Table(mut doc) = self.to_toml_value()? else {
            unreachable!("a struct serializes to a table")
        };
        set_path(&mut doc, key, value)?;
        Ok(parse_table(doc, None)?.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "slots = 1000\nseed = 7\nscheme = \"gf\"\n[grid]\nN = 2\nM = 10\n";

    #[test]
    fn minimal_document_gets_defaults() {
        let p = parse_config(MINIMAL, None).unwrap();
        let c = &p.config;
        assert_eq!((c.grid.levels, c.grid.rbs, c.slots, c.seed), (2, 10, 1000, 7));
        assert_eq!(c.scheme, Scheme::Gf);
        assert_eq!(c.total_devices(), 10);
        assert_eq!(c.traffic.max_attempts, 50);
        assert_eq!(c.window(), 100);
        assert_eq!(c.decode_mode, DecodeMode::CollisionLimited);
        for key in ["grid.theta", "traffic.total_devices", "traffic.model.kind", "barring.period", "window"] {
            assert!(p.defaulted.iter().any(|k| k == key), "{key} missing from {:?}", p.defaulted);
        }
        assert!(!p.defaulted.iter().any(|k| k == "grid.N" || k == "slots"));
    }

    #[test]
    fn zero_levels_names_the_key() {
        let err = parse_config(&MINIMAL.replace("N = 2", "N = 0"), None).unwrap_err();
        assert!(err.to_string().contains("grid.N ≥ 1"), "{err}");
    }

    #[test]
    fn semi_gf_needs_a_power_map() {
        let doc = MINIMAL.replace("scheme = \"gf\"\n", "") + "[scheme.semi_gf]\nprotocol = \"dynamic\"\n";
        let err = parse_config(&doc, None).unwrap_err();
        assert!(err.to_string().contains("power_map"), "{err}");
        let ok = doc + "[power_map]\nsource = \"uniform\"\n";
        let p = parse_config(&ok, None).unwrap();
        let Scheme::SemiGf(s) = &p.config.scheme else { panic!() };
        assert_eq!(s.gb_mean_power, Some(6.0));
        assert_eq!(s.threshold, ThresholdType::UpperLimit);
    }

    #[test]
    fn unknown_keys_and_type_mismatches_fail() {
        assert!(parse_config(&(MINIMAL.to_string() + "bogus = 1\n"), None).is_err());
        assert!(parse_config(&MINIMAL.replace("N = 2", "N = \"two\""), None).is_err());
        assert!(parse_config(&MINIMAL.replace("M = 10", "M = 10\nextra = 1"), None).is_err());
    }

    #[test]
    fn missing_map_file_is_reported() {
        let doc = MINIMAL.to_string() + "[power_map]\nsource = \"file\"\npath = \"nope/map.json\"\n";
        let err = parse_config(&doc, None).unwrap_err();
        assert!(err.to_string().contains("power_map.path"), "{err}");
    }

    #[test]
    fn overrides_apply_before_validation() {
        let o = vec![("traffic.total_devices".to_string(), "40".to_string()),
                     ("decode_mode".to_string(), "sinr".to_string())];
        let p = parse_config_with_overrides(MINIMAL, None, &o).unwrap();
        assert_eq!(p.config.total_devices(), 40);
        assert_eq!(p.config.decode_mode, DecodeMode::Sinr);
        let bad = vec![("grid.M".to_string(), "0".to_string())];
        assert!(parse_config_with_overrides(MINIMAL, None, &bad).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let p = parse_config(MINIMAL, None).unwrap();
        let text = p.config.to_toml_string().unwrap();
        let again = parse_config(&text, None).unwrap();
        assert_eq!(again.config, p.config);
        assert!(again.defaulted.is_empty(), "{:?}", again.defaulted);
        let c = p.config.with_override("grid.N", toml::Value::Integer(3)).unwrap();
        assert_eq!(c.grid.levels, 3);
    }

    #[test]
    fn scalar_parsing() {
        assert_eq!(parse_scalar("3"), toml::Value::Integer(3));
        assert_eq!(parse_scalar("0.5"), toml::Value::Float(0.5));
        assert_eq!(parse_scalar("true"), toml::Value::Boolean(true));
        assert_eq!(parse_scalar("gf"), toml::Value::String("gf".into()));
    }
}
