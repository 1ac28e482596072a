//! Result files.
//!
//! JSON outputs are one document:
//!
//! ```json
//! { "schema_version": 1, "artifact_version": "0.1.0", "seed": 7,
//!   "config": { ... }, "defaulted": [ ... ], "metrics": { ... } }
//! ```
//!
//! CSV outputs start with `#` comment lines carrying the same metadata
//! (`# config {json}` and so on), then a header row and one row per record.
//! Readers that skip `#` lines see a plain table.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::barring::PeriodRecord;
use crate::error::Result;
use crate::experiments::{BarringDemoRow, CompareRow};
use crate::sim::{SlotMetrics, SweepRow, WindowMetrics};

pub const SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Default output directory when no explicit destination is given.
pub const OUTPUT_DIR_ENV: &str = "MTNOMA_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Everything needed to reproduce an output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub schema_version: u32,
    pub artifact_version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub defaulted: Vec<String>,
}

impl Metadata {
    pub fn new(seed: Option<u64>, config: &impl Serialize, defaulted: Vec<String>) -> Result<Self> {
        Ok(Metadata {
            schema_version: SCHEMA_VERSION,
            artifact_version: ARTIFACT_VERSION.to_string(),
            seed,
            config: serde_json::to_value(config)?,
            defaulted,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<T> {
    #[serde(flatten)]
    pub meta: Metadata,
    pub metrics: T,
}

pub fn write_json<T: Serialize, W: Write>(doc: &Document<T>, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, doc)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned, R: Read>(r: R) -> Result<Document<T>> {
    Ok(serde_json::from_reader(r)?)
}

/// A record type with a fixed column order.
pub trait Tabular: Serialize {
    const COLUMNS: &'static [&'static str];
}

macro_rules! tabular {
    ($t:ty, [$($c:literal),* $(,)?]) => {
        impl Tabular for $t {
            const COLUMNS: &'static [&'static str] = &[$($c),*];
        }
    };
}

tabular!(SlotMetrics, [
    "slot", "backlog", "active", "barred", "transmitters", "successes", "gf_successes", "failures",
    "silent", "collisions", "collided_devices", "gb_present", "gb_outages", "energy", "dropped",
    "barring_rate",
]);
tabular!(WindowMetrics, ["start", "slots", "aar", "system_load"]);
tabular!(PeriodRecord, [
    "period", "rate", "idle_rb_fraction", "successes_per_slot", "estimated_load", "next_rate", "ops",
]);
tabular!(SweepRow, [
    "axis", "value", "replications", "aar_mean", "aar_stderr", "system_load_mean",
    "system_load_stderr", "gb_outage_rate_mean", "gb_outage_rate_stderr", "collision_rate_mean",
    "collision_rate_stderr", "energy_per_success_mean", "energy_per_success_stderr",
    "dropped_mean", "dropped_stderr",
]);
tabular!(CompareRow, [
    "devices", "gb", "gf", "semi_gf_dynamic", "semi_gf_open_loop", "gb_outage_dynamic",
    "gb_outage_open_loop",
]);
tabular!(BarringDemoRow, [
    "devices", "aar_with", "aar_without", "load_with", "load_without", "min_window_aar_with",
    "max_window_aar_with",
]);

/// Writes the metadata preamble, the header and the rows. An empty table
/// still gets its header.
pub fn write_csv<T: Tabular, W: Write>(meta: &Metadata, rows: &[T], mut w: W) -> Result<()> {
    writeln!(w, "# artifact mtnoma {}", meta.artifact_version)?;
    writeln!(w, "# schema_version {}", meta.schema_version)?;
    match meta.seed {
        Some(s) => writeln!(w, "# seed {s}")?,
        None => writeln!(w, "# seed none")?,
    }
    writeln!(w, "# config {}", serde_json::to_string(&meta.config)?)?;
    if meta.defaulted.is_empty() {
        writeln!(w, "# defaulted")?;
    } else {
        writeln!(w, "# defaulted {}", meta.defaulted.join(","))?;
    }
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    csv.write_record(T::COLUMNS)?;
    for r in rows {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`], returning the comment lines (without
/// `# `) and the rows.
pub fn read_csv<T: DeserializeOwned>(text: &str) -> Result<(Vec<String>, Vec<T>)> {
    let comments = text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .map(|l| l.trim_start().to_string())
        .collect();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok((comments, rows))
}

/// Where an output goes: the explicit path, else `<$MTNOMA_OUTPUT_DIR>/<stem>.<ext>`,
/// else standard output (`None`).
pub fn destination(explicit: Option<&Path>, stem: &str, format: Format) -> Option<PathBuf> {
    if let Some(p) = explicit {
        return Some(p.to_path_buf());
    }
    std::env::var_os(OUTPUT_DIR_ENV)
        .filter(|d| !d.is_empty())
        .map(|d| PathBuf::from(d).join(format!("{stem}.{}", format.extension())))
}

/// Writes `bytes` to `dest` (creating parent directories) or to stdout.
pub fn deliver(dest: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match dest {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, bytes)?;
        }
        None => io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::sim::run_simulation;

    fn meta() -> Metadata {
        let p = parse_config("scheme = \"gf\"\nslots = 50\n[grid]\nN = 2\nM = 3\n[traffic]\ntotal_devices = 5\n", None)
            .unwrap();
        Metadata::new(Some(p.config.seed), &p.config, p.defaulted).unwrap()
    }

    fn header_of<T: Tabular>(row: &T) -> Vec<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(row).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        text.lines().next().unwrap().split(',').map(str::to_string).collect()
    }

    #[test]
    fn declared_columns_match_serialized_fields() {
        assert_eq!(header_of(&SlotMetrics::default()), SlotMetrics::COLUMNS);
        let w = WindowMetrics { start: 0, slots: 1, aar: 0.0, system_load: 0.0 };
        assert_eq!(header_of(&w), WindowMetrics::COLUMNS);
        let p = PeriodRecord { period: 0, rate: 1.0, idle_rb_fraction: 0.0, successes_per_slot: 0.0,
                               estimated_load: 0.0, next_rate: 1.0, ops: 0 };
        assert_eq!(header_of(&p), PeriodRecord::COLUMNS);
        let c = CompareRow { devices: 1, gb: 0.0, gf: 0.0, semi_gf_dynamic: 0.0, semi_gf_open_loop: 0.0,
                             gb_outage_dynamic: 0.0, gb_outage_open_loop: 0.0 };
        assert_eq!(header_of(&c), CompareRow::COLUMNS);
        let b = BarringDemoRow { devices: 1, aar_with: 0.0, aar_without: 0.0, load_with: 0.0, load_without: 0.0,
                                 min_window_aar_with: 0.0, max_window_aar_with: 0.0 };
        assert_eq!(header_of(&b), BarringDemoRow::COLUMNS);
    }

    #[test]
    fn empty_table_is_header_only() {
        let mut buf = Vec::new();
        write_csv::<SweepRow, _>(&meta(), &[], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data, vec![SweepRow::COLUMNS.join(",")]);
        let (comments, rows) = read_csv::<SweepRow>(&text).unwrap();
        assert!(rows.is_empty());
        assert!(comments.iter().any(|c| c.starts_with("config {")));
    }

    #[test]
    fn json_and_csv_round_trip() {
        let m = meta();
        let series = run_simulation(&serde_json::from_value(m.config.clone()).unwrap(), 7, 1).unwrap();
        let doc = Document { meta: m.clone(), metrics: series.clone() };
        let mut buf = Vec::new();
        write_json(&doc, &mut buf).unwrap();
        let back: Document<crate::sim::MetricsSeries> = read_json(buf.as_slice()).unwrap();
        assert_eq!(back, doc);

        let mut a = Vec::new();
        write_csv(&m, &series.slots, &mut a).unwrap();
        let mut b = Vec::new();
        write_csv(&m, &series.slots, &mut b).unwrap();
        assert_eq!(a, b);
        let (_, rows) = read_csv::<SlotMetrics>(std::str::from_utf8(&a).unwrap()).unwrap();
        assert_eq!(rows, series.slots);
    }

    #[test]
    fn destination_prefers_explicit_path() {
        let p = destination(Some(Path::new("x/out.csv")), "simulate", Format::Csv);
        assert_eq!(p, Some(PathBuf::from("x/out.csv")));
    }
}
