//! Sweeps the number of grant-free devices and prints the table as CSV.
//!
//! cargo run --release --example sweep_csv > sweep.csv

use mtnoma::config::parse_config;
use mtnoma::output::{write_csv, Metadata};
use mtnoma::sim::sweep;

fn main() -> mtnoma::error::Result<()> {
    let parsed = parse_config("slots = 3000\nscheme = \"gf\"\n[grid]\nN = 2\nM = 10\n", None)?;
    let values: Vec<_> = (5..=60).step_by(5).map(toml::Value::Integer).collect();
    let rows = sweep(&parsed.config, "traffic.total_devices", &values, 3, 11, 4)?;
    let meta = Metadata::new(Some(11), &parsed.config, parsed.defaulted)?;
    write_csv(&meta, &rows, std::io::stdout().lock())
}
