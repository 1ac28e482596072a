//! Runs a configured simulation and writes its per-slot metrics as CSV.
//!
//! cargo run --release --example simulate [output.csv]

use mtnoma::config::parse_config;
use mtnoma::output::{write_csv, Metadata};
use mtnoma::sim::run_simulation;

const CONFIG: &str = r#"
slots = 2000
seed = 42
scheme = "gf"

[grid]
N = 2
M = 10

[traffic]
total_devices = 40
model = { kind = "bernoulli", activation_prob = 0.5 }

[barring]
enabled = true
period = 20
"#;

fn main() -> mtnoma::error::Result<()> {
    let parsed = parse_config(CONFIG, None)?;
    let series = run_simulation(&parsed.config, parsed.config.seed, 1)?;
    let s = &series.summary;
    println!("AAR {:.3} ± {:.3}, load {:.2}, dropped {}", s.aar, s.aar_stderr, s.system_load, s.dropped);
    for p in series.barring.iter().take(5) {
        println!("period {}: q = {:.3}, estimated load {:.1}", p.period, p.rate, p.estimated_load);
    }
    if let Some(path) = std::env::args().nth(1) {
        let meta = Metadata::new(Some(parsed.config.seed), &parsed.config, parsed.defaulted)?;
        write_csv(&meta, &series.slots, std::fs::File::create(&path)?)?;
        println!("wrote {path}");
    }
    Ok(())
}
