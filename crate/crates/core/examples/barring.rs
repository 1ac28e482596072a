//! Saturated grant-free traffic with and without user barring.
//!
//! cargo run --release --example barring

use mtnoma::experiments::{barring_demo, BarringDemoParams};

fn main() -> mtnoma::error::Result<()> {
    let report = barring_demo(&BarringDemoParams::default(), 4)?;
    println!("n* = {}, max AAR = {:.3}", report.optimal_load, report.max_aar);
    println!("{:>4} {:>9} {:>9} {:>9} {:>9} {:>8} {:>8}", "n", "aar_with", "aar_w/o", "load", "load_w/o", "win_min", "win_max");
    for r in &report.rows {
        println!(
            "{:>4} {:>9.3} {:>9.3} {:>9.2} {:>9.2} {:>8.2} {:>8.2}",
            r.devices, r.aar_with, r.aar_without, r.load_with, r.load_without, r.min_window_aar_with, r.max_window_aar_with
        );
    }
    Ok(())
}
