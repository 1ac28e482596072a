//! GB, GF and semi-GF average arrival rate over the number of devices.
//!
//! cargo run --release --example compare_schemes

use mtnoma::experiments::{compare, CompareParams};

fn main() -> mtnoma::error::Result<()> {
    let params = CompareParams::default();
    let report = compare(&params, 4)?;
    println!("{:>4} {:>8} {:>8} {:>10} {:>10} {:>8} {:>8}", "n", "gb", "gf", "dynamic", "open_loop", "out_dyn", "out_ol");
    for r in &report.rows {
        println!(
            "{:>4} {:>8.3} {:>8.3} {:>10.3} {:>10.3} {:>8.3} {:>8.3}",
            r.devices, r.gb, r.gf, r.semi_gf_dynamic, r.semi_gf_open_loop, r.gb_outage_dynamic, r.gb_outage_open_loop
        );
    }
    println!("max gain over GB: {:.1}%", 100.0 * report.max_gain_over_gb);
    println!("max ratio over GF: {:.2}x", report.max_ratio_over_gf);
    Ok(())
}
