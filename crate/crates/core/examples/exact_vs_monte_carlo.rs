//! Exact average arrival rate against a Monte Carlo estimate.
//!
//! cargo run --release --example exact_vs_monte_carlo

use mtnoma::analytics::{exact_aar, mc_aar, DecodeMode, SelectionModel};
use mtnoma::grid::PowerGrid;

fn main() -> mtnoma::error::Result<()> {
    let grid = PowerGrid::new(3, 2, 1.0, 1.0, 1.0)?;
    println!("{:>3} {:>18} {:>10} {:>10} {:>8}", "n", "mode", "exact", "mc", "z");
    for mode in [DecodeMode::CollisionLimited, DecodeMode::Sinr] {
        for n in 1..=6 {
            let exact = exact_aar(n, &grid, &SelectionModel::Uniform, mode)?;
            let mc = mc_aar(n, &grid, &SelectionModel::Uniform, mode, 200_000, n as u64)?;
            let z = (mc.expected_successes_per_slot - exact.expected_successes_per_slot) / mc.stderr.max(1e-12);
            println!(
                "{:>3} {:>18?} {:>10.5} {:>10.5} {:>8.2}",
                n, mode, exact.expected_successes_per_slot, mc.expected_successes_per_slot, z
            );
        }
    }
    Ok(())
}
