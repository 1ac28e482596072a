//! The device count that maximizes the AAR, and how NOMA levels help.
//!
//! cargo run --release --example optimal_load

use mtnoma::analytics::{optimal_load, DecodeMode};
use mtnoma::grid::PowerGrid;

fn main() -> mtnoma::error::Result<()> {
    let rbs = 10;
    let oma = optimal_load(&PowerGrid::new(1, rbs, 1.0, 1.0, 1.0)?, DecodeMode::CollisionLimited, 200)?;
    for levels in 1..=4 {
        let grid = PowerGrid::new(levels, rbs, 1.0, 1.0, 1.0)?;
        let opt = optimal_load(&grid, DecodeMode::CollisionLimited, 200)?;
        println!(
            "N = {levels}: n* = {:>3}, max AAR = {:.3} ({:.2}x one level)",
            opt.n,
            opt.aar,
            opt.aar / oma.aar
        );
    }
    Ok(())
}
