//! Refines a generated power map with multi-agent Q-learning.
//!
//! cargo run --release --example q_learning_refine

use mtnoma::grid::PowerGrid;
use mtnoma::powermap::refine::{refine_power_map_q_learning, GridEnvironment, QLearningConfig};
use mtnoma::powermap::{generate_power_map, Area, ChannelModel, Point};

fn main() -> mtnoma::error::Result<()> {
    let grid = PowerGrid::new(3, 2, 1.0, 1.0, 1.0)?;
    let area = Area::Rectangle { origin: Point::new(1.0, 1.0), width: 20.0, height: 20.0 };
    let map = generate_power_map(&area, 2, 2, &ChannelModel::default(), Point::new(0.0, 0.0), &grid, 1e3)?;
    let cfg = QLearningConfig { episodes: 300, seed: 3, ..QLearningConfig::default() };
    let mut env = GridEnvironment::new(grid);
    let out = refine_power_map_q_learning(&map, &cfg, &mut env)?;
    println!("episodes {} converged {}", out.episodes_run, out.converged);
    for (before, after) in map.regions.iter().zip(&out.map.regions) {
        println!(
            "region {}: {:?} -> {:?}",
            before.region_id,
            before.levels().collect::<Vec<_>>(),
            after.levels().collect::<Vec<_>>()
        );
    }
    Ok(())
}
