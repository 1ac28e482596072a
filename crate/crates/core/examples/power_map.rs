//! Generates a power map over a square cell with one blocked corner.
//!
//! cargo run --example power_map

use mtnoma::grid::PowerGrid;
use mtnoma::powermap::{generate_power_map, Area, Blockage, ChannelModel, Point};

fn main() -> mtnoma::error::Result<()> {
    let grid = PowerGrid::new(3, 4, 1.0, 1.0, 1.0)?;
    let channel = ChannelModel {
        path_loss_exponent: 3.0,
        blockages: vec![Blockage {
            polygon: vec![
                Point::new(10.0, 10.0),
                Point::new(14.0, 10.0),
                Point::new(14.0, 14.0),
                Point::new(10.0, 14.0),
            ],
            attenuation: 0.1,
        }],
        ..ChannelModel::default()
    };
    let area = Area::Rectangle { origin: Point::new(1.0, 1.0), width: 30.0, height: 30.0 };
    let map = generate_power_map(&area, 3, 3, &channel, Point::new(0.0, 0.0), &grid, 2e5)?;
    for pool in &map.regions {
        let levels: Vec<_> = pool.levels().collect();
        println!(
            "region {:>2} at ({:>4.1}, {:>4.1}) gain {:.2e} levels {:?} avg tpl {:?}",
            pool.region_id, pool.center.x, pool.center.y, pool.mean_gain, levels, pool.average_tpl()
        );
    }
    println!("channel model hash {}", map.metadata.channel_model_hash);
    Ok(())
}
