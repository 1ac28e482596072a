//! One semi-grant-free slot: thresholds from the GB device's power, pruned
//! pools, and the joint decode.
//!
//! cargo run --example semi_gf_slot

use mtnoma::analytics::DecodeMode;
use mtnoma::grid::PowerGrid;
use mtnoma::powermap::PowerMap;
use mtnoma::protocols::{
    compute_threshold, prune_power_map, slot_semi_gf, GbState, GfContender, SemiGfProtocol, SlotOptions,
    ThresholdType,
};
use mtnoma::rng;

fn main() -> mtnoma::error::Result<()> {
    let grid = PowerGrid::new(3, 2, 1.0, 1.0, 1.0)?;
    let map = PowerMap::uniform(&grid);
    for kind in [ThresholdType::UpperLimit, ThresholdType::LowerLimit] {
        for gb in [1.5, 3.5, 9.0] {
            let t = compute_threshold(Some(gb), 1.0, grid.noise_power(), grid.levels(), kind);
            let pruned = prune_power_map(&map, &t);
            println!("{kind:?} gb={gb}: {t:?}, open levels {:?}", pruned.regions[0].levels().collect::<Vec<_>>());
        }
    }

    // RB 0: a GB device whose average suggests 9 but which currently receives 2.5.
    let gb = |rb, inst, avg| GbState { device: 100 + rb, rb, instantaneous_power: inst, average_power: avg, qos_sinr: 1.0 };
    let states = [Some(gb(0, 2.5, 9.0)), Some(gb(1, 9.0, 9.0))];
    let gf: Vec<_> = (0..4).map(|device| GfContender { device, region: 0 }).collect();
    let opts = SlotOptions { decode_mode: DecodeMode::CollisionLimited, ..SlotOptions::default() };
    for protocol in [SemiGfProtocol::Dynamic, SemiGfProtocol::OpenLoop { estimation_window: 10, violation_prob: 0.6 }] {
        let mut rng = rng::stream(4, &[0]);
        let r = slot_semi_gf(&states, &gf, &map, ThresholdType::UpperLimit, &protocol, &grid, &opts, &mut rng)?;
        println!(
            "{protocol:?}: gb ok {:?}, gf decoded {:?}, silent {:?}, successes {}",
            r.gb_success, r.gf_successes, r.silent, r.successes()
        );
    }
    Ok(())
}
