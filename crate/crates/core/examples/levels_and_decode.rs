//! Builds the received power levels of a grid and decodes a few RB
//! occupancies with SIC.
//!
//! cargo run --example levels_and_decode

use mtnoma::grid::{decode_collision_limited, decode_sinr_nominal, PowerGrid, RbOccupancy};

fn main() -> mtnoma::error::Result<()> {
    let grid = PowerGrid::new(4, 1, 1.0, 1.0, 1.0)?;
    println!("levels (weakest first): {:?}", grid.levels());

    // One device on the strongest level, two colliding two levels below.
    let mut occ = RbOccupancy::new(4);
    occ.place(3, 0);
    occ.place(1, 1);
    occ.place(1, 2);
    let out = decode_collision_limited(&occ);
    println!("collision-limited: decoded {:?}, failed {:?}", out.succeeded, out.failed);

    // Without collisions both decoding models agree.
    let occ = RbOccupancy::from_counts(&[1, 0, 1, 1]);
    let cl = decode_collision_limited(&occ);
    let sinr = decode_sinr_nominal(&occ, &grid)?;
    println!("distinct levels: {} vs {} successes", cl.succeeded.len(), sinr.succeeded.len());
    Ok(())
}
