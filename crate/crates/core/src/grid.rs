//! Power-domain resource block grid and SIC decoding for one RB.
//!
//! Each of the `M` orthogonal resource blocks is split into `N` received
//! power levels (RPLs). A device picks one (level, RB) pair, a PD-RB. The base
//! station decodes an RB by successive interference cancellation from the
//! strongest level down. Level indices are 0-based throughout the crate:
//! level `0` is the weakest RPL and level `N - 1` the strongest.
//!
//! Two decode models are provided:
//!
//! * [`decode_collision_limited`]: a level succeeds iff it holds exactly one
//!   device and every occupied level above it succeeded.
//! * [`decode_sinr`]: as above, but a singleton level must also reach the
//!   target SINR against the uncancelled lower-level interference.
//!
//! In both models a failure floods downward: the uncancelled signal cannot be
//! removed, so every lower level fails with it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type DeviceId = usize;

/// Relative slack applied to every SINR comparison so that levels built with
/// `margin = 1` decode exactly at the target despite rounding.
pub const SINR_TOLERANCE: f64 = 1e-9;

pub(crate) fn meets_target(sinr: f64, target: f64) -> bool {
    sinr >= target * (1.0 - SINR_TOLERANCE)
}

/// Builds the received power levels for `num_levels` PD-RBs per RB.
///
/// `P_1 = margin * target_sinr * noise_power` and every higher level is
/// `margin * target_sinr * (noise_power + sum of lower levels)`, so a lone
/// device on any level clears the target SINR against everything beneath it.
pub fn build_levels(
    num_levels: usize,
    target_sinr: f64,
    noise_power: f64,
    margin: f64,
) -> Result<Vec<f64>> {
    if num_levels == 0 {
        return Err(Error::InvalidParameter("number of levels must be >= 1".into()));
    }
    if !(target_sinr > 0.0 && target_sinr.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target SINR must be positive, got {target_sinr}"
        )));
    }
    if !(noise_power > 0.0 && noise_power.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise power must be positive, got {noise_power}"
        )));
    }
    if !(margin >= 1.0 && margin.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "margin must be >= 1, got {margin}"
        )));
    }
    let mut levels = Vec::with_capacity(num_levels);
    let mut below = 0.0;
    for _ in 0..num_levels {
        let level = margin * target_sinr * (noise_power + below);
        levels.push(level);
        below += level;
    }
    Ok(levels)
}

/// The `N x M` PD-RB structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerGrid {
    levels: Vec<f64>,
    num_rbs: usize,
    target_sinr: f64,
    noise_power: f64,
    margin: f64,
}

impl PowerGrid {
    pub fn new(
        num_levels: usize,
        num_rbs: usize,
        target_sinr: f64,
        noise_power: f64,
        margin: f64,
    ) -> Result<Self> {
        let levels = build_levels(num_levels, target_sinr, noise_power, margin)?;
        Self::from_levels(levels, num_rbs, target_sinr, noise_power, margin)
    }

    /// Wraps an explicit level list, checking the grid invariants.
    pub fn from_levels(
        levels: Vec<f64>,
        num_rbs: usize,
        target_sinr: f64,
        noise_power: f64,
        margin: f64,
    ) -> Result<Self> {
        let grid = PowerGrid {
            levels,
            num_rbs,
            target_sinr,
            noise_power,
            margin,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidParameter("grid needs at least one level".into()));
        }
        if self.num_rbs == 0 {
            return Err(Error::InvalidParameter("grid needs at least one RB".into()));
        }
        if !(self.target_sinr > 0.0) || !(self.noise_power > 0.0) || !(self.margin >= 1.0) {
            return Err(Error::InvalidParameter(
                "target SINR and noise power must be positive and margin >= 1".into(),
            ));
        }
        let mut below = 0.0;
        for (i, &p) in self.levels.iter().enumerate() {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::InvalidParameter(format!("level {i} is not a positive power")));
            }
            if i > 0 && p <= self.levels[i - 1] {
                return Err(Error::InvalidParameter("levels must be strictly increasing".into()));
            }
            if !meets_target(p / (below + self.noise_power), self.target_sinr) {
                return Err(Error::InvalidParameter(format!(
                    "level {i} cannot clear the target SINR over the levels beneath it"
                )));
            }
            below += p;
        }
        Ok(())
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn level(&self, index: usize) -> f64 {
        self.levels[index]
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn num_rbs(&self) -> usize {
        self.num_rbs
    }

    /// Number of PD-RBs, `N * M`.
    pub fn num_pdrbs(&self) -> usize {
        self.levels.len() * self.num_rbs
    }

    pub fn target_sinr(&self) -> f64 {
        self.target_sinr
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }
}

/// Which devices picked which level of one RB in one slot.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RbOccupancy {
    by_level: Vec<Vec<DeviceId>>,
}

impl RbOccupancy {
    pub fn new(num_levels: usize) -> Self {
        RbOccupancy {
            by_level: vec![Vec::new(); num_levels],
        }
    }

    /// Builds an occupancy from level counts, numbering devices from zero
    /// upward starting at level 0.
    pub fn from_counts(counts: &[usize]) -> Self {
        let mut occ = RbOccupancy::new(counts.len());
        let mut next = 0;
        for (level, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                occ.place(level, next);
                next += 1;
            }
        }
        occ
    }

    pub fn place(&mut self, level: usize, device: DeviceId) {
        self.by_level[level].push(device);
    }

    pub fn num_levels(&self) -> usize {
        self.by_level.len()
    }

    pub fn devices_at(&self, level: usize) -> &[DeviceId] {
        &self.by_level[level]
    }

    pub fn count(&self, level: usize) -> usize {
        self.by_level[level].len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.by_level.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.by_level.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_level.iter().all(Vec::is_empty)
    }

    /// Occupied level indices, strongest first.
    pub fn occupied_levels_desc(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.by_level.len())
            .rev()
            .filter(move |&l| !self.by_level[l].is_empty())
    }
}

/// Result of decoding one RB.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecodeOutcome {
    pub succeeded: Vec<DeviceId>,
    pub failed: Vec<DeviceId>,
    /// Levels decoded, in SIC order (strictly decreasing).
    pub decoded_levels: Vec<usize>,
}

impl DecodeOutcome {
    fn fail_from(&mut self, occ: &RbOccupancy, top: usize) {
        for level in (0..=top).rev() {
            self.failed.extend_from_slice(occ.devices_at(level));
        }
    }
}

/// Decodes one RB where only collisions cause failures.
///
/// Scanning from the strongest level, singleton levels decode until the first
/// level holding two or more devices; that level and everything below fail.
pub fn decode_collision_limited(occ: &RbOccupancy) -> DecodeOutcome {
    let mut out = DecodeOutcome::default();
    for level in (0..occ.num_levels()).rev() {
        match occ.devices_at(level) {
            [] => {}
            [device] => {
                out.succeeded.push(*device);
                out.decoded_levels.push(level);
            }
            _ => {
                out.fail_from(occ, level);
                break;
            }
        }
    }
    out
}

/// Decodes one RB with an explicit SINR check at every singleton level.
///
/// `received_powers` mirrors the occupancy: `received_powers[l][k]` is the
/// linear received power of `occ.devices_at(l)[k]`. SIC order follows the
/// level index. The interference seen by a singleton level is the sum of all
/// uncancelled lower-level signals plus noise.
pub fn decode_sinr(
    occ: &RbOccupancy,
    grid: &PowerGrid,
    received_powers: &[Vec<f64>],
) -> Result<DecodeOutcome> {
    if occ.num_levels() != grid.num_levels() || received_powers.len() != occ.num_levels() {
        return Err(Error::InvalidInput(format!(
            "occupancy has {} levels, grid {} and power list {}",
            occ.num_levels(),
            grid.num_levels(),
            received_powers.len()
        )));
    }
    for (level, powers) in received_powers.iter().enumerate() {
        if powers.len() != occ.count(level) {
            return Err(Error::InvalidInput(format!(
                "level {level} holds {} devices but {} received powers",
                occ.count(level),
                powers.len()
            )));
        }
        if powers.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "level {level} has a negative or non-finite received power"
            )));
        }
    }

    // below[l] = total received power on levels strictly beneath l.
    let mut below = Vec::with_capacity(occ.num_levels());
    let mut acc = 0.0;
    for powers in received_powers {
        below.push(acc);
        acc += powers.iter().sum::<f64>();
    }

    let mut out = DecodeOutcome::default();
    for level in (0..occ.num_levels()).rev() {
        match occ.devices_at(level) {
            [] => {}
            [device] => {
                let sinr = received_powers[level][0] / (below[level] + grid.noise_power());
                if meets_target(sinr, grid.target_sinr()) {
                    out.succeeded.push(*device);
                    out.decoded_levels.push(level);
                } else {
                    out.fail_from(occ, level);
                    break;
                }
            }
            _ => {
                out.fail_from(occ, level);
                break;
            }
        }
    }
    Ok(out)
}

/// [`decode_sinr`] with every device received at its nominal RPL.
pub fn decode_sinr_nominal(occ: &RbOccupancy, grid: &PowerGrid) -> Result<DecodeOutcome> {
    let powers: Vec<Vec<f64>> = (0..occ.num_levels())
        .map(|l| vec![grid.levels().get(l).copied().unwrap_or(0.0); occ.count(l)])
        .collect();
    decode_sinr(occ, grid, &powers)
}

/// Success count of [`decode_collision_limited`] computed from level counts.
pub fn collision_limited_successes(counts: &[usize]) -> usize {
    let mut successes = 0;
    for &c in counts.iter().rev() {
        match c {
            0 => {}
            1 => successes += 1,
            _ => break,
        }
    }
    successes
}

/// Success count of [`decode_sinr_nominal`] computed from level counts.
pub fn sinr_nominal_successes(counts: &[usize], grid: &PowerGrid) -> usize {
    let levels = grid.levels();
    let mut below = vec![0.0; counts.len()];
    let mut acc = 0.0;
    for (l, &c) in counts.iter().enumerate() {
        below[l] = acc;
        acc += c as f64 * levels[l];
    }
    let mut successes = 0;
    for l in (0..counts.len()).rev() {
        match counts[l] {
            0 => {}
            1 => {
                if meets_target(levels[l] / (below[l] + grid.noise_power()), grid.target_sinr()) {
                    successes += 1;
                } else {
                    break;
                }
            }
            _ => break,
        }
    }
    successes
}
