//! Grant-based, grant-free and semi-grant-free access for one slot.
//!
//! In semi-grant-free access every RB may carry one grant-based (GB) device.
//! The base station derives a threshold from the GB device's estimated
//! received power and prunes the power map so grant-free (GF) devices can only
//! land on levels that keep the GB device's QoS:
//!
//! * upper limit: GF levels must not exceed the largest interference the GB
//!   device tolerates, `gb / qos_sinr - noise`. The GB device is decoded first.
//! * lower limit: GF levels must lie above the GB device, which is decoded
//!   last, interference free.
//!
//! The estimate is the instantaneous power (dynamic protocol) or an average
//! over past slots (open-loop protocol). With the open-loop estimate the
//! instantaneous power may have moved, and GF devices admitted from the stale
//! threshold can push the GB device into outage.
//!
//! Decoding of a cluster follows the SIC order of received powers. In the
//! collision-limited model a GB device succeeds when every uncancelled GF
//! level beneath it is within its tolerable interference; in the SINR model
//! the aggregate interference is used instead.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::DecodeMode;
use crate::error::{Error, Result};
use crate::grid::{
    decode_collision_limited, decode_sinr, meets_target, DecodeOutcome, DeviceId, PowerGrid,
    RbOccupancy,
};
use crate::powermap::{PoolEntry, PowerMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdType {
    LowerLimit,
    UpperLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemiGfProtocol {
    OpenLoop {
        estimation_window: usize,
        violation_prob: f64,
    },
    Dynamic,
}

/// Which PD-RB levels GF devices may use in one RB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Threshold {
    /// No GB device: every level is open.
    Unbounded,
    /// No level qualifies: GF devices keep silent.
    Closed,
    /// Upper limit: levels `0..=i`.
    AtMost(usize),
    /// Lower limit: levels strictly above `i`.
    Above(usize),
}

impl Threshold {
    pub fn allows(&self, level: usize) -> bool {
        match *self {
            Threshold::Unbounded => true,
            Threshold::Closed => false,
            Threshold::AtMost(i) => level <= i,
            Threshold::Above(i) => level > i,
        }
    }
}

/// Largest interference a GB device at `gb_power` tolerates.
pub fn max_affordable_interference(gb_power: f64, qos_sinr: f64, noise: f64) -> f64 {
    gb_power / qos_sinr - noise
}

/// Computes the intra-RB threshold from an estimated GB received power.
///
/// The closest level is rounded toward safety: down for the upper limit
/// (`P_i <= I_max`) and up for the lower limit (`P_i >= gb_power`).
pub fn compute_threshold(
    gb_power: Option<f64>,
    qos_sinr: f64,
    noise: f64,
    levels: &[f64],
    kind: ThresholdType,
) -> Threshold {
    let Some(gb) = gb_power else {
        return Threshold::Unbounded;
    };
    match kind {
        ThresholdType::UpperLimit => {
            let i_max = max_affordable_interference(gb, qos_sinr, noise);
            if !(i_max > 0.0) {
                return Threshold::Closed;
            }
            match levels.iter().rposition(|&p| p <= i_max) {
                Some(i) => Threshold::AtMost(i),
                None => Threshold::Closed,
            }
        }
        ThresholdType::LowerLimit => match levels.iter().position(|&p| p >= gb) {
            Some(i) => Threshold::Above(i),
            None => Threshold::Closed,
        },
    }
}

/// Removes from every pool the entries the threshold forbids.
pub fn prune_power_map(map: &PowerMap, threshold: &Threshold) -> PowerMap {
    map.retain_levels(|l| threshold.allows(l))
}

/// Grant-based baseline: one dedicated RB per scheduled device.
pub fn slot_gb(n: usize, num_rbs: usize) -> usize {
    n.min(num_rbs)
}

/// Multiplicative fading applied to received powers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fading {
    #[default]
    None,
    /// Rayleigh: unit-mean exponential power factor.
    Rayleigh,
    /// `low` with probability `p_low`, `high` otherwise.
    TwoPoint { low: f64, high: f64, p_low: f64 },
}

impl Fading {
    /// Draws one factor. Always consumes exactly one `u64` from `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        match *self {
            Fading::None => 1.0,
            Fading::Rayleigh => -(1.0 - u).ln(),
            Fading::TwoPoint { low, high, p_low } => {
                if u < p_low {
                    low
                } else {
                    high
                }
            }
        }
    }

    /// Two-point GB fading for which the open-loop threshold, computed from
    /// `mean_power`, is violated with probability `violation_prob`.
    ///
    /// Upper limit: the low state moves the GB power so its instantaneous
    /// threshold sits one level below the average-based one (the tolerable
    /// interference lands midway between the two levels). Lower limit: the
    /// high state lifts the GB power past the lowest admitted level. The other
    /// state keeps the mean at `mean_power` where that is feasible.
    pub fn calibrated_two_point(
        violation_prob: f64,
        mean_power: f64,
        qos_sinr: f64,
        noise: f64,
        levels: &[f64],
        kind: ThresholdType,
    ) -> Fading {
        let eps = violation_prob.clamp(0.0, 1.0);
        let other = |x: f64| {
            if eps >= 1.0 {
                1.0
            } else {
                ((1.0 - eps * x) / (1.0 - eps)).max(1e-3)
            }
        };
        match compute_threshold(Some(mean_power), qos_sinr, noise, levels, kind) {
            Threshold::AtMost(i) => {
                let below = if i == 0 { 0.0 } else { levels[i - 1] };
                let target = 0.5 * (below + levels[i]);
                let low = (target + noise) * qos_sinr / mean_power;
                Fading::TwoPoint { low, high: other(low), p_low: eps }
            }
            Threshold::Above(i) if i + 1 < levels.len() => {
                let next = levels.get(i + 2).copied().unwrap_or(2.0 * levels[i + 1]);
                let high = 0.5 * (levels[i + 1] + next) / mean_power;
                Fading::TwoPoint { low: other(high), high, p_low: 1.0 - eps }
            }
            _ => Fading::None,
        }
    }
}

/// Per-RB state of the grant-based device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbState {
    pub device: DeviceId,
    pub rb: usize,
    pub instantaneous_power: f64,
    pub average_power: f64,
    pub qos_sinr: f64,
}

/// A grant-free device contending this slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GfContender {
    pub device: DeviceId,
    pub region: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOptions {
    pub decode_mode: DecodeMode,
    /// Fading of GF received powers; only affects SINR decoding.
    pub gf_fading: Fading,
    /// Decode RBs on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl Default for SlotOptions {
    fn default() -> Self {
        SlotOptions {
            decode_mode: DecodeMode::CollisionLimited,
            gf_fading: Fading::None,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlotResult {
    pub gb_present: Vec<bool>,
    pub gb_success: Vec<bool>,
    pub gb_outage: Vec<bool>,
    pub gf_successes: Vec<DeviceId>,
    pub gf_failures: Vec<DeviceId>,
    /// Contenders that did not transmit (void pool after pruning).
    pub silent: Vec<DeviceId>,
    /// PD-RBs holding two or more GF devices.
    pub collisions: usize,
    /// GF devices sitting on a collided PD-RB.
    pub collided_devices: usize,
    pub admitted_gf: usize,
    pub rb_gf_counts: Vec<usize>,
    /// Sum of TPLs spent by GF transmitters.
    pub gf_energy: f64,
}

impl SlotResult {
    pub fn successes(&self) -> usize {
        self.gf_successes.len() + self.gb_success.iter().filter(|&&s| s).count()
    }

    pub fn idle_rbs(&self) -> usize {
        self.rb_gf_counts.iter().filter(|&&c| c == 0).count()
    }
}

struct RbAssignment {
    occupancy: RbOccupancy,
    powers: Vec<Vec<f64>>,
}

fn empty_assignments(grid: &PowerGrid) -> Vec<RbAssignment> {
    (0..grid.num_rbs())
        .map(|_| RbAssignment {
            occupancy: RbOccupancy::new(grid.num_levels()),
            powers: vec![Vec::new(); grid.num_levels()],
        })
        .collect()
}

/// Places contenders: RB uniformly, then an entry uniformly from the pool
/// returned by `pool_for(rb, region)`. Every contender consumes exactly three
/// draws (RB, entry, fading), admitted or not, so runs that differ only in
/// pruning stay aligned on the same random stream.
fn assign<R: Rng + ?Sized, F>(
    contenders: &[GfContender],
    grid: &PowerGrid,
    opts: &SlotOptions,
    rng: &mut R,
    result: &mut SlotResult,
    mut pool_for: F,
) -> Vec<RbAssignment>
where
    F: FnMut(usize, usize, &mut Vec<PoolEntry>),
{
    let mut rbs = empty_assignments(grid);
    let mut scratch = Vec::with_capacity(grid.num_levels());
    for c in contenders {
        let rb = rng.gen_range(0..grid.num_rbs());
        let u: f64 = rng.gen();
        let fade = opts.gf_fading.draw(rng);
        scratch.clear();
        pool_for(rb, c.region, &mut scratch);
        if scratch.is_empty() {
            result.silent.push(c.device);
            continue;
        }
        let entry = scratch[((u * scratch.len() as f64) as usize).min(scratch.len() - 1)];
        rbs[rb].occupancy.place(entry.level, c.device);
        rbs[rb].powers[entry.level].push(grid.level(entry.level) * fade);
        result.admitted_gf += 1;
        result.gf_energy += entry.tpl;
    }
    for a in &rbs {
        for level in 0..grid.num_levels() {
            let c = a.occupancy.count(level);
            if c >= 2 {
                result.collisions += 1;
                result.collided_devices += c;
            }
        }
    }
    result.rb_gf_counts = rbs.iter().map(|a| a.occupancy.total()).collect();
    rbs
}

fn map_rbs<T: Send, U: Send + Sync, F>(items: &[U], parallel: bool, f: F) -> Vec<T>
where
    F: Fn(usize, &U) -> T + Sync + Send,
{
    if parallel {
        items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()
    } else {
        items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
    }
}

fn decode_gf_only(a: &RbAssignment, grid: &PowerGrid, mode: DecodeMode) -> DecodeOutcome {
    match mode {
        DecodeMode::CollisionLimited => decode_collision_limited(&a.occupancy),
        DecodeMode::Sinr => {
            decode_sinr(&a.occupancy, grid, &a.powers).expect("assignment mirrors occupancy")
        }
    }
}

/// Pure grant-free slot. With a map, each contender draws from its region's
/// pool; without one, from every level.
pub fn slot_gf<R: Rng + ?Sized>(
    contenders: &[GfContender],
    grid: &PowerGrid,
    map: Option<&PowerMap>,
    opts: &SlotOptions,
    rng: &mut R,
) -> Result<SlotResult> {
    if let Some(m) = map {
        m.validate_against(grid)?;
        check_regions(contenders, m)?;
    }
    let mut result = SlotResult {
        gb_present: vec![false; grid.num_rbs()],
        gb_success: vec![false; grid.num_rbs()],
        gb_outage: vec![false; grid.num_rbs()],
        ..SlotResult::default()
    };
    let rbs = assign(contenders, grid, opts, rng, &mut result, |_, region, out| match map {
        Some(m) => out.extend_from_slice(&m.regions[region].entries),
        None => out.extend(
            grid.levels()
                .iter()
                .enumerate()
                .map(|(level, &tpl)| PoolEntry { level, tpl }),
        ),
    });
    let outcomes = map_rbs(&rbs, opts.parallel, |_, a| decode_gf_only(a, grid, opts.decode_mode));
    for o in outcomes {
        result.gf_successes.extend(o.succeeded);
        result.gf_failures.extend(o.failed);
    }
    Ok(result)
}

fn check_regions(contenders: &[GfContender], map: &PowerMap) -> Result<()> {
    match contenders.iter().find(|c| c.region >= map.num_regions()) {
        Some(c) => Err(Error::InvalidInput(format!(
            "device {} is in region {} but the map has {} regions",
            c.device,
            c.region,
            map.num_regions()
        ))),
        None => Ok(()),
    }
}

/// The GB signal as seen by the decoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbSignal {
    pub power: f64,
    pub qos_sinr: f64,
}

/// Decodes one RB holding an optional GB device and GF occupants.
///
/// Returns whether the GB device decoded (None without one) and the GF
/// outcome. Signals are processed strongest first; a GB power equal to a GF
/// level collides with that level. Any failure floods to every weaker signal.
pub fn decode_cluster(
    gb: Option<GbSignal>,
    occ: &RbOccupancy,
    powers: &[Vec<f64>],
    grid: &PowerGrid,
    mode: DecodeMode,
) -> (Option<bool>, DecodeOutcome) {
    let Some(gb) = gb else {
        let out = match mode {
            DecodeMode::CollisionLimited => decode_collision_limited(occ),
            DecodeMode::Sinr => decode_sinr(occ, grid, powers).expect("powers mirror occupancy"),
        };
        return (None, out);
    };
    let noise = grid.noise_power();
    let levels = grid.levels();

    // Received GF power strictly beneath level l.
    let mut below = Vec::with_capacity(levels.len());
    let mut acc = 0.0;
    for p in powers {
        below.push(acc);
        acc += p.iter().sum::<f64>();
    }
    let weaker_than_gb: f64 = (0..levels.len())
        .filter(|&l| levels[l] < gb.power)
        .map(|l| powers[l].iter().sum::<f64>())
        .sum();

    let mut out = DecodeOutcome::default();
    let mut gb_pending = true;
    let mut gb_ok = false;
    let mut failed = false;

    let decode_gb = |out: &DecodeOutcome| -> bool {
        let _ = out;
        match mode {
            DecodeMode::CollisionLimited => {
                let i_max = max_affordable_interference(gb.power, gb.qos_sinr, noise);
                (0..levels.len())
                    .filter(|&l| levels[l] < gb.power && occ.count(l) > 0)
                    .all(|l| levels[l] <= i_max)
            }
            DecodeMode::Sinr => meets_target(gb.power / (weaker_than_gb + noise), gb.qos_sinr),
        }
    };

    for level in (0..levels.len()).rev() {
        if failed {
            out.failed.extend_from_slice(occ.devices_at(level));
            continue;
        }
        if gb_pending && gb.power > levels[level] {
            gb_pending = false;
            gb_ok = decode_gb(&out);
            if !gb_ok {
                failed = true;
                out.failed.extend_from_slice(occ.devices_at(level));
                continue;
            }
        }
        let ties_gb = gb_pending && gb.power == levels[level];
        match occ.devices_at(level) {
            [] if ties_gb => {
                gb_pending = false;
                gb_ok = decode_gb(&out);
                failed = !gb_ok;
            }
            [] => {}
            devices if ties_gb => {
                gb_pending = false;
                out.failed.extend_from_slice(devices);
                failed = true;
            }
            [device] => {
                let ok = match mode {
                    DecodeMode::CollisionLimited => true,
                    DecodeMode::Sinr => {
                        let gb_below = if gb_pending { gb.power } else { 0.0 };
                        let sinr = powers[level][0] / (below[level] + gb_below + noise);
                        meets_target(sinr, grid.target_sinr())
                    }
                };
                if ok {
                    out.succeeded.push(*device);
                    out.decoded_levels.push(level);
                } else {
                    out.failed.push(*device);
                    failed = true;
                }
            }
            devices => {
                out.failed.extend_from_slice(devices);
                failed = true;
            }
        }
    }
    if gb_pending && !failed {
        // GB is the weakest signal; everything above it was cancelled.
        gb_ok = match mode {
            DecodeMode::CollisionLimited => true,
            DecodeMode::Sinr => meets_target(gb.power / noise, gb.qos_sinr),
        };
    }
    (Some(gb_ok), out)
}

/// Semi-grant-free slot.
///
/// `gb_states[rb]` describes the GB device of that RB, if any. For each RB
/// the threshold is computed from the protocol's power estimate, the map is
/// pruned accordingly, contenders draw an RB and then a TPL from their
/// region's pruned pool (or stay silent), and the cluster is decoded jointly.
#[allow(clippy::too_many_arguments)]
pub fn slot_semi_gf<R: Rng + ?Sized>(
    gb_states: &[Option<GbState>],
    gf: &[GfContender],
    map: &PowerMap,
    kind: ThresholdType,
    protocol: &SemiGfProtocol,
    grid: &PowerGrid,
    opts: &SlotOptions,
    rng: &mut R,
) -> Result<SlotResult> {
    map.validate_against(grid)?;
    check_regions(gf, map)?;
    if gb_states.len() != grid.num_rbs() {
        return Err(Error::InvalidInput(format!(
            "{} GB states for {} RBs",
            gb_states.len(),
            grid.num_rbs()
        )));
    }
    for (rb, s) in gb_states.iter().enumerate() {
        if let Some(s) = s {
            if s.rb != rb {
                return Err(Error::InvalidInput(format!("GB state for RB {} listed at {rb}", s.rb)));
            }
            if !(s.instantaneous_power > 0.0 && s.average_power > 0.0 && s.qos_sinr > 0.0) {
                return Err(Error::InvalidInput(format!("GB state on RB {rb} has non-positive power")));
            }
        }
    }

    let thresholds: Vec<Threshold> = gb_states
        .iter()
        .map(|s| {
            let estimate = s.map(|s| match protocol {
                SemiGfProtocol::Dynamic => s.instantaneous_power,
                SemiGfProtocol::OpenLoop { .. } => s.average_power,
            });
            let qos = s.map_or(1.0, |s| s.qos_sinr);
            compute_threshold(estimate, qos, grid.noise_power(), grid.levels(), kind)
        })
        .collect();

    let mut result = SlotResult {
        gb_present: gb_states.iter().map(Option::is_some).collect(),
        ..SlotResult::default()
    };
    let rbs = assign(gf, grid, opts, rng, &mut result, |rb, region, out| {
        out.extend(
            map.regions[region]
                .entries
                .iter()
                .filter(|e| thresholds[rb].allows(e.level)),
        )
    });
    let outcomes = map_rbs(&rbs, opts.parallel, |rb, a| {
        let gb = gb_states[rb].map(|s| GbSignal {
            power: s.instantaneous_power,
            qos_sinr: s.qos_sinr,
        });
        decode_cluster(gb, &a.occupancy, &a.powers, grid, opts.decode_mode)
    });
    for (rb, (gb_ok, o)) in outcomes.into_iter().enumerate() {
        let ok = gb_ok.unwrap_or(false);
        // An outage is a GB failure the threshold was meant to prevent: some
        // admitted level breaks the threshold of the true instantaneous power.
        // Failures from several GF devices piling up on allowed levels are
        // outside the guarantee and stay plain GB failures.
        let violated = gb_states[rb].is_some_and(|s| {
            let actual = compute_threshold(Some(s.instantaneous_power), s.qos_sinr, grid.noise_power(), grid.levels(), kind);
            (0..grid.num_levels()).any(|l| rbs[rb].occupancy.count(l) > 0 && !actual.allows(l))
        });
        result.gb_success.push(ok);
        result.gb_outage.push(gb_ok.is_some() && !ok && violated);
        result.gf_successes.extend(o.succeeded);
        result.gf_failures.extend(o.failed);
    }
    Ok(result)
}
