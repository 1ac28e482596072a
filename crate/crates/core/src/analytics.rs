//! Average arrival rate (AAR): exact expectations and Monte Carlo estimates.
//!
//! The AAR is the expected number of successful accesses. It is reported per
//! slot (summed over all RBs) and per RB.
//!
//! Exact computation uses three routes depending on the inputs:
//!
//! * uniform selection, collision-limited decoding: a recursion over levels.
//!   Given `r` devices spread uniformly over the top `j` levels of an RB, the
//!   top level holds `Bin(r, 1/j)` of them; zero passes the remaining devices
//!   down, one adds a success and passes `r - 1` down, two or more stop.
//! * uniform selection, SINR decoding: enumeration of level-count vectors
//!   weighted by their multinomial probability.
//! * pool-restricted selection: enumeration of labeled assignments.
//!
//! Uniform results use linearity over RBs: the RB load is `Bin(n, 1/M)` and
//! every RB contributes the same expectation.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{collision_limited_successes, sinr_nominal_successes, PowerGrid};
use crate::rng::{self, streams};

/// Default cap on the number of outcomes exact enumeration may visit.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 10_000_000;

const MC_CHUNK_TRIALS: u64 = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    #[default]
    CollisionLimited,
    Sinr,
}

impl DecodeMode {
    /// Successes in one RB given its level counts, at nominal received powers.
    pub fn rb_successes(self, counts: &[usize], grid: &PowerGrid) -> usize {
        match self {
            DecodeMode::CollisionLimited => collision_limited_successes(counts),
            DecodeMode::Sinr => sinr_nominal_successes(counts, grid),
        }
    }
}

/// One power-domain resource block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PdRb {
    pub level: usize,
    pub rb: usize,
}

/// How contending devices choose their PD-RB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum SelectionModel {
    /// Every device picks uniformly among all `N * M` PD-RBs.
    #[default]
    Uniform,
    /// Device `d` picks uniformly from `allowed[d]`.
    PoolRestricted(Vec<Vec<PdRb>>),
}

impl SelectionModel {
    fn validate(&self, n: usize, grid: &PowerGrid) -> Result<()> {
        if let SelectionModel::PoolRestricted(allowed) = self {
            if allowed.len() != n {
                return Err(Error::InvalidInput(format!(
                    "pool-restricted selection lists {} devices but n = {n}",
                    allowed.len()
                )));
            }
            for (d, set) in allowed.iter().enumerate() {
                if set.is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "device {d} has an empty PD-RB set; exclude void-pool devices first"
                    )));
                }
                if set
                    .iter()
                    .any(|p| p.level >= grid.num_levels() || p.rb >= grid.num_rbs())
                {
                    return Err(Error::InvalidInput(format!(
                        "device {d} lists a PD-RB outside the grid"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AarResult {
    pub expected_successes_per_slot: f64,
    pub per_rb: f64,
    pub stderr: f64,
    /// Monte Carlo trials; zero for exact results.
    pub trials: u64,
}

impl AarResult {
    fn exact(total: f64, num_rbs: usize) -> Self {
        AarResult {
            expected_successes_per_slot: total,
            per_rb: total / num_rbs as f64,
            stderr: 0.0,
            trials: 0,
        }
    }
}

/// Exact AAR with the default enumeration budget.
pub fn exact_aar(
    n: usize,
    grid: &PowerGrid,
    selection: &SelectionModel,
    mode: DecodeMode,
) -> Result<AarResult> {
    exact_aar_with_budget(n, grid, selection, mode, DEFAULT_ENUMERATION_BUDGET)
}

pub fn exact_aar_with_budget(
    n: usize,
    grid: &PowerGrid,
    selection: &SelectionModel,
    mode: DecodeMode,
    budget: u64,
) -> Result<AarResult> {
    selection.validate(n, grid)?;
    if n == 0 {
        return Ok(AarResult::exact(0.0, grid.num_rbs()));
    }
    let total = match (selection, mode) {
        (SelectionModel::Uniform, DecodeMode::CollisionLimited) => uniform_collision_limited(n, grid),
        (SelectionModel::Uniform, DecodeMode::Sinr) => {
            let required = compositions_up_to(n, grid.num_levels());
            if required > budget as f64 {
                return Err(Error::TooLarge { required, budget });
            }
            uniform_by_count_vectors(n, grid, mode)
        }
        (SelectionModel::PoolRestricted(allowed), _) => {
            let required: f64 = allowed.iter().map(|s| s.len() as f64).product();
            if required > budget as f64 {
                return Err(Error::TooLarge { required, budget });
            }
            labeled_enumeration(allowed, grid, mode)
        }
    };
    Ok(AarResult::exact(total, grid.num_rbs()))
}

/// Probability mass of `Bin(n, p)` at every `k`, computed in log space.
fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; n + 1];
    if p >= 1.0 {
        pmf[n] = 1.0;
        return pmf;
    }
    if p <= 0.0 {
        pmf[0] = 1.0;
        return pmf;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let mut log_mass = n as f64 * lq;
    for k in 0..=n {
        pmf[k] = log_mass.exp();
        if k < n {
            log_mass += ((n - k) as f64).ln() - ((k + 1) as f64).ln() + lp - lq;
        }
    }
    pmf
}

/// `per_rb[r]` = expected collision-limited successes in one RB holding `r`
/// devices spread uniformly over its levels, for `r = 0..=max_devices`.
pub(crate) fn rb_expectation_collision_limited(num_levels: usize, max_devices: usize) -> Vec<f64> {
    // prev[r] is the expectation over the top (j-1) levels.
    let mut prev = vec![0.0; max_devices + 1];
    for j in 1..=num_levels {
        let q = 1.0 - 1.0 / j as f64;
        let mut cur = vec![0.0; max_devices + 1];
        for r in 0..=max_devices {
            let none = q.powi(r as i32);
            let mut e = none * prev[r];
            if r >= 1 {
                let one = r as f64 / j as f64 * q.powi(r as i32 - 1);
                e += one * (1.0 + prev[r - 1]);
            }
            cur[r] = e;
        }
        prev = cur;
    }
    prev
}

fn uniform_collision_limited(n: usize, grid: &PowerGrid) -> f64 {
    let m = grid.num_rbs();
    let pmf = binomial_pmf(n, 1.0 / m as f64);
    let per_rb = rb_expectation_collision_limited(grid.num_levels(), n);
    m as f64 * pmf.iter().zip(&per_rb).map(|(p, e)| p * e).sum::<f64>()
}

/// Number of level-count vectors with total at most `n`: `C(n + N, N)`.
fn compositions_up_to(n: usize, num_levels: usize) -> f64 {
    (1..=num_levels).fold(1.0, |acc, i| acc * (n + i) as f64 / i as f64)
}

fn uniform_by_count_vectors(n: usize, grid: &PowerGrid, mode: DecodeMode) -> f64 {
    let levels = grid.num_levels();
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, i| {
            *acc += (i as f64).ln();
            Some(*acc)
        }))
        .collect();
    let ln_levels = (levels as f64).ln();

    let mut per_rb = vec![0.0; n + 1];
    let mut counts = vec![0; levels];
    for (k, slot) in per_rb.iter_mut().enumerate() {
        let mut acc = 0.0;
        visit_compositions(&mut counts, 0, k, &mut |c| {
            let ln_p = ln_fact[k] - c.iter().map(|&x| ln_fact[x]).sum::<f64>() - k as f64 * ln_levels;
            acc += ln_p.exp() * mode.rb_successes(c, grid) as f64;
        });
        *slot = acc;
    }
    let m = grid.num_rbs();
    let pmf = binomial_pmf(n, 1.0 / m as f64);
    m as f64 * pmf.iter().zip(&per_rb).map(|(p, e)| p * e).sum::<f64>()
}

fn visit_compositions(counts: &mut [usize], idx: usize, remaining: usize, f: &mut dyn FnMut(&[usize])) {
    if idx == counts.len() - 1 {
        counts[idx] = remaining;
        f(counts);
        return;
    }
    for c in 0..=remaining {
        counts[idx] = c;
        visit_compositions(counts, idx + 1, remaining - c, f);
    }
}

fn labeled_enumeration(allowed: &[Vec<PdRb>], grid: &PowerGrid, mode: DecodeMode) -> f64 {
    let levels = grid.num_levels();
    let mut counts = vec![0usize; levels * grid.num_rbs()];
    let mut choice = vec![0usize; allowed.len()];
    for (d, set) in allowed.iter().enumerate() {
        counts[set[0].rb * levels + set[0].level] += 1;
        choice[d] = 0;
    }
    let weight: f64 = allowed.iter().map(|s| 1.0 / s.len() as f64).product();
    let mut total = 0.0;
    loop {
        total += counts
            .chunks(levels)
            .map(|rb| mode.rb_successes(rb, grid))
            .sum::<usize>() as f64;
        // Odometer increment over the per-device choices.
        let mut d = 0;
        loop {
            if d == allowed.len() {
                return total * weight;
            }
            let old = allowed[d][choice[d]];
            counts[old.rb * levels + old.level] -= 1;
            choice[d] += 1;
            if choice[d] == allowed[d].len() {
                choice[d] = 0;
            }
            let new = allowed[d][choice[d]];
            counts[new.rb * levels + new.level] += 1;
            if choice[d] != 0 {
                break;
            }
            d += 1;
        }
    }
}

/// Monte Carlo AAR estimate.
///
/// Trials are split into fixed-size chunks, each drawing from its own
/// seed-derived stream, and reduced in chunk order, so the result depends on
/// `seed` only and not on the size of the rayon pool it runs in.
pub fn mc_aar(
    n: usize,
    grid: &PowerGrid,
    selection: &SelectionModel,
    mode: DecodeMode,
    trials: u64,
    seed: u64,
) -> Result<AarResult> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    selection.validate(n, grid)?;
    let chunks = trials.div_ceil(MC_CHUNK_TRIALS);
    let partial: Vec<(u64, u128)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let count = MC_CHUNK_TRIALS.min(trials - chunk * MC_CHUNK_TRIALS);
            mc_chunk(n, grid, selection, mode, count, seed, chunk)
        })
        .collect();
    let (sum, sum_sq) = partial
        .iter()
        .fold((0u64, 0u128), |(s, q), &(a, b)| (s + a, q + b));
    let t = trials as f64;
    let mean = sum as f64 / t;
    let stderr = if trials > 1 {
        let var = (sum_sq as f64 - sum as f64 * mean) / (t - 1.0);
        (var.max(0.0) / t).sqrt()
    } else {
        0.0
    };
    Ok(AarResult {
        expected_successes_per_slot: mean,
        per_rb: mean / grid.num_rbs() as f64,
        stderr,
        trials,
    })
}

fn mc_chunk(
    n: usize,
    grid: &PowerGrid,
    selection: &SelectionModel,
    mode: DecodeMode,
    trials: u64,
    seed: u64,
    chunk: u64,
) -> (u64, u128) {
    let mut rng = rng::stream(seed, &[streams::MC_CHUNK, chunk]);
    let levels = grid.num_levels();
    let pdrbs = grid.num_pdrbs();
    let mut counts = vec![0usize; pdrbs];
    let (mut sum, mut sum_sq) = (0u64, 0u128);
    for _ in 0..trials {
        counts.iter_mut().for_each(|c| *c = 0);
        match selection {
            SelectionModel::Uniform => {
                for _ in 0..n {
                    counts[rng.gen_range(0..pdrbs)] += 1;
                }
            }
            SelectionModel::PoolRestricted(allowed) => {
                for set in allowed {
                    let p = set[rng.gen_range(0..set.len())];
                    counts[p.rb * levels + p.level] += 1;
                }
            }
        }
        let s = counts
            .chunks(levels)
            .map(|rb| mode.rb_successes(rb, grid))
            .sum::<usize>() as u64;
        sum += s;
        sum_sq += (s as u128) * (s as u128);
    }
    (sum, sum_sq)
}

/// The contender count that maximizes the AAR and the maximum itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalLoad {
    pub n: usize,
    pub aar: f64,
    /// False when some candidate had to be estimated by Monte Carlo.
    pub exact: bool,
}

const SEARCH_MC_TRIALS: u64 = 20_000;
const SEARCH_MC_SEED: u64 = 0x0bad_5eed;

/// Searches `n` in `1..=n_max` for the maximum uniform-selection AAR.
///
/// Exact values are used while enumeration fits the default budget and Monte
/// Carlo beyond it. A candidate only displaces the incumbent when it is larger
/// by more than rounding (exact) or two combined standard errors (Monte
/// Carlo), so ties go to the smaller `n`. The Monte Carlo leg stops once the
/// curve has fallen below half of the incumbent, relying on the AAR being
/// unimodal in `n`.
pub fn optimal_load(grid: &PowerGrid, mode: DecodeMode, n_max: usize) -> Result<OptimalLoad> {
    optimal_load_with_budget(grid, mode, n_max, DEFAULT_ENUMERATION_BUDGET)
}

pub fn optimal_load_with_budget(
    grid: &PowerGrid,
    mode: DecodeMode,
    n_max: usize,
    budget: u64,
) -> Result<OptimalLoad> {
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be >= 1".into()));
    }
    let mut best: Option<(usize, AarResult)> = None;
    let mut exact = true;
    for n in 1..=n_max {
        let r = match exact_aar_with_budget(n, grid, &SelectionModel::Uniform, mode, budget) {
            Ok(r) => r,
            Err(Error::TooLarge { .. }) => {
                exact = false;
                mc_aar(n, grid, &SelectionModel::Uniform, mode, SEARCH_MC_TRIALS, SEARCH_MC_SEED ^ n as u64)?
            }
            Err(e) => return Err(e),
        };
        let value = r.expected_successes_per_slot;
        match best {
            None => best = Some((n, r)),
            Some((_, b)) => {
                let incumbent = b.expected_successes_per_slot;
                let slack = if r.trials == 0 && b.trials == 0 {
                    1e-12 * incumbent.abs().max(1.0)
                } else {
                    2.0 * (r.stderr.powi(2) + b.stderr.powi(2)).sqrt()
                };
                if value > incumbent + slack {
                    best = Some((n, r));
                } else if r.trials > 0 && value < 0.5 * incumbent {
                    break;
                }
            }
        }
    }
    let (n, r) = best.expect("n_max >= 1");
    Ok(OptimalLoad {
        n,
        aar: r.expected_successes_per_slot,
        exact,
    })
}
