//! User barring for grant-free traffic.
//!
//! Once per barring period the base station estimates how many devices are
//! backlogged from the fraction of idle RBs it observed, and sets the barring
//! rate so the expected number of contenders sits at the optimal load. A
//! backlogged device draws `u` in `(0, 1]`; if `u <= q` it may transmit for the
//! rest of the period, otherwise it is barred for a full period.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{optimal_load, DecodeMode};
use crate::error::{Error, Result};
use crate::grid::{DeviceId, PowerGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarringState {
    pub rate: f64,
    pub period: usize,
    pub optimal_load: usize,
    pub max_aar: f64,
    pub load_cap: usize,
}

impl BarringState {
    pub fn new(period: usize, optimal_load: usize, max_aar: f64, load_cap: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidParameter("barring period must be >= 1".into()));
        }
        if optimal_load == 0 {
            return Err(Error::InvalidParameter("optimal load must be >= 1".into()));
        }
        if load_cap < optimal_load {
            return Err(Error::InvalidParameter(format!(
                "load cap {load_cap} is below the optimal load {optimal_load}"
            )));
        }
        Ok(BarringState { rate: 1.0, period, optimal_load, max_aar, load_cap })
    }

    /// Initializes from the grid's optimal load, searched over `1..=search_max`.
    /// A missing cap defaults to `100 * n*`.
    pub fn for_grid(
        grid: &PowerGrid,
        mode: DecodeMode,
        period: usize,
        search_max: usize,
        load_cap: Option<usize>,
    ) -> Result<Self> {
        let opt = optimal_load(grid, mode, search_max)?;
        BarringState::new(period, opt.n, opt.aar, load_cap.unwrap_or(100 * opt.n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodObservation {
    /// Idle RBs over `slots * M` RB-slots.
    pub idle_rb_fraction: f64,
    pub successes_per_slot: f64,
    pub slots: usize,
}

/// Load estimate from the idle-RB statistic.
///
/// With `B` backlogged devices each active with probability `q` and choosing
/// among `M` RBs, an RB is idle with probability `(1 - q/M)^B`; inverting gives
/// `ln f / ln(1 - q/M)`. `f` is floored at `1 / (slots * M)`, the resolution of
/// one period, and the result is capped at `load_cap`. A period with no idle
/// RB therefore reads as the largest load one period can resolve, which is
/// `load_cap` only when the cap is below that resolution limit.
pub fn estimate_load(obs: &PeriodObservation, rate: f64, num_rbs: usize, load_cap: usize) -> f64 {
    let cap = load_cap as f64;
    if !(rate > 0.0) {
        return cap;
    }
    let f_min = 1.0 / (obs.slots.max(1) * num_rbs.max(1)) as f64;
    let f = obs.idle_rb_fraction.clamp(f_min, 1.0);
    let denom = (1.0 - rate / num_rbs as f64).ln();
    if !denom.is_finite() {
        // q = M = 1: every active device lands on the single RB.
        return if f >= 1.0 { 0.0 } else { cap };
    }
    (f.ln() / denom).clamp(0.0, cap)
}

/// Rate for the next period, aiming the expected contender count at `n*`.
pub fn update_rate(n_hat: f64, state: &BarringState) -> f64 {
    (state.optimal_load as f64 / n_hat.max(1.0)).min(1.0)
}

fn admit<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> bool {
    let u = 1.0 - rng.gen::<f64>();
    u <= rate
}

/// One independent barring draw per backlogged device, in order.
pub fn apply_barring<R: Rng + ?Sized>(
    backlogged: &[DeviceId],
    rate: f64,
    rng: &mut R,
) -> (Vec<DeviceId>, Vec<DeviceId>) {
    let mut active = Vec::new();
    let mut barred = Vec::new();
    for &d in backlogged {
        if admit(rate, rng) {
            active.push(d);
        } else {
            barred.push(d);
        }
    }
    (active, barred)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LoadEstimator {
    #[default]
    IdleFraction,
    /// Uses the true backlog. For validation only.
    Oracle,
}

/// One row of the barring trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub period: usize,
    pub rate: f64,
    pub idle_rb_fraction: f64,
    pub successes_per_slot: f64,
    pub estimated_load: f64,
    pub next_rate: f64,
    /// Controller operations spent on this period.
    pub ops: u64,
}

/// Period-level state machine: aggregates per-slot observations and updates
/// the rate at each boundary.
#[derive(Debug, Clone)]
pub struct BarringController {
    pub state: BarringState,
    pub estimator: LoadEstimator,
    num_rbs: usize,
    slots: usize,
    idle: u64,
    successes: u64,
    ops: u64,
    periods: usize,
}

/// Arithmetic cost charged for estimate plus update.
const UPDATE_OPS: u64 = 8;

impl BarringController {
    pub fn new(state: BarringState, estimator: LoadEstimator, num_rbs: usize) -> Self {
        BarringController {
            state,
            estimator,
            num_rbs,
            slots: 0,
            idle: 0,
            successes: 0,
            ops: 0,
            periods: 0,
        }
    }

    pub fn rate(&self) -> f64 {
        self.state.rate
    }

    /// Records one slot given each RB's idle flag.
    pub fn observe_slot(&mut self, rb_idle: impl IntoIterator<Item = bool>, successes: usize) {
        for idle in rb_idle {
            self.idle += idle as u64;
            self.ops += 1;
        }
        self.successes += successes as u64;
        self.slots += 1;
    }

    pub fn period_complete(&self) -> bool {
        self.slots >= self.state.period
    }

    /// Closes the period: estimates the load, updates the rate and resets the
    /// accumulators. `true_backlog` feeds the oracle estimator.
    pub fn end_period(&mut self, true_backlog: usize) -> PeriodRecord {
        let slots = self.slots.max(1);
        let obs = PeriodObservation {
            idle_rb_fraction: self.idle as f64 / (slots * self.num_rbs) as f64,
            successes_per_slot: self.successes as f64 / slots as f64,
            slots,
        };
        let n_hat = match self.estimator {
            LoadEstimator::IdleFraction => {
                estimate_load(&obs, self.state.rate, self.num_rbs, self.state.load_cap)
            }
            LoadEstimator::Oracle => true_backlog.min(self.state.load_cap) as f64,
        };
        let next = update_rate(n_hat, &self.state);
        self.ops += UPDATE_OPS;
        let record = PeriodRecord {
            period: self.periods,
            rate: self.state.rate,
            idle_rb_fraction: obs.idle_rb_fraction,
            successes_per_slot: obs.successes_per_slot,
            estimated_load: n_hat,
            next_rate: next,
            ops: self.ops,
        };
        self.state.rate = next;
        self.periods += 1;
        self.slots = 0;
        self.idle = 0;
        self.successes = 0;
        self.ops = 0;
        record
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Permit {
    Undecided,
    ActiveUntil(u64),
    BarredUntil(u64),
}

/// Device-side barring state across slots.
#[derive(Debug, Clone)]
pub struct BarringGate {
    permits: Vec<Permit>,
    period: u64,
}

impl BarringGate {
    pub fn new(num_devices: usize, period: usize) -> Self {
        BarringGate { permits: vec![Permit::Undecided; num_devices], period: period as u64 }
    }

    /// Splits backlogged devices into those allowed to transmit in `slot` and
    /// those barred. A device holding no valid permit draws once; admission
    /// lasts until `period_end`, a bar lasts one full period. Admission is tied
    /// to the device, not the packet, so a fresh packet inherits it.
    pub fn gate<R: Rng + ?Sized>(
        &mut self,
        backlogged: &[DeviceId],
        slot: u64,
        period_end: u64,
        rate: f64,
        rng: &mut R,
    ) -> (Vec<DeviceId>, usize) {
        let mut active = Vec::with_capacity(backlogged.len());
        let mut barred = 0;
        for &d in backlogged {
            let permit = match self.permits[d] {
                Permit::ActiveUntil(e) if slot < e => Permit::ActiveUntil(e),
                Permit::BarredUntil(e) if slot < e => Permit::BarredUntil(e),
                _ if admit(rate, rng) => Permit::ActiveUntil(period_end),
                _ => Permit::BarredUntil(slot + self.period),
            };
            self.permits[d] = permit;
            match permit {
                Permit::ActiveUntil(_) => active.push(d),
                _ => barred += 1,
            }
        }
        (active, barred)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn obs(f: f64) -> PeriodObservation {
        PeriodObservation { idle_rb_fraction: f, successes_per_slot: 0.0, slots: 20 }
    }

    #[test]
    fn estimate_examples() {
        assert_eq!(estimate_load(&obs(1.0), 0.5, 10, 1000), 0.0);
        let n = estimate_load(&obs(0.1285), 0.5, 10, 1000);
        assert!((n - 40.0).abs() < 0.05, "{n}");
        assert!((0.95f64.powi(40) - 0.1285).abs() < 5e-4);
        // f = 0 is floored at 1/(ΛM) and then capped.
        assert_eq!(estimate_load(&obs(0.0), 0.5, 10, 30), 30.0);
        let floor = (1.0f64 / 200.0).ln() / 0.95f64.ln();
        assert!((estimate_load(&obs(0.0), 0.5, 10, 1000) - floor).abs() < 1e-9);
        assert_eq!(estimate_load(&obs(0.3), 0.0, 10, 77), 77.0);
        assert_eq!(estimate_load(&obs(1.0), 1.0, 1, 77), 0.0);
        assert_eq!(estimate_load(&obs(0.5), 1.0, 1, 77), 77.0);
    }

    #[test]
    fn update_examples() {
        let s = BarringState::new(20, 20, 8.0, 2000).unwrap();
        assert_eq!(update_rate(0.0, &s), 1.0);
        assert_eq!(update_rate(40.0, &s), 0.5);
        assert_eq!(update_rate(15.0, &s), 1.0);
        assert_eq!(update_rate(20.0, &s), 1.0);
    }

    #[test]
    fn state_validation() {
        assert!(BarringState::new(0, 1, 1.0, 10).is_err());
        assert!(BarringState::new(1, 0, 1.0, 10).is_err());
        assert!(BarringState::new(1, 20, 1.0, 10).is_err());
        let grid = PowerGrid::new(4, 10, 1.0, 1.0, 1.0).unwrap();
        let s = BarringState::for_grid(&grid, DecodeMode::CollisionLimited, 20, 200, None).unwrap();
        assert_eq!((s.optimal_load, s.load_cap, s.rate), (26, 2600, 1.0));
        assert!((s.max_aar - 11.248).abs() < 1e-3);
    }

    #[test]
    fn apply_examples() {
        let devices: Vec<_> = (0..1000).collect();
        let mut rng = rng::stream(1, &[0]);
        assert_eq!(apply_barring(&devices, 1.0, &mut rng).0.len(), 1000);
        assert_eq!(apply_barring(&devices, 0.0, &mut rng).0.len(), 0);
        let (active, barred) = apply_barring(&devices, 0.3, &mut rng);
        assert_eq!(active.len() + barred.len(), 1000);
        let bound = 4.0 * (1000.0f64 * 0.3 * 0.7).sqrt();
        assert!((active.len() as f64 - 300.0).abs() <= bound);
    }

    #[test]
    fn gate_holds_permits_for_the_period() {
        let mut gate = BarringGate::new(3, 5);
        let mut rng = rng::stream(2, &[0]);
        let (a, b) = gate.gate(&[0, 1, 2], 0, 5, 1.0, &mut rng);
        assert_eq!((a, b), (vec![0, 1, 2], 0));
        // Permits survive a rate change until the period ends.
        let (a, _) = gate.gate(&[0, 1, 2], 4, 5, 0.0, &mut rng);
        assert_eq!(a.len(), 3);
        let (a, b) = gate.gate(&[0, 1, 2], 5, 10, 0.0, &mut rng);
        assert_eq!((a.len(), b), (0, 3));
        // Barred for a full period, whatever the rate.
        let (a, _) = gate.gate(&[0, 1, 2], 9, 10, 1.0, &mut rng);
        assert!(a.is_empty());
        let (a, _) = gate.gate(&[0, 1, 2], 10, 15, 1.0, &mut rng);
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn controller_ops_do_not_depend_on_population() {
        let state = BarringState::new(20, 26, 11.2, 2600).unwrap();
        let mut c = BarringController::new(state, LoadEstimator::IdleFraction, 10);
        let mut ops = Vec::new();
        for backlog in [100usize, 1000, 10000] {
            for s in 0..20 {
                c.observe_slot((0..10).map(|rb| (rb + s) % 3 == 0), 5);
            }
            assert!(c.period_complete());
            ops.push(c.end_period(backlog).ops);
        }
        assert!(ops.iter().all(|&o| o == 20 * 10 + UPDATE_OPS));
    }

    #[test]
    fn oracle_estimator_sets_rate_to_optimal_share() {
        let state = BarringState::new(5, 20, 8.0, 2000).unwrap();
        let mut c = BarringController::new(state, LoadEstimator::Oracle, 10);
        for _ in 0..5 {
            c.observe_slot([true; 10], 0);
        }
        let r = c.end_period(80);
        assert_eq!(r.estimated_load, 80.0);
        assert_eq!(c.rate(), 0.25);
    }

    proptest! {
        #[test]
        fn rate_is_a_probability_and_non_increasing(n1 in 0.0f64..1e4, n2 in 0.0f64..1e4, opt in 1usize..100) {
            let s = BarringState::new(10, opt, 1.0, 100 * opt).unwrap();
            let (lo, hi) = if n1 <= n2 { (n1, n2) } else { (n2, n1) };
            let (qlo, qhi) = (update_rate(lo, &s), update_rate(hi, &s));
            prop_assert!((0.0..=1.0).contains(&qlo) && (0.0..=1.0).contains(&qhi));
            prop_assert!(qhi <= qlo);
        }

        #[test]
        fn estimate_is_bounded(f in 0.0f64..=1.0, q in 0.0f64..=1.0, m in 1usize..20, cap in 1usize..5000) {
            let n = estimate_load(&obs(f), q, m, cap);
            prop_assert!(n >= 0.0 && n <= cap as f64);
        }

        #[test]
        fn estimate_inverts_the_idle_law(b in 0usize..300, q in 0.05f64..=1.0, m in 2usize..20) {
            let f = (1.0 - q / m as f64).powi(b as i32);
            let o = PeriodObservation { idle_rb_fraction: f, successes_per_slot: 0.0, slots: 1_000_000 };
            prop_assume!(f >= 1.0 / (1_000_000 * m) as f64);
            let n = estimate_load(&o, q, m, 10_000);
            prop_assert!((n - b as f64).abs() < 1e-6 * (1.0 + b as f64));
        }
    }
}
