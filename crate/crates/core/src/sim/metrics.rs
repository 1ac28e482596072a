use serde::{Deserialize, Serialize};

use crate::barring::PeriodRecord;

/// Counters for one slot.
///
/// `successes + failures + silent == active`, where `active` counts backlogged
/// devices that passed the barring gate. `silent` devices had no resource:
/// an unscheduled GB request or a GF contender with an empty pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SlotMetrics {
    pub slot: u64,
    pub backlog: usize,
    pub active: usize,
    pub barred: usize,
    pub transmitters: usize,
    pub successes: usize,
    pub gf_successes: usize,
    pub failures: usize,
    pub silent: usize,
    pub collisions: usize,
    pub collided_devices: usize,
    pub gb_present: usize,
    pub gb_outages: usize,
    pub energy: f64,
    pub dropped: usize,
    pub barring_rate: f64,
}

/// Mean successes over a block of consecutive slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub start: u64,
    pub slots: u64,
    pub aar: f64,
    pub system_load: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Summary {
    /// Slots after warm-up.
    pub slots: u64,
    pub aar: f64,
    /// Standard error of `aar`, treating slots as independent.
    pub aar_stderr: f64,
    pub system_load: f64,
    pub gb_outage_rate: f64,
    pub collision_rate: f64,
    pub energy_per_success: f64,
    pub dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsSeries {
    pub summary: Summary,
    pub windows: Vec<WindowMetrics>,
    pub barring: Vec<PeriodRecord>,
    /// Empty unless per-slot recording is on.
    pub slots: Vec<SlotMetrics>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Accumulator {
    slots: u64,
    successes: f64,
    successes_sq: f64,
    active: f64,
    gb_present: u64,
    gb_outages: u64,
    gf_transmitters: u64,
    collided: u64,
    energy: f64,
    dropped: u64,
}

impl Accumulator {
    pub(crate) fn add(&mut self, m: &SlotMetrics) {
        let s = m.successes as f64;
        self.slots += 1;
        self.successes += s;
        self.successes_sq += s * s;
        self.active += m.active as f64;
        self.gb_present += m.gb_present as u64;
        self.gb_outages += m.gb_outages as u64;
        self.gf_transmitters += (m.transmitters - m.gb_present) as u64;
        self.collided += m.collided_devices as u64;
        self.energy += m.energy;
        self.dropped += m.dropped as u64;
    }

    pub(crate) fn summary(&self) -> Summary {
        let n = self.slots.max(1) as f64;
        let mean = self.successes / n;
        let var = (self.successes_sq / n - mean * mean).max(0.0);
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        Summary {
            slots: self.slots,
            aar: mean,
            aar_stderr: if self.slots > 1 { (var / (n - 1.0)).sqrt() } else { 0.0 },
            system_load: self.active / n,
            gb_outage_rate: ratio(self.gb_outages as f64, self.gb_present as f64),
            collision_rate: ratio(self.collided as f64, self.gf_transmitters as f64),
            energy_per_success: ratio(self.energy, self.successes),
            dropped: self.dropped,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct WindowBuilder {
    len: u64,
    start: u64,
    slots: u64,
    successes: f64,
    active: f64,
    pub(crate) done: Vec<WindowMetrics>,
}

impl WindowBuilder {
    pub(crate) fn new(len: u64) -> Self {
        WindowBuilder { len, start: 0, slots: 0, successes: 0.0, active: 0.0, done: Vec::new() }
    }

    pub(crate) fn add(&mut self, m: &SlotMetrics) {
        if self.slots == 0 {
            self.start = m.slot;
        }
        self.slots += 1;
        self.successes += m.successes as f64;
        self.active += m.active as f64;
        if self.slots == self.len {
            self.flush();
        }
    }

    /// Closes a partial trailing window, if any.
    pub(crate) fn flush(&mut self) {
        if self.slots > 0 {
            let n = self.slots as f64;
            self.done.push(WindowMetrics {
                start: self.start,
                slots: self.slots,
                aar: self.successes / n,
                system_load: self.active / n,
            });
        }
        self.slots = 0;
        self.successes = 0.0;
        self.active = 0.0;
    }
}
