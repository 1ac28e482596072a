use std::collections::VecDeque;

use rand::Rng;

use super::metrics::{Accumulator, MetricsSeries, SlotMetrics, WindowBuilder};
use crate::barring::{BarringController, BarringGate, BarringState};
use crate::config::{RunConfig, Scheme, SemiGfConfig, TrafficModel};
use crate::error::{Error, Result};
use crate::grid::{DeviceId, PowerGrid};
use crate::powermap::PowerMap;
use crate::protocols::{
    slot_gf, slot_semi_gf, Fading, GbState, GfContender, SemiGfProtocol, SlotOptions, SlotResult,
};
use crate::rng::{self, streams, SimRng};

struct SemiGf {
    cfg: SemiGfConfig,
    protocol: SemiGfProtocol,
    fading: Fading,
    mean: f64,
    /// Past instantaneous GB powers per RB, newest last.
    history: Vec<VecDeque<f64>>,
}

struct Engine<'a> {
    cfg: &'a RunConfig,
    grid: PowerGrid,
    map: Option<PowerMap>,
    region: Vec<usize>,
    /// Attempts made so far by each device's pending packet.
    packets: Vec<Option<u32>>,
    gate: Option<BarringGate>,
    controller: Option<BarringController>,
    semi: Option<SemiGf>,
    /// Next device id in line for a grant.
    next_grant: DeviceId,
    gb_power: f64,
    opts: SlotOptions,
    traffic_rng: SimRng,
    barring_rng: SimRng,
    selection_rng: SimRng,
    gb_rng: SimRng,
}

/// Runs the configured slots under `seed`. `workers > 1` decodes RBs on a
/// thread pool of that size; the output does not depend on it.
pub fn run_simulation(cfg: &RunConfig, seed: u64, workers: usize) -> Result<MetricsSeries> {
    if workers <= 1 {
        return Engine::new(cfg, seed, false)?.run();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| Engine::new(cfg, seed, true)?.run())
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a RunConfig, seed: u64, parallel: bool) -> Result<Self> {
        let grid = cfg.grid()?;
        let n = cfg.total_devices();
        let map = cfg.power_map.as_ref().map(|s| s.resolve(&grid)).transpose()?;
        let mut placement = rng::stream(seed, &[streams::PLACEMENT]);
        let regions = map.as_ref().map_or(1, PowerMap::num_regions);
        let region = (0..n).map(|_| placement.gen_range(0..regions)).collect();

        let (gate, controller) = if cfg.barring.enabled {
            let state = BarringState::for_grid(
                &grid,
                cfg.decode_mode,
                cfg.barring.period,
                cfg.barring.search_max.unwrap_or(10 * grid.num_levels() * grid.num_rbs()),
                cfg.barring.load_cap,
            )?;
            (
                Some(BarringGate::new(n, cfg.barring.period)),
                Some(BarringController::new(state, cfg.barring.estimator, grid.num_rbs())),
            )
        } else {
            (None, None)
        };

        let semi = match &cfg.scheme {
            Scheme::SemiGf(s) => {
                let mean = s.gb_mean_power.expect("resolved config");
                Some(SemiGf {
                    cfg: s.clone(),
                    protocol: s.protocol(),
                    fading: s.gb_fading(&grid),
                    mean,
                    history: vec![VecDeque::with_capacity(s.estimation_window); grid.num_rbs()],
                })
            }
            _ => None,
        };
        let gb_power = semi.as_ref().map_or(*grid.levels().last().expect("levels"), |s| s.mean);

        Ok(Engine {
            cfg,
            map,
            region,
            packets: vec![None; n],
            gate,
            controller,
            semi,
            next_grant: 0,
            gb_power,
            opts: SlotOptions { decode_mode: cfg.decode_mode, gf_fading: cfg.gf_fading, parallel },
            traffic_rng: rng::stream(seed, &[streams::TRAFFIC]),
            barring_rng: rng::stream(seed, &[streams::BARRING]),
            selection_rng: rng::stream(seed, &[streams::SELECTION]),
            gb_rng: rng::stream(seed, &[streams::GB_FADING]),
            grid,
        })
    }

    fn run(mut self) -> Result<MetricsSeries> {
        let mut acc = Accumulator::default();
        let mut windows = WindowBuilder::new(self.cfg.window());
        let mut series = MetricsSeries::default();
        for slot in 0..self.cfg.slots {
            let m = self.step(slot, &mut series)?;
            windows.add(&m);
            if slot >= self.cfg.warmup {
                acc.add(&m);
            }
            if self.cfg.record_slots {
                series.slots.push(m);
            }
        }
        windows.flush();
        series.windows = windows.done;
        series.summary = acc.summary();
        Ok(series)
    }

    fn arrivals(&mut self, slot: u64) {
        let p = match self.cfg.traffic.model {
            TrafficModel::Bernoulli { activation_prob } => activation_prob,
            TrafficModel::Burst { burst_slot, burst_fraction, background_prob } => {
                if slot == burst_slot {
                    burst_fraction
                } else {
                    background_prob
                }
            }
        };
        if p <= 0.0 {
            return;
        }
        for packet in self.packets.iter_mut().filter(|p| p.is_none()) {
            if p >= 1.0 || self.traffic_rng.gen::<f64>() < p {
                *packet = Some(0);
            }
        }
    }

    /// Grants up to M devices in cyclic id order starting after the last
    /// grant. Returns (granted in RB order, the rest in id order).
    fn grant(&mut self, active: &[DeviceId]) -> (Vec<DeviceId>, Vec<DeviceId>) {
        let k = active.len().min(self.grid.num_rbs());
        if k == 0 {
            return (Vec::new(), active.to_vec());
        }
        let start = active.partition_point(|&d| d < self.next_grant);
        let granted: Vec<_> = (0..k).map(|i| active[(start + i) % active.len()]).collect();
        self.next_grant = granted[k - 1] + 1;
        let mut rest: Vec<_> = (k..active.len()).map(|i| active[(start + i) % active.len()]).collect();
        rest.sort_unstable();
        (granted, rest)
    }

    fn contenders(&self, devices: &[DeviceId]) -> Vec<GfContender> {
        devices.iter().map(|&device| GfContender { device, region: self.region[device] }).collect()
    }

    fn step(&mut self, slot: u64, series: &mut MetricsSeries) -> Result<SlotMetrics> {
        self.arrivals(slot);
        let backlog: Vec<DeviceId> = (0..self.packets.len()).filter(|&d| self.packets[d].is_some()).collect();
        let rate = self.controller.as_ref().map_or(1.0, BarringController::rate);
        let (active, barred) = match self.gate.as_mut() {
            Some(gate) => {
                let period = self.cfg.barring.period as u64;
                let period_end = (slot / period + 1) * period;
                gate.gate(&backlog, slot, period_end, rate, &mut self.barring_rng)
            }
            None => (backlog.clone(), 0),
        };

        let mut m = SlotMetrics {
            slot,
            backlog: backlog.len(),
            active: active.len(),
            barred,
            barring_rate: rate,
            ..SlotMetrics::default()
        };
        let mut failed: Vec<DeviceId> = Vec::new();
        let mut delivered: Vec<DeviceId> = Vec::new();
        let rb_idle: Vec<bool>;

        match &self.cfg.scheme {
            Scheme::Gb => {
                let (granted, waiting) = self.grant(&active);
                m.transmitters = granted.len();
                m.silent = waiting.len();
                m.energy = granted.len() as f64 * self.gb_power;
                rb_idle = (0..self.grid.num_rbs()).map(|rb| rb >= granted.len()).collect();
                delivered = granted;
            }
            Scheme::Gf => {
                let cs = self.contenders(&active);
                let r = slot_gf(&cs, &self.grid, self.map.as_ref(), &self.opts, &mut self.selection_rng)?;
                rb_idle = r.rb_gf_counts.iter().map(|&c| c == 0).collect();
                self.record_gf(&mut m, &r);
                delivered.extend_from_slice(&r.gf_successes);
                failed.extend_from_slice(&r.gf_failures);
            }
            Scheme::SemiGf(_) => {
                let (granted, gf) = self.grant(&active);
                let states = self.gb_states(&granted);
                let cs = self.contenders(&gf);
                let semi = self.semi.as_ref().expect("semi-GF state");
                let map = self.map.as_ref().expect("validated config has a map");
                let r = slot_semi_gf(
                    &states,
                    &cs,
                    map,
                    semi.cfg.threshold,
                    &semi.protocol,
                    &self.grid,
                    &self.opts,
                    &mut self.selection_rng,
                )?;
                self.record_gf(&mut m, &r);
                m.gb_present = granted.len();
                m.transmitters += granted.len();
                m.energy += granted.len() as f64 * semi.mean;
                for (rb, s) in states.iter().enumerate() {
                    let Some(s) = s else { continue };
                    if r.gb_success[rb] {
                        delivered.push(s.device);
                        m.successes += 1;
                    } else {
                        failed.push(s.device);
                        m.failures += 1;
                    }
                    if r.gb_outage[rb] {
                        m.gb_outages += 1;
                    }
                }
                rb_idle = (0..self.grid.num_rbs())
                    .map(|rb| r.rb_gf_counts[rb] == 0 && !r.gb_present[rb])
                    .collect();
                delivered.extend_from_slice(&r.gf_successes);
                failed.extend_from_slice(&r.gf_failures);
            }
        }
        if let Scheme::Gb = self.cfg.scheme {
            m.successes = delivered.len();
        }

        for &d in &delivered {
            self.packets[d] = None;
        }
        for &d in &failed {
            let attempts = self.packets[d].as_mut().expect("failed device was backlogged");
            *attempts += 1;
            if *attempts >= self.cfg.traffic.max_attempts {
                self.packets[d] = None;
                m.dropped += 1;
            }
        }

        if let Some(c) = self.controller.as_mut() {
            c.observe_slot(rb_idle, m.successes);
            if c.period_complete() {
                let still_backlogged = self.packets.iter().filter(|p| p.is_some()).count();
                series.barring.push(c.end_period(still_backlogged));
            }
        }
        debug_assert_eq!(m.successes + m.failures + m.silent, m.active);
        Ok(m)
    }

    fn record_gf(&self, m: &mut SlotMetrics, r: &SlotResult) {
        m.transmitters = r.admitted_gf;
        m.successes = r.gf_successes.len();
        m.gf_successes = r.gf_successes.len();
        m.failures = r.gf_failures.len();
        m.silent = r.silent.len();
        m.collisions = r.collisions;
        m.collided_devices = r.collided_devices;
        m.energy = r.gf_energy;
    }

    /// Draws one GB fading factor per RB (whether or not the RB has a GB
    /// device, to keep the stream aligned) and updates the averaging window.
    fn gb_states(&mut self, granted: &[DeviceId]) -> Vec<Option<GbState>> {
        let semi = self.semi.as_mut().expect("semi-GF state");
        let window = semi.cfg.estimation_window;
        let mut states = Vec::with_capacity(self.grid.num_rbs());
        for rb in 0..self.grid.num_rbs() {
            let inst = semi.mean * semi.fading.draw(&mut self.gb_rng);
            let h = &mut semi.history[rb];
            let avg = if h.is_empty() { semi.mean } else { h.iter().sum::<f64>() / h.len() as f64 };
            states.push(granted.get(rb).map(|&device| GbState {
                device,
                rb,
                instantaneous_power: inst,
                average_power: avg,
                qos_sinr: semi.cfg.qos_sinr,
            }));
            if h.len() == window {
                h.pop_front();
            }
            h.push_back(inst);
        }
        states
    }
}
