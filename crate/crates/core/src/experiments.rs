//! Canned experiments: the scheme comparison over device counts and the
//! with/without barring pair.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{optimal_load, DecodeMode};
use crate::barring::LoadEstimator;
use crate::config::{
    BarringConfig, GbFadingKind, GridConfig, PowerMapSource, ProtocolKind, RunConfig, Scheme,
    SemiGfConfig, TrafficConfig,
};
use crate::error::{Error, Result};
use crate::protocols::{Fading, ThresholdType};
use crate::sim::{run_simulation, MetricsSeries};

fn base_config(grid: &GridConfig, mode: DecodeMode, scheme: Scheme, devices: usize, slots: u64) -> RunConfig {
    RunConfig {
        grid: grid.clone(),
        decode_mode: mode,
        scheme,
        traffic: TrafficConfig { total_devices: Some(devices), ..TrafficConfig::default() },
        barring: BarringConfig::default(),
        power_map: Some(PowerMapSource::Uniform),
        gf_fading: Fading::None,
        slots,
        seed: 0,
        warmup: 0,
        window: None,
        record_slots: false,
    }
}

fn run_all(configs: &[RunConfig], seed: u64, workers: usize) -> Result<Vec<MetricsSeries>> {
    let run = |c: &RunConfig| run_simulation(c, seed, 1);
    if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start {workers} workers: {e}")))?;
        pool.install(|| configs.par_iter().map(run).collect())
    } else {
        configs.iter().map(run).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareParams {
    pub grid: GridConfig,
    pub decode_mode: DecodeMode,
    pub threshold: ThresholdType,
    pub epsilon: f64,
    pub estimation_window: usize,
    pub qos_sinr: f64,
    /// Defaults as in the run config: twice the power admitting every level.
    pub gb_mean_power: Option<f64>,
    pub gb_fading: GbFadingKind,
    pub devices: Vec<usize>,
    pub slots: u64,
    pub seed: u64,
}

impl Default for CompareParams {
    fn default() -> Self {
        CompareParams {
            grid: GridConfig { levels: 2, rbs: 10, theta: 1.0, noise: 1.0, margin: 1.0 },
            decode_mode: DecodeMode::CollisionLimited,
            threshold: ThresholdType::UpperLimit,
            epsilon: 0.6,
            estimation_window: 10,
            qos_sinr: 1.0,
            gb_mean_power: None,
            gb_fading: GbFadingKind::TwoPoint,
            devices: (1..=60).collect(),
            slots: 10_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub devices: usize,
    pub gb: f64,
    pub gf: f64,
    pub semi_gf_dynamic: f64,
    pub semi_gf_open_loop: f64,
    pub gb_outage_dynamic: f64,
    pub gb_outage_open_loop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub params: CompareParams,
    pub rows: Vec<CompareRow>,
    /// Max over n of dynamic semi-GF AAR / GB AAR - 1.
    pub max_gain_over_gb: f64,
    /// Max over n of dynamic semi-GF AAR / GF AAR.
    pub max_ratio_over_gf: f64,
}

/// Runs GB, GF and both semi-GF protocols at every device count under one
/// shared seed, with saturated traffic.
pub fn compare(params: &CompareParams, workers: usize) -> Result<CompareReport> {
    let semi = |protocol| {
        Scheme::SemiGf(SemiGfConfig {
            threshold: params.threshold,
            protocol,
            epsilon: params.epsilon,
            estimation_window: params.estimation_window,
            qos_sinr: params.qos_sinr,
            gb_mean_power: params.gb_mean_power,
            gb_fading: params.gb_fading,
        })
    };
    let schemes = [Scheme::Gb, Scheme::Gf, semi(ProtocolKind::Dynamic), semi(ProtocolKind::OpenLoop)];
    let mut configs = Vec::with_capacity(params.devices.len() * schemes.len());
    for &n in &params.devices {
        for s in &schemes {
            let mut c = base_config(&params.grid, params.decode_mode, s.clone(), n, params.slots);
            c.seed = params.seed;
            c.resolve()?;
            configs.push(c);
        }
    }
    let runs = run_all(&configs, params.seed, workers)?;
    let rows: Vec<CompareRow> = params
        .devices
        .iter()
        .zip(runs.chunks(schemes.len()))
        .map(|(&devices, r)| CompareRow {
            devices,
            gb: r[0].summary.aar,
            gf: r[1].summary.aar,
            semi_gf_dynamic: r[2].summary.aar,
            semi_gf_open_loop: r[3].summary.aar,
            gb_outage_dynamic: r[2].summary.gb_outage_rate,
            gb_outage_open_loop: r[3].summary.gb_outage_rate,
        })
        .collect();
    // Rows with a zero denominator carry no ratio.
    let max_ratio = |num: fn(&CompareRow) -> f64, den: fn(&CompareRow) -> f64| {
        rows.iter().filter(|r| den(r) > 0.0).map(|r| num(r) / den(r)).fold(0.0, f64::max)
    };
    Ok(CompareReport {
        max_gain_over_gb: max_ratio(|r| r.semi_gf_dynamic, |r| r.gb) - 1.0,
        max_ratio_over_gf: max_ratio(|r| r.semi_gf_dynamic, |r| r.gf),
        params: params.clone(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarringDemoParams {
    pub grid: GridConfig,
    pub decode_mode: DecodeMode,
    pub period: usize,
    pub estimator: LoadEstimator,
    pub devices: Vec<usize>,
    pub slots: u64,
    /// Barring periods excluded from the averages.
    pub warmup_periods: u64,
    /// Barring periods per AAR window.
    pub window_periods: u64,
    pub seed: u64,
}

impl Default for BarringDemoParams {
    fn default() -> Self {
        BarringDemoParams {
            grid: GridConfig { levels: 4, rbs: 10, theta: 1.0, noise: 1.0, margin: 1.0 },
            decode_mode: DecodeMode::CollisionLimited,
            period: 20,
            estimator: LoadEstimator::IdleFraction,
            devices: (10..=200).step_by(10).collect(),
            slots: 4_000,
            warmup_periods: 10,
            window_periods: 1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarringDemoRow {
    pub devices: usize,
    pub aar_with: f64,
    pub aar_without: f64,
    pub load_with: f64,
    pub load_without: f64,
    /// Extremes of the post-warm-up windowed AAR with barring.
    pub min_window_aar_with: f64,
    pub max_window_aar_with: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarringDemoReport {
    pub params: BarringDemoParams,
    pub optimal_load: usize,
    pub max_aar: f64,
    pub rows: Vec<BarringDemoRow>,
}

/// Saturated grant-free traffic with and without barring at each device
/// count. Every RB is open to every device, so only GF contention matters.
pub fn barring_demo(params: &BarringDemoParams, workers: usize) -> Result<BarringDemoReport> {
    let grid = params.grid.build()?;
    let search = 10 * grid.num_levels() * grid.num_rbs();
    let opt = optimal_load(&grid, params.decode_mode, search)?;
    if params.window_periods == 0 {
        return Err(Error::config("window_periods", "≥ 1"));
    }
    let warmup = params.warmup_periods * params.period as u64;
    let mut configs = Vec::new();
    for &n in &params.devices {
        for enabled in [true, false] {
            let mut c = base_config(&params.grid, params.decode_mode, Scheme::Gf, n, params.slots);
            c.power_map = None;
            c.seed = params.seed;
            c.warmup = warmup;
            c.barring = BarringConfig {
                enabled,
                period: params.period,
                search_max: Some(search),
                estimator: params.estimator,
                ..BarringConfig::default()
            };
            c.window = Some(params.window_periods * params.period as u64);
            c.resolve()?;
            configs.push(c);
        }
    }
    let runs = run_all(&configs, params.seed, workers)?;
    let rows = params
        .devices
        .iter()
        .zip(runs.chunks(2))
        .map(|(&devices, r)| {
            let windows = r[0].windows.iter().filter(|w| w.start >= warmup).map(|w| w.aar);
            let (lo, hi) = windows.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(a), hi.max(a)));
            BarringDemoRow {
                devices,
                aar_with: r[0].summary.aar,
                aar_without: r[1].summary.aar,
                load_with: r[0].summary.system_load,
                load_without: r[1].summary.system_load,
                min_window_aar_with: lo,
                max_window_aar_with: hi,
            }
        })
        .collect();
    Ok(BarringDemoReport { params: params.clone(), optimal_load: opt.n, max_aar: opt.aar, rows })
}
