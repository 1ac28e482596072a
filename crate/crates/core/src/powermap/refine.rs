//! Multi-agent tabular Q-learning refinement of a power map.
//!
//! One agent per non-void region. An agent's state is its decode SINR from
//! the previous step, quantized into bins; its actions are every (RB, pool
//! entry) pair. All agents share one centralized reward: the reciprocal of
//! the joint power consumption when it dropped relative to the previous step,
//! zero otherwise. After training, each region's pool is cut down to the
//! entries its greedy policy uses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PowerGrid;
use crate::rng::{self, streams};

use super::PowerMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QLearningConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub learning_rate: f64,
    pub discount: f64,
    /// Epsilon-greedy exploration probability.
    pub exploration: f64,
    pub sinr_bins: usize,
    /// SINR range in dB spread over the bins; values outside are clamped.
    pub sinr_range_db: (f64, f64),
    /// Training stops once a whole episode changes no Q-value by more than
    /// this fraction of the largest attainable reward.
    pub tolerance: f64,
    pub initial_q: f64,
    pub seed: u64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        QLearningConfig {
            episodes: 200,
            steps_per_episode: 50,
            learning_rate: 0.1,
            discount: 0.9,
            exploration: 0.1,
            sinr_bins: 8,
            sinr_range_db: (-10.0, 30.0),
            tolerance: 1e-4,
            initial_q: 0.0,
            seed: 0,
        }
    }
}

impl QLearningConfig {
    fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.sinr_bins == 0 || self.steps_per_episode == 0 {
            return Err(Error::InvalidParameter("sinr_bins and steps_per_episode must be >= 1".into()));
        }
        if !unit(self.learning_rate) || !unit(self.discount) || !unit(self.exploration) {
            return Err(Error::InvalidParameter(
                "learning rate, discount and exploration must lie in [0, 1]".into(),
            ));
        }
        if !(self.sinr_range_db.0 < self.sinr_range_db.1) {
            return Err(Error::InvalidParameter("empty SINR range".into()));
        }
        Ok(())
    }

    fn quantize(&self, sinr: f64) -> usize {
        if !(sinr > 0.0) {
            return 0;
        }
        let (lo, hi) = self.sinr_range_db;
        let db = 10.0 * sinr.log10();
        let t = ((db - lo) / (hi - lo)).clamp(0.0, 1.0);
        ((t * self.sinr_bins as f64) as usize).min(self.sinr_bins - 1)
    }
}

/// One agent's choice for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentAction {
    pub region: usize,
    pub rb: usize,
    pub level: usize,
    pub tpl: f64,
    /// `tpl * mean_gain` of the agent's region.
    pub received_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepFeedback {
    /// Decode SINR per agent, in the order actions were given.
    pub sinrs: Vec<f64>,
    pub power_consumption: f64,
}

/// Evaluates a joint action.
pub trait JointEnvironment {
    fn step(&mut self, actions: &[AgentAction]) -> StepFeedback;
}

/// Single-slot environment over a [`PowerGrid`].
///
/// An agent's SINR is its received power over the received power of every
/// other agent in the same RB at the same or a lower level, plus noise.
/// Consumption is the TPL sum over all agents, successful or not.
#[derive(Debug, Clone)]
pub struct GridEnvironment {
    grid: PowerGrid,
}

impl GridEnvironment {
    pub fn new(grid: PowerGrid) -> Self {
        GridEnvironment { grid }
    }
}

impl JointEnvironment for GridEnvironment {
    fn step(&mut self, actions: &[AgentAction]) -> StepFeedback {
        let sinrs = actions
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let interference: f64 = actions
                    .iter()
                    .enumerate()
                    .filter(|&(j, b)| j != i && b.rb == a.rb && b.level <= a.level)
                    .map(|(_, b)| b.received_power)
                    .sum();
                a.received_power / (interference + self.grid.noise_power())
            })
            .collect();
        StepFeedback {
            sinrs,
            power_consumption: actions.iter().map(|a| a.tpl).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Action {
    rb: usize,
    level: usize,
    tpl: f64,
}

struct Agent {
    region: usize,
    gain: f64,
    actions: Vec<Action>,
    q: Vec<Vec<f64>>,
    visited: Vec<bool>,
    state: usize,
}

impl Agent {
    fn greedy(&self, state: usize) -> usize {
        // Actions are sorted by (tpl, rb), so the first maximum wins ties.
        let row = &self.q[state];
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub map: PowerMap,
    pub episodes_run: usize,
    pub converged: bool,
    /// Final Q-tables per trained region: `(region, q[state][action])`.
    pub q_tables: Vec<(usize, Vec<Vec<f64>>)>,
}

pub fn refine_power_map_q_learning(
    initial: &PowerMap,
    cfg: &QLearningConfig,
    env: &mut dyn JointEnvironment,
) -> Result<Refinement> {
    cfg.validate()?;
    let num_rbs = initial.grid.num_rbs();
    let mut agents: Vec<Agent> = initial
        .regions
        .iter()
        .filter(|p| !p.is_void())
        .map(|p| {
            let mut actions: Vec<Action> = (0..num_rbs)
                .flat_map(|rb| p.entries.iter().map(move |e| Action { rb, level: e.level, tpl: e.tpl }))
                .collect();
            actions.sort_by(|a, b| a.tpl.total_cmp(&b.tpl).then(a.rb.cmp(&b.rb)));
            Agent {
                region: p.region_id,
                gain: p.mean_gain,
                q: vec![vec![cfg.initial_q; actions.len()]; cfg.sinr_bins],
                visited: vec![false; cfg.sinr_bins],
                actions,
                state: 0,
            }
        })
        .collect();

    // Largest possible reward: every agent on its cheapest action.
    let min_consumption: f64 = agents.iter().map(|a| a.actions[0].tpl).sum();
    let reward_scale = if min_consumption > 0.0 { 1.0 / min_consumption } else { 1.0 };

    let mut rng = rng::stream(cfg.seed, &[streams::Q_LEARNING]);
    let mut episodes_run = 0;
    let mut converged = agents.is_empty();
    let mut joint = Vec::with_capacity(agents.len());
    let mut chosen = vec![0usize; agents.len()];

    while !converged && episodes_run < cfg.episodes {
        episodes_run += 1;
        let mut max_delta: f64 = 0.0;
        let mut previous: Option<f64> = None;
        for agent in &mut agents {
            agent.state = 0;
        }
        for _ in 0..cfg.steps_per_episode {
            joint.clear();
            for (k, agent) in agents.iter_mut().enumerate() {
                agent.visited[agent.state] = true;
                let explore = rng.gen::<f64>() < cfg.exploration;
                let pick = rng.gen_range(0..agent.actions.len());
                chosen[k] = if explore { pick } else { agent.greedy(agent.state) };
                let a = agent.actions[chosen[k]];
                joint.push(AgentAction {
                    region: agent.region,
                    rb: a.rb,
                    level: a.level,
                    tpl: a.tpl,
                    received_power: a.tpl * agent.gain,
                });
            }
            let feedback = env.step(&joint);
            if feedback.sinrs.len() != agents.len() {
                return Err(Error::InvalidInput(format!(
                    "environment returned {} SINRs for {} agents",
                    feedback.sinrs.len(),
                    agents.len()
                )));
            }
            let c = feedback.power_consumption;
            let reward = match previous {
                Some(p) if c < p && c > 0.0 => 1.0 / c,
                _ => 0.0,
            };
            previous = Some(c);
            for (k, agent) in agents.iter_mut().enumerate() {
                let next = cfg.quantize(feedback.sinrs[k]);
                let future = agent.q[next].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let q = &mut agent.q[agent.state][chosen[k]];
                let delta = cfg.learning_rate * (reward + cfg.discount * future - *q);
                *q += delta;
                max_delta = max_delta.max(delta.abs());
                agent.state = next;
            }
        }
        converged = max_delta < cfg.tolerance * reward_scale;
    }

    let mut map = initial.clone();
    for agent in &agents {
        let used: Vec<usize> = (0..cfg.sinr_bins)
            .filter(|&s| agent.visited[s])
            .map(|s| agent.actions[agent.greedy(s)].level)
            .collect();
        if let Some(pool) = map.regions.iter_mut().find(|p| p.region_id == agent.region) {
            pool.entries.retain(|e| used.contains(&e.level));
        }
    }
    Ok(Refinement {
        map,
        episodes_run,
        converged,
        q_tables: agents.into_iter().map(|a| (a.region, a.q)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powermap::{build_power_map, ChannelModel, Point, Region};

    struct Scripted {
        consumption: Vec<f64>,
        step: usize,
    }

    impl JointEnvironment for Scripted {
        fn step(&mut self, actions: &[AgentAction]) -> StepFeedback {
            let c = self.consumption[self.step.min(self.consumption.len() - 1)];
            self.step += 1;
            StepFeedback { sinrs: vec![1.0; actions.len()], power_consumption: c }
        }
    }

    fn map(levels: usize, rbs: usize, gains: &[f64]) -> PowerMap {
        let grid = PowerGrid::new(levels, rbs, 1.0, 1.0, 1.0).unwrap();
        let regions: Vec<Region> = gains
            .iter()
            .enumerate()
            .map(|(id, &g)| Region {
                id,
                center: Point::new(id as f64, 1.0),
                width: 1.0,
                height: 1.0,
                mean_gain: Some(g),
            })
            .collect();
        build_power_map(&regions, &grid, &ChannelModel::default(), f64::INFINITY).unwrap()
    }

    #[test]
    fn singleton_action_space_leaves_map_unchanged() {
        let m = map(1, 1, &[0.5]);
        let mut env = GridEnvironment::new(m.grid.clone());
        let out = refine_power_map_q_learning(&m, &QLearningConfig::default(), &mut env).unwrap();
        assert_eq!(out.map, m);
    }

    #[test]
    fn greedy_tie_break_collapses_to_cheapest_tpl() {
        let m = map(2, 1, &[1.0]);
        let cfg = QLearningConfig { exploration: 0.0, ..QLearningConfig::default() };
        let mut env = GridEnvironment::new(m.grid.clone());
        let out = refine_power_map_q_learning(&m, &cfg, &mut env).unwrap();
        let levels: Vec<_> = out.map.regions[0].levels().collect();
        assert_eq!(levels, vec![0]);
        assert!(out.converged);
    }

    #[test]
    fn non_decreasing_consumption_is_a_zero_reward_fixed_point() {
        let m = map(3, 2, &[1.0, 0.1]);
        let cfg = QLearningConfig { exploration: 0.5, ..QLearningConfig::default() };
        let mut env = Scripted { consumption: (0..10_000).map(|i| 1.0 + i as f64).collect(), step: 0 };
        let out = refine_power_map_q_learning(&m, &cfg, &mut env).unwrap();
        assert!(out.converged);
        assert_eq!(out.episodes_run, 1);
        for (_, q) in &out.q_tables {
            assert!(q.iter().flatten().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn refinement_only_selects_from_initial_pools() {
        let m = map(4, 3, &[1.0, 0.5, 0.2, 0.05]);
        let cfg = QLearningConfig { episodes: 50, seed: 3, ..QLearningConfig::default() };
        let mut env = GridEnvironment::new(m.grid.clone());
        let out = refine_power_map_q_learning(&m, &cfg, &mut env).unwrap();
        for (before, after) in m.regions.iter().zip(&out.map.regions) {
            assert!(!after.is_void());
            for e in &after.entries {
                assert!(before.entries.contains(e));
            }
        }
    }

    #[test]
    fn void_regions_are_excluded() {
        let grid = PowerGrid::new(2, 1, 1.0, 1.0, 1.0).unwrap();
        let regions = vec![
            Region { id: 0, center: Point::new(0.0, 1.0), width: 1.0, height: 1.0, mean_gain: Some(1.0) },
            Region { id: 1, center: Point::new(5.0, 1.0), width: 1.0, height: 1.0, mean_gain: Some(1e-9) },
        ];
        let m = build_power_map(&regions, &grid, &ChannelModel::default(), 10.0).unwrap();
        assert!(m.regions[1].is_void());
        let mut env = GridEnvironment::new(grid);
        let out = refine_power_map_q_learning(&m, &QLearningConfig::default(), &mut env).unwrap();
        assert!(out.map.regions[1].is_void());
        assert_eq!(out.q_tables.len(), 1);
    }

    #[test]
    fn quantization_edges() {
        let cfg = QLearningConfig::default();
        assert_eq!(cfg.quantize(0.0), 0);
        assert_eq!(cfg.quantize(1e-9), 0);
        assert_eq!(cfg.quantize(1e9), 7);
        assert_eq!(cfg.quantize(1.0), 2);
        let bad = QLearningConfig { learning_rate: 2.0, ..QLearningConfig::default() };
        assert!(refine_power_map_q_learning(&map(1, 1, &[1.0]), &bad, &mut GridEnvironment::new(
            PowerGrid::new(1, 1, 1.0, 1.0, 1.0).unwrap())).is_err());
    }
}
