//! Noise-free policy evaluation.

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::ddpg::Learner;
use crate::error::Result;
use crate::exec::{self, Execution};
use crate::metrics::FlockStats;
use crate::observation::{encode_all, ObservationGrids};
use crate::rng::{episode_rng, Stream};
use crate::sim::{build_proximity_sets, reset_episode, step_world, WorldState};

/// Per-episode statistics of an evaluation run plus their aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub seed: u64,
    pub episodes: Vec<FlockStats>,
    pub total: FlockStats,
}

/// The reported numbers. Separations are `None` when the scenario has no
/// pair of that kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub seed: u64,
    pub n_vehicles: usize,
    pub n_obstacles: usize,
    pub tracking_error: f64,
    pub min_obstacle_separation: Option<f64>,
    pub min_neighbor_separation: Option<f64>,
    pub mean_neighbor_separation: Option<f64>,
    pub collision_step_fraction: f64,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl Evaluation {
    pub fn summary(&self, cfg: &TrainConfig) -> EvalSummary {
        summarize(&self.total, self.episodes.len(), self.seed, cfg)
    }
}

pub fn summarize(total: &FlockStats, episodes: usize, seed: u64, cfg: &TrainConfig) -> EvalSummary {
    EvalSummary {
        episodes,
        seed,
        n_vehicles: cfg.scenario.n_vehicles,
        n_obstacles: cfg.scenario.n_obstacles,
        tracking_error: total.tracking_error(),
        min_obstacle_separation: finite(total.min_obstacle_separation),
        min_neighbor_separation: finite(total.min_neighbor_separation),
        mean_neighbor_separation: finite(total.mean_neighbor_separation()),
        collision_step_fraction: total.violation_fraction(),
    }
}

/// Plays evaluation episode `episode` of `seed` greedily. Each episode has
/// its own random streams, so episodes are independent of each other and of
/// evaluation order. With `keep_states`, the returned trajectory holds the
/// initial state followed by every post-step state.
pub fn play_episode(
    learner: &Learner,
    cfg: &TrainConfig,
    grids: &ObservationGrids,
    seed: u64,
    episode: u64,
    keep_states: bool,
) -> Result<(FlockStats, Vec<WorldState>)> {
    let scenario = &cfg.scenario;
    let mut init_rng = episode_rng(seed, Stream::Evaluation, episode);
    let mut walk_rng = episode_rng(seed, Stream::ObstacleWalk, episode);
    let mut state = reset_episode(scenario, &mut init_rng);
    let mut stats = FlockStats::default();
    let mut states = Vec::new();
    if keep_states {
        states.push(state.clone());
    }
    for _ in 0..scenario.episode_length {
        let sets = build_proximity_sets(&state, scenario);
        // one thread per episode already; encoding stays sequential here
        let observations = encode_all(&state, &sets, grids, Execution::Sequential);
        let refs: Vec<_> = observations.iter().collect();
        let actions = learner.policy(&refs)?;
        let actions: Vec<_> = actions
            .into_iter()
            .map(|a| a.clipped(scenario.v_max, scenario.omega_max))
            .collect();
        state = step_world(&state, &actions, scenario, &mut walk_rng)?;
        stats.observe(&state, scenario);
        if keep_states {
            states.push(state.clone());
        }
    }
    Ok((stats, states))
}

/// Evaluates `episodes` episodes without exploration noise or learning.
pub fn run_evaluation(
    learner: &Learner,
    cfg: &TrainConfig,
    episodes: usize,
    seed: u64,
) -> Result<Evaluation> {
    cfg.validate()?;
    let grids = cfg.observation_grids()?;
    let results = exec::map_indices(cfg.execution, episodes, |e| {
        play_episode(learner, cfg, &grids, seed, e as u64, false).map(|(s, _)| s)
    });
    let episodes = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut total = FlockStats::default();
    for s in &episodes {
        total.merge(s);
    }
    Ok(Evaluation {
        seed,
        episodes,
        total,
    })
}
