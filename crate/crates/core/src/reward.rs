//! Per-vehicle reward: connectivity band, obstacle clearance, waypoint
//! distance and control effort, plus the neighbor-inclusive mix used for
//! training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::observation::to_body_frame;
use crate::sim::{ControlInput, ProximitySets, ScenarioConfig, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    /// Waypoint distance normalizer (1/m).
    pub epsilon: f64,
    /// Effort weight, negative to penalize.
    pub beta: f64,
    /// Share of a vehicle's own reward in the inclusive reward.
    pub lambda: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            // reciprocal of the [−1, 1]² diagonal
            epsilon: 1.0 / (2.0 * std::f64::consts::SQRT_2),
            beta: -0.1,
            lambda: 0.5,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig("lambda must lie in [0, 1]".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if !self.beta.is_finite() {
            return Err(Error::InvalidConfig("beta must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub connectivity: f64,
    pub obstacle: f64,
    pub waypoint: f64,
    pub effort: f64,
    pub total: f64,
    pub inclusive: f64,
}

/// +1 inside the band `[r_n', r_n]`, −1 closer than `r_n'`, 0 beyond.
pub fn connectivity_term(d: f64, r_n_prime: f64, r_n: f64) -> f64 {
    if d < r_n_prime {
        -1.0
    } else if d <= r_n {
        1.0
    } else {
        0.0
    }
}

pub fn obstacle_term(d: f64, r_o_prime: f64) -> f64 {
    if d < r_o_prime {
        -1.0
    } else {
        0.0
    }
}

pub fn waypoint_term(x_ig: Vec2, epsilon: f64) -> f64 {
    -epsilon * x_ig.norm()
}

/// All components of `r_i`; `inclusive` is left equal to `total`.
pub fn composite_breakdown(
    i: usize,
    state: &WorldState,
    sets: &ProximitySets,
    action: &ControlInput,
    weights: &RewardWeights,
    cfg: &ScenarioConfig,
) -> RewardBreakdown {
    let me = &state.vehicles[i];
    let connectivity: f64 = sets.neighbor_sets[i]
        .iter()
        .map(|&j| {
            let d = me.position().distance(state.vehicle_position(j));
            connectivity_term(d, cfg.r_n_prime, cfg.r_n)
        })
        .sum();
    let obstacle: f64 = sets.obstacle_sets[i]
        .iter()
        .map(|&o| obstacle_term(me.position().distance(state.obstacles[o].position), cfg.r_o_prime))
        .sum();
    let waypoint = waypoint_term(to_body_frame(state.waypoint, me), weights.epsilon);
    let effort = weights.beta * action.norm_squared();
    let total = connectivity + obstacle + waypoint + effort;
    RewardBreakdown {
        connectivity,
        obstacle,
        waypoint,
        effort,
        total,
        inclusive: total,
    }
}

pub fn composite_reward(
    i: usize,
    state: &WorldState,
    sets: &ProximitySets,
    action: &ControlInput,
    weights: &RewardWeights,
    cfg: &ScenarioConfig,
) -> f64 {
    composite_breakdown(i, state, sets, action, weights, cfg).total
}

/// `λ r_i + (1 − λ) mean(r_j)`; with no neighbors the vehicle keeps `r_i`.
pub fn inclusive_reward(r_self: f64, neighbor_rewards: &[f64], lambda: f64) -> f64 {
    if neighbor_rewards.is_empty() {
        return r_self;
    }
    let mean = neighbor_rewards.iter().sum::<f64>() / neighbor_rewards.len() as f64;
    lambda * r_self + (1.0 - lambda) * mean
}

/// Breakdowns for every vehicle at one (post-step) state, with the
/// inclusive reward filled in from the same state's neighbor sets.
pub fn step_rewards(
    state: &WorldState,
    sets: &ProximitySets,
    actions: &[ControlInput],
    weights: &RewardWeights,
    cfg: &ScenarioConfig,
) -> Vec<RewardBreakdown> {
    let mut out: Vec<RewardBreakdown> = (0..state.vehicles.len())
        .map(|i| composite_breakdown(i, state, sets, &actions[i], weights, cfg))
        .collect();
    let totals: Vec<f64> = out.iter().map(|b| b.total).collect();
    for (i, b) in out.iter_mut().enumerate() {
        let neighbors: Vec<f64> = sets.neighbor_sets[i].iter().map(|&j| totals[j]).collect();
        b.inclusive = inclusive_reward(totals[i], &neighbors, weights.lambda);
    }
    out
}
