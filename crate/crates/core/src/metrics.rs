//! Flocking quality measures: waypoint tracking error, separations and
//! safety violations, accumulated per episode and merged across episodes.

use serde::{Deserialize, Serialize};

use crate::sim::{ScenarioConfig, WorldState};

/// Running sums over the states of one or more episodes. Minima start at
/// `+∞` and stay there when no pair of the kind exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlockStats {
    pub steps: u64,
    pub vehicle_steps: u64,
    pub tracking_sum: f64,
    pub min_obstacle_separation: f64,
    pub min_neighbor_separation: f64,
    pub neighbor_separation_sum: f64,
    pub neighbor_pairs: u64,
    /// Vehicle-steps with some other vehicle closer than `r_n'` or some
    /// obstacle closer than `r_o'`.
    pub violations: u64,
}

impl Default for FlockStats {
    fn default() -> Self {
        FlockStats {
            steps: 0,
            vehicle_steps: 0,
            tracking_sum: 0.0,
            min_obstacle_separation: f64::INFINITY,
            min_neighbor_separation: f64::INFINITY,
            neighbor_separation_sum: 0.0,
            neighbor_pairs: 0,
            violations: 0,
        }
    }
}

impl FlockStats {
    /// Adds one state; returns that state's mean tracking error.
    pub fn observe(&mut self, state: &WorldState, cfg: &ScenarioConfig) -> f64 {
        let n = state.vehicles.len();
        let mut tracking = 0.0;
        let mut violating = vec![false; n];
        for i in 0..n {
            let p = state.vehicle_position(i);
            tracking += p.distance(state.waypoint);
            for o in &state.obstacles {
                let d = p.distance(o.position);
                self.min_obstacle_separation = self.min_obstacle_separation.min(d);
                if d < cfg.r_o_prime {
                    violating[i] = true;
                }
            }
            for j in i + 1..n {
                let d = p.distance(state.vehicle_position(j));
                self.min_neighbor_separation = self.min_neighbor_separation.min(d);
                self.neighbor_separation_sum += d;
                self.neighbor_pairs += 1;
                if d < cfg.r_n_prime {
                    violating[i] = true;
                    violating[j] = true;
                }
            }
        }
        self.steps += 1;
        self.vehicle_steps += n as u64;
        self.tracking_sum += tracking;
        self.violations += violating.iter().filter(|&&v| v).count() as u64;
        if n == 0 {
            0.0
        } else {
            tracking / n as f64
        }
    }

    pub fn merge(&mut self, other: &FlockStats) {
        self.steps += other.steps;
        self.vehicle_steps += other.vehicle_steps;
        self.tracking_sum += other.tracking_sum;
        self.min_obstacle_separation = self.min_obstacle_separation.min(other.min_obstacle_separation);
        self.min_neighbor_separation = self.min_neighbor_separation.min(other.min_neighbor_separation);
        self.neighbor_separation_sum += other.neighbor_separation_sum;
        self.neighbor_pairs += other.neighbor_pairs;
        self.violations += other.violations;
    }

    /// Mean over steps and vehicles of the vehicle-to-waypoint distance.
    pub fn tracking_error(&self) -> f64 {
        self.tracking_sum / self.vehicle_steps as f64
    }

    /// Mean over steps and vehicle pairs.
    pub fn mean_neighbor_separation(&self) -> f64 {
        self.neighbor_separation_sum / self.neighbor_pairs as f64
    }

    pub fn violation_fraction(&self) -> f64 {
        self.violations as f64 / self.vehicle_steps as f64
    }
}
