//! Discrete-time world: unicycle vehicles, randomly walking obstacles and a
//! reference waypoint drifting toward the origin.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehiclePose {
    pub x: f64,
    pub y: f64,
    /// Radians, kept in (−π, π].
    pub heading: f64,
}

impl VehiclePose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        VehiclePose { x, y, heading }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()
    }
}

/// Unicycle action: linear velocity (m/s) and angular velocity (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub linear_velocity: f64,
    pub angular_velocity: f64,
}

impl ControlInput {
    pub fn new(linear_velocity: f64, angular_velocity: f64) -> Self {
        ControlInput {
            linear_velocity,
            angular_velocity,
        }
    }

    pub fn norm_squared(&self) -> f64 {
        self.linear_velocity * self.linear_velocity + self.angular_velocity * self.angular_velocity
    }

    /// Clamps into `[0, v_max] × [−ω_max, ω_max]`.
    pub fn clipped(self, v_max: f64, omega_max: f64) -> Self {
        ControlInput {
            linear_velocity: self.linear_velocity.clamp(0.0, v_max),
            angular_velocity: self.angular_velocity.clamp(-omega_max, omega_max),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.linear_velocity.is_finite() && self.angular_velocity.is_finite()
    }
}

/// Obstacles move like vehicles but steer by a heading random walk, so they
/// carry a heading in addition to their position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub position: Vec2,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub vehicles: Vec<VehiclePose>,
    pub obstacles: Vec<Obstacle>,
    pub waypoint: Vec2,
    pub step: usize,
}

impl WorldState {
    pub fn vehicle_position(&self, i: usize) -> Vec2 {
        self.vehicles[i].position()
    }
}

/// Neighbor sets `N_i` and detected-obstacle sets `C_i`, indices ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProximitySets {
    pub neighbor_sets: Vec<Vec<usize>>,
    pub obstacle_sets: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_vehicles: usize,
    pub n_obstacles: usize,
    /// Sampling period (s).
    pub dt: f64,
    pub v_max: f64,
    pub v_max_obstacle: f64,
    pub omega_max: f64,
    /// Communication range; neighbors are strictly closer than this.
    pub r_n: f64,
    /// Minimum separation between vehicles.
    pub r_n_prime: f64,
    /// Obstacle detection range.
    pub r_o: f64,
    /// Minimum separation to obstacles.
    pub r_o_prime: f64,
    pub episode_length: usize,
    /// Entities are initialized uniformly on `[−w, w]²`.
    pub init_half_width: f64,
    pub waypoint_speed: f64,
    /// Standard deviation (rad) of the per-step obstacle heading perturbation.
    pub obstacle_heading_noise: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_vehicles: 3,
            n_obstacles: 1,
            dt: 0.1,
            v_max: 0.15,
            v_max_obstacle: 0.1,
            omega_max: PI,
            r_n: 0.15,
            r_n_prime: 0.1,
            r_o: 0.25,
            r_o_prime: 0.15,
            episode_length: 50,
            init_half_width: 1.0,
            waypoint_speed: 0.1,
            obstacle_heading_noise: 0.3,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(msg.to_string()))
            }
        };
        check(self.n_vehicles >= 1, "n_vehicles must be at least 1")?;
        check(self.dt > 0.0 && self.dt.is_finite(), "dt must be positive")?;
        check(self.v_max >= 0.0, "v_max must be non-negative")?;
        check(self.v_max_obstacle >= 0.0, "v_max_obstacle must be non-negative")?;
        check(self.omega_max >= 0.0, "omega_max must be non-negative")?;
        check(self.r_n_prime < self.r_n, "r_n_prime must be below r_n")?;
        check(self.r_o_prime < self.r_o, "r_o_prime must be below r_o")?;
        check(self.episode_length >= 1, "episode_length must be at least 1")?;
        check(self.init_half_width > 0.0, "init_half_width must be positive")?;
        check(self.waypoint_speed >= 0.0, "waypoint_speed must be non-negative")?;
        check(
            self.obstacle_heading_noise >= 0.0,
            "obstacle_heading_noise must be non-negative",
        )?;
        Ok(())
    }
}

/// One unicycle step. Translation uses the heading from before the update.
pub fn step_vehicle(pose: VehiclePose, u: ControlInput, dt: f64) -> Result<VehiclePose> {
    if !pose.is_finite() {
        return Err(Error::NonFinite("vehicle pose"));
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("control input"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::NonFinite("sampling period"));
    }
    let (s, c) = pose.heading.sin_cos();
    let ds = u.linear_velocity * dt;
    Ok(VehiclePose {
        x: pose.x + ds * c,
        y: pose.y + ds * s,
        heading: wrap_angle(pose.heading + u.angular_velocity * dt),
    })
}

pub fn build_proximity_sets(state: &WorldState, cfg: &ScenarioConfig) -> ProximitySets {
    let n = state.vehicles.len();
    let mut neighbor_sets = vec![Vec::new(); n];
    for i in 0..n {
        let pi = state.vehicle_position(i);
        for j in (i + 1)..n {
            if pi.distance(state.vehicle_position(j)) < cfg.r_n {
                neighbor_sets[i].push(j);
                neighbor_sets[j].push(i);
            }
        }
    }
    for set in &mut neighbor_sets {
        set.sort_unstable();
    }
    let obstacle_sets = state
        .vehicles
        .iter()
        .map(|v| {
            state
                .obstacles
                .iter()
                .enumerate()
                .filter(|(_, o)| v.position().distance(o.position) < cfg.r_o)
                .map(|(k, _)| k)
                .collect()
        })
        .collect();
    ProximitySets {
        neighbor_sets,
        obstacle_sets,
    }
}

/// Moves `waypoint` a distance `speed·dt` toward the origin without
/// overshooting; a waypoint at the origin stays there.
pub fn advance_waypoint(waypoint: Vec2, speed: f64, dt: f64) -> Vec2 {
    let dist = waypoint.norm();
    let travel = speed * dt;
    if dist == 0.0 || travel >= dist {
        return Vec2::ZERO;
    }
    waypoint * (1.0 - travel / dist)
}

pub fn step_world<R: Rng + ?Sized>(
    state: &WorldState,
    actions: &[ControlInput],
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<WorldState> {
    if actions.len() != state.vehicles.len() {
        return Err(Error::ActionCount {
            expected: state.vehicles.len(),
            actual: actions.len(),
        });
    }
    let vehicles = state
        .vehicles
        .iter()
        .zip(actions)
        .map(|(&pose, &u)| step_vehicle(pose, u, cfg.dt))
        .collect::<Result<Vec<_>>>()?;

    let noise = Normal::new(0.0, cfg.obstacle_heading_noise)
        .map_err(|e| Error::InvalidConfig(format!("obstacle_heading_noise: {e}")))?;
    let obstacles = state
        .obstacles
        .iter()
        .map(|o| {
            let (s, c) = o.heading.sin_cos();
            let ds = cfg.v_max_obstacle * cfg.dt;
            let position = o.position + Vec2::new(ds * c, ds * s);
            let turn: f64 = noise.sample(rng);
            Obstacle {
                position,
                heading: wrap_angle(o.heading + turn),
            }
        })
        .collect::<Vec<_>>();
    if obstacles.iter().any(|o| !o.position.is_finite()) {
        return Err(Error::NonFinite("obstacle position"));
    }

    Ok(WorldState {
        vehicles,
        obstacles,
        waypoint: advance_waypoint(state.waypoint, cfg.waypoint_speed, cfg.dt),
        step: state.step + 1,
    })
}

fn uniform_heading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // u ∈ [0, 1) maps onto (−π, π]
    PI - 2.0 * PI * rng.random::<f64>()
}

fn uniform_point<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> Vec2 {
    let x = rng.random_range(-half_width..=half_width);
    let y = rng.random_range(-half_width..=half_width);
    Vec2::new(x, y)
}

pub fn reset_episode<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> WorldState {
    let w = cfg.init_half_width;
    let vehicles = (0..cfg.n_vehicles)
        .map(|_| {
            let p = uniform_point(rng, w);
            VehiclePose::new(p.x, p.y, uniform_heading(rng))
        })
        .collect();
    let obstacles = (0..cfg.n_obstacles)
        .map(|_| Obstacle {
            position: uniform_point(rng, w),
            heading: uniform_heading(rng),
        })
        .collect();
    WorldState {
        vehicles,
        obstacles,
        waypoint: uniform_point(rng, w),
        step: 0,
    }
}
