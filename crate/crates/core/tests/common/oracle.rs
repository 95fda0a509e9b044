//! Direct evaluations of the model's defining formulas.

use flockrl::config::TrainConfig;
use flockrl::ddpg::Learner;
use flockrl::geometry::Vec2;
use flockrl::nn::{Architecture, GridShape, NetworkSpec, ParameterSet};
use flockrl::observation::{self, AnchorGrid, Observation, ObservationGrids};
use flockrl::replay::{Minibatch, Transition};
use flockrl::reward::{self, RewardWeights};
use flockrl::rng::SimRng;
use flockrl::sim::{self, ControlInput, Obstacle, ScenarioConfig, VehiclePose, WorldState};
use flockrl::trainer::compute_return;
use rand::{Rng, SeedableRng};
use std::f64::consts::PI;
use std::sync::Arc;

pub const EQ_TOLERANCE: f64 = 1e-12;
const CASES: usize = 200;

pub fn body_frame(target: Vec2, pose: &VehiclePose) -> (f64, f64) {
    let (dx, dy) = (target.x - pose.x, target.y - pose.y);
    let (c, s) = (pose.heading.cos(), pose.heading.sin());
    (c * dx + s * dy, -s * dx + c * dy)
}

pub fn anchor(m: usize, n: usize, half_width: f64, side: usize) -> (f64, f64) {
    let spacing = 2.0 * half_width / (side as f64 - 1.0);
    (-half_width + m as f64 * spacing, -half_width + n as f64 * spacing)
}

pub fn gaussian(p: (f64, f64), mu: (f64, f64), s: [[f64; 2]; 2]) -> f64 {
    let (a, b) = (p.0 - mu.0, p.1 - mu.1);
    (-(a * (s[0][0] * a + s[0][1] * b) + b * (s[1][0] * a + s[1][1] * b))).exp()
}

/// Nested-loop double sum over anchors and sources.
pub fn channel(points: &[(f64, f64)], half_width: f64, side: usize) -> Vec<f64> {
    let spacing = 2.0 * half_width / (side as f64 - 1.0);
    let s = 1.0 / (spacing * spacing);
    let sinv = [[s, 0.0], [0.0, s]];
    let mut out = vec![0.0; side * side];
    for m in 0..side {
        for n in 0..side {
            for &p in points {
                out[m * side + n] += gaussian(p, anchor(m, n, half_width, side), sinv);
            }
        }
    }
    out
}

fn clamp_square(p: (f64, f64), half_width: f64) -> (f64, f64) {
    let r = p.0.abs().max(p.1.abs());
    if r <= half_width {
        p
    } else {
        (p.0 * half_width / r, p.1 * half_width / r)
    }
}

fn distance(a: Vec2, b: Vec2) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

pub fn neighbors(state: &WorldState, i: usize, range: f64) -> Vec<usize> {
    let p = state.vehicle_position(i);
    (0..state.vehicles.len())
        .filter(|&j| j != i && distance(p, state.vehicle_position(j)) < range)
        .collect()
}

pub fn nearby_obstacles(state: &WorldState, i: usize, range: f64) -> Vec<usize> {
    let p = state.vehicle_position(i);
    (0..state.obstacles.len())
        .filter(|&o| distance(p, state.obstacles[o].position) < range)
        .collect()
}

/// All three channels of vehicle `i` from first principles.
pub fn observation(state: &WorldState, i: usize, cfg: &ScenarioConfig, side: usize, r_g: f64) -> [Vec<f64>; 3] {
    let me = &state.vehicles[i];
    let nb: Vec<_> = neighbors(state, i, cfg.r_n)
        .into_iter()
        .map(|j| body_frame(state.vehicle_position(j), me))
        .collect();
    let ob: Vec<_> = nearby_obstacles(state, i, cfg.r_o)
        .into_iter()
        .map(|o| body_frame(state.obstacles[o].position, me))
        .collect();
    let goal = clamp_square(body_frame(state.waypoint, me), r_g);
    [
        channel(&nb, cfg.r_n, side),
        channel(&ob, cfg.r_o, side),
        channel(&[goal], r_g, side),
    ]
}

pub fn connectivity(d: f64, r_n_prime: f64, r_n: f64) -> f64 {
    if d < r_n_prime {
        -1.0
    } else if r_n_prime <= d && d <= r_n {
        1.0
    } else {
        0.0
    }
}

pub fn obstacle_penalty(d: f64, r_o_prime: f64) -> f64 {
    if d < r_o_prime {
        -1.0
    } else {
        0.0
    }
}

pub fn composite(state: &WorldState, i: usize, u: ControlInput, w: &RewardWeights, cfg: &ScenarioConfig) -> f64 {
    let p = state.vehicle_position(i);
    let mut r = 0.0;
    for j in neighbors(state, i, cfg.r_n) {
        r += connectivity(distance(p, state.vehicle_position(j)), cfg.r_n_prime, cfg.r_n);
    }
    for o in nearby_obstacles(state, i, cfg.r_o) {
        r += obstacle_penalty(distance(p, state.obstacles[o].position), cfg.r_o_prime);
    }
    let (gx, gy) = body_frame(state.waypoint, &state.vehicles[i]);
    r += -w.epsilon * (gx * gx + gy * gy).sqrt();
    r += w.beta * (u.linear_velocity.powi(2) + u.angular_velocity.powi(2));
    r
}

pub fn inclusive(own: f64, others: &[f64], lambda: f64) -> f64 {
    if others.is_empty() {
        own
    } else {
        lambda * own + (1.0 - lambda) * others.iter().sum::<f64>() / others.len() as f64
    }
}

pub fn discounted(rewards: &[f64], gamma: f64) -> f64 {
    rewards
        .iter()
        .enumerate()
        .map(|(t, r)| gamma.powi(t as i32) * r)
        .sum()
}

/// Random scene in a small box so that neighbor and obstacle sets are
/// frequently non-empty.
pub fn random_scene(rng: &mut SimRng, vehicles: usize, obstacles: usize, half_width: f64) -> WorldState {
    let mut point = || Vec2::new(rng.random_range(-half_width..half_width), rng.random_range(-half_width..half_width));
    let positions: Vec<Vec2> = (0..vehicles + obstacles + 1).map(|_| point()).collect();
    WorldState {
        vehicles: positions[..vehicles]
            .iter()
            .map(|p| VehiclePose::new(p.x, p.y, rng.random_range(-PI..PI)))
            .collect(),
        obstacles: positions[vehicles..vehicles + obstacles]
            .iter()
            .map(|&p| Obstacle {
                position: p,
                heading: rng.random_range(-PI..PI),
            })
            .collect(),
        waypoint: positions[vehicles + obstacles],
        step: 0,
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn wrap(a: f64) -> f64 {
    let mut x = a.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(2.0 * PI - d)
}

pub fn step_vehicle_error(rng: &mut SimRng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..CASES {
        let pose = VehiclePose::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-PI..PI));
        let u = ControlInput::new(rng.random_range(0.0..0.3), rng.random_range(-4.0..4.0));
        let dt = rng.random_range(0.01..0.5);
        let got = sim::step_vehicle(pose, u, dt).unwrap();
        let x = pose.x + u.linear_velocity * dt * pose.heading.cos();
        let y = pose.y + u.linear_velocity * dt * pose.heading.sin();
        let h = wrap(pose.heading + u.angular_velocity * dt);
        worst = worst
            .max((got.x - x).abs())
            .max((got.y - y).abs())
            .max(angle_diff(got.heading, h));
    }
    worst
}

pub fn radial_intensity_error(rng: &mut SimRng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..CASES {
        // random symmetric positive-definite matrix L·Lᵀ + δI
        let (a, b, c) = (rng.random_range(0.1..3.0), rng.random_range(-1.0..1.0), rng.random_range(0.1..3.0));
        let s = [[a * a + 0.01, a * b], [a * b, b * b + c * c + 0.01]];
        let p = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let mu = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let got = observation::radial_intensity(Vec2::new(p.0, p.1), Vec2::new(mu.0, mu.1), &s);
        worst = worst.max((got - gaussian(p, mu, s)).abs());
    }
    worst
}

pub fn encoding_error(rng: &mut SimRng) -> f64 {
    let cfg = ScenarioConfig::default();
    let mut worst: f64 = 0.0;
    for case in 0..CASES / 4 {
        let side = [11, 7, 5, 11][case % 4];
        let r_g = 1.0;
        let state = random_scene(rng, 1 + case % 11, case % 4, 0.25);
        let sets = sim::build_proximity_sets(&state, &cfg);
        let grids = ObservationGrids::new(side, cfg.r_n, cfg.r_o, r_g).unwrap();
        for i in 0..state.vehicles.len() {
            let got = observation::encode_observation(i, &state, &sets, &grids);
            let want = observation(&state, i, &cfg, side, r_g);
            worst = worst
                .max(max_abs_diff(&got.neighbor, &want[0]))
                .max(max_abs_diff(&got.obstacle, &want[1]))
                .max(max_abs_diff(&got.goal, &want[2]));
        }
    }
    worst
}

/// Ten neighbors inside range on an 11×11 grid.
pub fn ten_neighbor_error(rng: &mut SimRng) -> f64 {
    let cfg = ScenarioConfig {
        n_vehicles: 11,
        ..ScenarioConfig::default()
    };
    let mut state = random_scene(rng, 11, 0, 0.0001);
    state.vehicles[0] = VehiclePose::new(0.0, 0.0, rng.random_range(-PI..PI));
    for v in &mut state.vehicles[1..] {
        let (r, t) = (rng.random_range(0.0..0.149), rng.random_range(-PI..PI));
        v.x = r * t.cos();
        v.y = r * t.sin();
    }
    let sets = sim::build_proximity_sets(&state, &cfg);
    assert_eq!(sets.neighbor_sets[0].len(), 10);
    let grid = AnchorGrid::isotropic(11, cfg.r_n).unwrap();
    let got = observation::encode_neighbor_channel(0, &state, &sets, &grid);
    max_abs_diff(&got, &observation(&state, 0, &cfg, 11, 1.0)[0])
}

pub fn reward_error(rng: &mut SimRng) -> f64 {
    let cfg = ScenarioConfig::default();
    let mut worst: f64 = 0.0;
    for case in 0..CASES / 2 {
        let n = 2 + case % 6;
        let state = random_scene(rng, n, case % 3, 0.2);
        let sets = sim::build_proximity_sets(&state, &cfg);
        let w = RewardWeights {
            epsilon: rng.random_range(0.1..1.0),
            beta: rng.random_range(-0.5..0.0),
            lambda: rng.random_range(0.0..=1.0),
        };
        let actions: Vec<ControlInput> = (0..n)
            .map(|_| ControlInput::new(rng.random_range(0.0..0.15), rng.random_range(-PI..PI)))
            .collect();
        let rows = reward::step_rewards(&state, &sets, &actions, &w, &cfg);
        let own: Vec<f64> = (0..n).map(|i| composite(&state, i, actions[i], &w, &cfg)).collect();
        for i in 0..n {
            let others: Vec<f64> = neighbors(&state, i, cfg.r_n).iter().map(|&j| own[j]).collect();
            let b = &rows[i];
            worst = worst
                .max((b.total - own[i]).abs())
                .max((reward::composite_reward(i, &state, &sets, &actions[i], &w, &cfg) - own[i]).abs())
                .max((b.inclusive - inclusive(own[i], &others, w.lambda)).abs())
                .max((b.connectivity + b.obstacle + b.waypoint + b.effort - b.total).abs());
        }
        // the inclusive mix on arbitrary inputs
        let others: Vec<f64> = (0..case % 5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let own = rng.random_range(-3.0..3.0);
        worst = worst.max((reward::inclusive_reward(own, &others, w.lambda) - inclusive(own, &others, w.lambda)).abs());
    }
    worst
}

fn tiny_learner(rng: &mut SimRng, gamma: f64, tau: f64) -> Learner {
    let arch = Architecture {
        conv1_filters: 2,
        conv2_filters: 2,
        kernel: 2,
        dense1: 6,
        dense2: 4,
        action_hidden: 4,
        head_hidden: 4,
    };
    let input = GridShape {
        height: 4,
        width: 4,
        channels: 3,
    };
    let mut cfg = TrainConfig::default().learner;
    cfg.gamma = gamma;
    cfg.tau = tau;
    Learner::new(
        NetworkSpec::actor(&arch, input, 0.15, PI),
        NetworkSpec::critic(&arch, input, 0.15, PI),
        cfg,
        rng,
    )
    .unwrap()
}

fn random_observation(rng: &mut SimRng, side: usize) -> Observation {
    let mut o = Observation::zeros(side);
    for v in o.neighbor.iter_mut().chain(o.obstacle.iter_mut()).chain(o.goal.iter_mut()) {
        *v = rng.random_range(0.0..1.0);
    }
    o
}

/// Bootstrapped targets recomputed from separately evaluated target networks.
pub fn target_value_error(rng: &mut SimRng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..CASES / 10 {
        let gamma = rng.random_range(0.0..=1.0);
        let mut learner = tiny_learner(rng, gamma, 0.5);
        // make the targets differ from the online networks
        learner.target_actor = learner.actor_net.init_params(rng);
        learner.target_critic = learner.critic_net.init_params(rng);
        let batch = Minibatch {
            transitions: (0..5)
                .map(|_| Transition {
                    observation: Arc::new(random_observation(rng, 4)),
                    action: ControlInput::new(rng.random_range(0.0..0.15), rng.random_range(-PI..PI)),
                    reward: rng.random_range(-2.0..2.0),
                    next_observation: Arc::new(random_observation(rng, 4)),
                })
                .collect(),
        };
        let got = learner.target_values(&batch).unwrap();
        for (t, y) in batch.transitions.iter().zip(got) {
            let next = flockrl::replay::stack(std::iter::once(t.next_observation.as_ref()));
            let a = learner.actor_net.predict(&learner.target_actor, next.view(), None).unwrap();
            let q = learner
                .critic_net
                .predict(&learner.target_critic, next.view(), Some(a.view()))
                .unwrap()[[0, 0]];
            worst = worst.max((y - (t.reward + gamma * q)).abs());
        }
    }
    worst
}

pub fn soft_update_error(rng: &mut SimRng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..CASES / 10 {
        let tau = rng.random_range(0.0..=1.0);
        let mut learner = tiny_learner(rng, 0.9, tau);
        learner.actor = learner.actor_net.init_params(rng);
        learner.critic = learner.critic_net.init_params(rng);
        let before: [ParameterSet; 2] = [learner.target_actor.clone(), learner.target_critic.clone()];
        learner.soft_update().unwrap();
        for (old, (online, new)) in before.iter().zip([
            (&learner.actor, &learner.target_actor),
            (&learner.critic, &learner.target_critic),
        ]) {
            for k in 0..old.len() {
                let want = tau * online.get(k) + (1.0 - tau) * old.get(k);
                worst = worst.max((new.get(k) - want).abs());
            }
        }
    }
    worst
}

pub fn return_error(rng: &mut SimRng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..CASES {
        let len = rng.random_range(0..60);
        let rewards: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..1.0)).collect();
        let gamma = rng.random_range(0.0..=1.0);
        worst = worst.max((compute_return(&rewards, gamma) - discounted(&rewards, gamma)).abs());
    }
    worst
}

/// All equation checks, each with the worst absolute error seen.
pub fn equation_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = SimRng::seed_from_u64(seed);
    vec![
        ("step_vehicle", step_vehicle_error(&mut rng)),
        ("radial_intensity", radial_intensity_error(&mut rng)),
        ("channel encodings", encoding_error(&mut rng)),
        ("ten-neighbor channel", ten_neighbor_error(&mut rng)),
        ("composite and inclusive rewards", reward_error(&mut rng)),
        ("target value", target_value_error(&mut rng)),
        ("soft update", soft_update_error(&mut rng)),
        ("discounted return", return_error(&mut rng)),
    ]
}

/// Evaluates both piecewise terms on a fine grid containing every boundary
/// exactly, plus the neighboring floats on either side. Returns the number of
/// points and which branches were reached: (−1, 0, +1) for connectivity and
/// (−1, 0) for the obstacle term.
pub fn branch_grid(cfg: &ScenarioConfig) -> Result<(usize, [bool; 5]), String> {
    let mut grid: Vec<f64> = (0..=40_000).map(|k| k as f64 * 1e-5).collect();
    for b in [cfg.r_n_prime, cfg.r_n, cfg.r_o_prime] {
        grid.extend([b, f64::from_bits(b.to_bits() - 1), f64::from_bits(b.to_bits() + 1)]);
    }
    let mut seen = [false; 5];
    for &d in &grid {
        let c = reward::connectivity_term(d, cfg.r_n_prime, cfg.r_n);
        if c != connectivity(d, cfg.r_n_prime, cfg.r_n) {
            return Err(format!("connectivity at d = {d:e}: {c}"));
        }
        let o = reward::obstacle_term(d, cfg.r_o_prime);
        if o != obstacle_penalty(d, cfg.r_o_prime) {
            return Err(format!("obstacle at d = {d:e}: {o}"));
        }
        match [-1.0, 0.0, 1.0].iter().position(|&v| v == c) {
            Some(k) => seen[k] = true,
            None => return Err(format!("connectivity value {c}")),
        }
        match [-1.0, 0.0].iter().position(|&v| v == o) {
            Some(k) => seen[3 + k] = true,
            None => return Err(format!("obstacle value {o}")),
        }
    }
    // boundary values, stated explicitly
    let exact = [
        reward::connectivity_term(cfg.r_n_prime, cfg.r_n_prime, cfg.r_n) == 1.0,
        reward::connectivity_term(cfg.r_n, cfg.r_n_prime, cfg.r_n) == 1.0,
        reward::obstacle_term(cfg.r_o_prime, cfg.r_o_prime) == 0.0,
    ];
    if exact.contains(&false) {
        return Err(format!("boundary values {exact:?}"));
    }
    Ok((grid.len(), seen))
}
