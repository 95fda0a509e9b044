//! Symmetries of the observation encoder on random scenes.

use flockrl::geometry::Vec2;
use flockrl::observation::{encode_all, Observation, ObservationGrids};
use flockrl::exec::Execution;
use flockrl::rng::SimRng;
use flockrl::sim::{build_proximity_sets, ScenarioConfig, WorldState};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use std::f64::consts::PI;

use super::oracle::random_scene;

pub const SCENES: usize = 100;
pub const TOLERANCE: f64 = 1e-9;

fn encode(state: &WorldState, cfg: &ScenarioConfig, grids: &ObservationGrids) -> Vec<Observation> {
    let sets = build_proximity_sets(state, cfg);
    encode_all(state, &sets, grids, Execution::Sequential)
}

fn max_diff(a: &Observation, b: &Observation) -> f64 {
    (0..3)
        .flat_map(|c| a.channel(c).iter().zip(b.channel(c)).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

fn scene(rng: &mut SimRng) -> WorldState {
    let n = rng.random_range(2..11);
    let k = rng.random_range(0..4);
    let mut s = random_scene(rng, n, k, 0.3);
    // waypoint sometimes far outside the goal grid, to exercise clamping
    s.waypoint = Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
    s
}

fn setup() -> (ScenarioConfig, ObservationGrids) {
    let cfg = ScenarioConfig::default();
    let grids = ObservationGrids::new(11, cfg.r_n, cfg.r_o, 1.0).unwrap();
    (cfg, grids)
}

/// Worst change when every entity is shifted by one random vector.
pub fn translation_error(seed: u64) -> f64 {
    let (cfg, grids) = setup();
    let mut rng = SimRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..SCENES {
        let s = scene(&mut rng);
        let shift = Vec2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let mut t = s.clone();
        for v in &mut t.vehicles {
            v.x += shift.x;
            v.y += shift.y;
        }
        for o in &mut t.obstacles {
            o.position = o.position + shift;
        }
        t.waypoint = t.waypoint + shift;
        for (a, b) in encode(&s, &cfg, &grids).iter().zip(&encode(&t, &cfg, &grids)) {
            worst = worst.max(max_diff(a, b));
        }
    }
    worst
}

/// Worst change when the world is rotated about one vehicle and every
/// heading turns by the same angle.
pub fn rotation_error(seed: u64) -> f64 {
    let (cfg, grids) = setup();
    let mut rng = SimRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..SCENES {
        let s = scene(&mut rng);
        let pivot = s.vehicle_position(rng.random_range(0..s.vehicles.len()));
        let alpha = rng.random_range(-PI..PI);
        let turn = |p: Vec2| pivot + (p - pivot).rotated(alpha);
        let mut t = s.clone();
        for v in &mut t.vehicles {
            let p = turn(v.position());
            v.x = p.x;
            v.y = p.y;
            v.heading = flockrl::geometry::wrap_angle(v.heading + alpha);
        }
        for o in &mut t.obstacles {
            o.position = turn(o.position);
        }
        t.waypoint = turn(t.waypoint);
        for (a, b) in encode(&s, &cfg, &grids).iter().zip(&encode(&t, &cfg, &grids)) {
            worst = worst.max(max_diff(a, b));
        }
    }
    worst
}

/// Number of scenes where relabeling vehicles and obstacles changed any
/// observation bit.
pub fn permutation_mismatches(seed: u64) -> usize {
    let (cfg, grids) = setup();
    let mut rng = SimRng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..SCENES {
        let s = scene(&mut rng);
        let mut order: Vec<usize> = (0..s.vehicles.len()).collect();
        order.shuffle(&mut rng);
        let mut t = s.clone();
        t.vehicles = order.iter().map(|&k| s.vehicles[k]).collect();
        t.obstacles.shuffle(&mut rng);
        let before = encode(&s, &cfg, &grids);
        let after = encode(&t, &cfg, &grids);
        // vehicle order[k] of the old scene is vehicle k of the new one
        if order.iter().enumerate().any(|(k, &old)| before[old] != after[k]) {
            mismatches += 1;
        }
    }
    mismatches
}
