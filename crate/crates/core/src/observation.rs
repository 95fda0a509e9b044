//! Fixed-size encoding of a vehicle's local view.
//!
//! Each entity type (neighbors, obstacles, waypoint) is rendered onto its own
//! `l × l` lattice of anchors laid out in the observer's body frame. An anchor
//! at `μ` responds to a body-frame point `p` with the Gaussian radial intensity
//! `exp(−(p − μ)ᵀ Σ⁻¹ (p − μ))`, and a channel entry is the sum of responses
//! over the contributing set. The result has the same shape no matter how many
//! neighbors or obstacles are in range.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::geometry::Vec2;
use crate::sim::{ProximitySets, VehiclePose, WorldState};

pub const CHANNELS: usize = 3;

/// Square lattice of anchors on `[−half_width, half_width]²`, corners included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorGrid {
    pub side: usize,
    pub half_width: f64,
    /// Symmetric positive-definite sensitivity matrix `Σ⁻¹`.
    pub sigma_inverse: [[f64; 2]; 2],
}

impl AnchorGrid {
    /// Isotropic grid with `σ` equal to one anchor spacing.
    pub fn isotropic(side: usize, half_width: f64) -> Result<Self> {
        if side < 2 {
            return Err(Error::InvalidConfig("anchor grid side must be at least 2".into()));
        }
        if !(half_width > 0.0) {
            return Err(Error::InvalidConfig("anchor grid half width must be positive".into()));
        }
        let sigma = 2.0 * half_width / (side - 1) as f64;
        let inv = 1.0 / (sigma * sigma);
        Ok(AnchorGrid {
            side,
            half_width,
            sigma_inverse: [[inv, 0.0], [0.0, inv]],
        })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.side - 1) as f64
    }

    /// Anchor `(m, n)`: `m` runs along body +x, `n` along body +y.
    pub fn anchor(&self, m: usize, n: usize) -> Vec2 {
        let h = self.spacing();
        Vec2::new(-self.half_width + m as f64 * h, -self.half_width + n as f64 * h)
    }

    pub fn len(&self) -> usize {
        self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        self.side == 0
    }

    /// Adds the response of every anchor to `p` into `channel` (row-major by `m`).
    fn accumulate(&self, p: Vec2, channel: &mut [f64]) {
        let h = self.spacing();
        for m in 0..self.side {
            let ax = -self.half_width + m as f64 * h;
            let row = &mut channel[m * self.side..(m + 1) * self.side];
            for (n, out) in row.iter_mut().enumerate() {
                let anchor = Vec2::new(ax, -self.half_width + n as f64 * h);
                *out += radial_intensity(p, anchor, &self.sigma_inverse);
            }
        }
    }

    /// Sums the responses to a set of sources. Sources are added in sorted
    /// coordinate order, so the result does not depend on how the caller
    /// happened to index them, down to the last bit.
    fn accumulate_set(&self, mut points: Vec<Vec2>, channel: &mut [f64]) {
        points.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        for p in points {
            self.accumulate(p, channel);
        }
    }

    /// Radially projects `p` onto the grid square if it lies outside; the
    /// bearing is preserved.
    pub fn clamp_to_region(&self, p: Vec2) -> Vec2 {
        let extent = p.x.abs().max(p.y.abs());
        if extent > self.half_width {
            p * (self.half_width / extent)
        } else {
            p
        }
    }
}

/// The three channel grids used for one observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationGrids {
    pub neighbor: AnchorGrid,
    pub obstacle: AnchorGrid,
    pub goal: AnchorGrid,
}

impl ObservationGrids {
    /// Isotropic grids with half widths `r_c`, `r_o`, `r_g`.
    pub fn new(side: usize, r_c: f64, r_o: f64, r_g: f64) -> Result<Self> {
        Ok(ObservationGrids {
            neighbor: AnchorGrid::isotropic(side, r_c)?,
            obstacle: AnchorGrid::isotropic(side, r_o)?,
            goal: AnchorGrid::isotropic(side, r_g)?,
        })
    }

    pub fn side(&self) -> usize {
        self.neighbor.side
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub side: usize,
    pub neighbor: Vec<f64>,
    pub obstacle: Vec<f64>,
    pub goal: Vec<f64>,
}

impl Observation {
    pub fn zeros(side: usize) -> Self {
        Observation {
            side,
            neighbor: vec![0.0; side * side],
            obstacle: vec![0.0; side * side],
            goal: vec![0.0; side * side],
        }
    }

    /// Number of scalars fed to a network.
    pub fn input_len(&self) -> usize {
        CHANNELS * self.side * self.side
    }

    /// Writes the channels interleaved per anchor (height × width × channel).
    pub fn write_network_input(&self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.input_len());
        for (k, px) in out.chunks_exact_mut(CHANNELS).enumerate() {
            px[0] = self.neighbor[k];
            px[1] = self.obstacle[k];
            px[2] = self.goal[k];
        }
    }

    pub fn is_finite(&self) -> bool {
        self.neighbor
            .iter()
            .chain(&self.obstacle)
            .chain(&self.goal)
            .all(|v| v.is_finite())
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        match c {
            0 => &self.neighbor,
            1 => &self.obstacle,
            2 => &self.goal,
            _ => panic!("observation has {CHANNELS} channels, asked for {c}"),
        }
    }
}

/// `R(Θ)(target − observer)`: the observer's heading maps onto body +x.
pub fn to_body_frame(target: Vec2, observer: &VehiclePose) -> Vec2 {
    (target - observer.position()).rotated(-observer.heading)
}

pub fn radial_intensity(p_body: Vec2, anchor: Vec2, sigma_inverse: &[[f64; 2]; 2]) -> f64 {
    let d = p_body - anchor;
    let q = d.x * (sigma_inverse[0][0] * d.x + sigma_inverse[0][1] * d.y)
        + d.y * (sigma_inverse[1][0] * d.x + sigma_inverse[1][1] * d.y);
    (-q).exp()
}

pub fn encode_neighbor_channel(
    i: usize,
    state: &WorldState,
    sets: &ProximitySets,
    grid: &AnchorGrid,
) -> Vec<f64> {
    let observer = &state.vehicles[i];
    let mut channel = vec![0.0; grid.len()];
    let points = sets.neighbor_sets[i]
        .iter()
        .map(|&j| to_body_frame(state.vehicle_position(j), observer))
        .collect();
    grid.accumulate_set(points, &mut channel);
    channel
}

pub fn encode_obstacle_channel(
    i: usize,
    state: &WorldState,
    sets: &ProximitySets,
    grid: &AnchorGrid,
) -> Vec<f64> {
    let observer = &state.vehicles[i];
    let mut channel = vec![0.0; grid.len()];
    let points = sets.obstacle_sets[i]
        .iter()
        .map(|&o| to_body_frame(state.obstacles[o].position, observer))
        .collect();
    grid.accumulate_set(points, &mut channel);
    channel
}

pub fn encode_goal_channel(i: usize, state: &WorldState, grid: &AnchorGrid) -> Vec<f64> {
    let p = grid.clamp_to_region(to_body_frame(state.waypoint, &state.vehicles[i]));
    let mut channel = vec![0.0; grid.len()];
    grid.accumulate(p, &mut channel);
    channel
}

pub fn encode_observation(
    i: usize,
    state: &WorldState,
    sets: &ProximitySets,
    grids: &ObservationGrids,
) -> Observation {
    Observation {
        side: grids.side(),
        neighbor: encode_neighbor_channel(i, state, sets, &grids.neighbor),
        obstacle: encode_obstacle_channel(i, state, sets, &grids.obstacle),
        goal: encode_goal_channel(i, state, &grids.goal),
    }
}

/// Observations of every vehicle, in vehicle order.
pub fn encode_all(
    state: &WorldState,
    sets: &ProximitySets,
    grids: &ObservationGrids,
    exec: Execution,
) -> Vec<Observation> {
    exec::map_indices(exec, state.vehicles.len(), |i| {
        encode_observation(i, state, sets, grids)
    })
}

/// Dumps one channel as an `l × l` CSV matrix, row `m`, column `n`.
pub fn write_channel_csv<W: Write>(channel: &[f64], side: usize, mut out: W) -> std::io::Result<()> {
    for row in channel.chunks(side) {
        let line = row.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        writeln!(out, "{line}")?;
    }
    Ok(())
}
