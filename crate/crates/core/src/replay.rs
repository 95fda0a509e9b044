//! Shared experience replay: one ring buffer fed by every vehicle, sampled
//! uniformly with replacement.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::observation::Observation;
use crate::sim::ControlInput;

/// Observations are reference counted: the next observation of one step is
/// the observation of the following step, so consecutive transitions of a
/// vehicle share storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Arc<Observation>,
    pub action: ControlInput,
    /// Neighbor-inclusive reward.
    pub reward: f64,
    pub next_observation: Arc<Observation>,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.observation.is_finite()
            && self.next_observation.is_finite()
            && self.action.is_finite()
            && self.reward.is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    storage: Vec<Transition>,
    capacity: usize,
    /// Slot the next push writes once the buffer is full.
    cursor: usize,
    pushes: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            cursor: 0,
            pushes: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total pushes since construction, including overwritten ones.
    pub fn pushes(&self) -> u64 {
        self.pushes
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::NonFinite("transition"));
        }
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.cursor] = t;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
        self.pushes += 1;
        Ok(())
    }

    /// Contents from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> + '_ {
        let (newer, older) = self.storage.split_at(self.cursor);
        older.iter().chain(newer.iter())
    }

    /// `count` uniform draws with replacement. Any non-empty buffer can be
    /// sampled, even below `count` entries; waiting for enough data is the
    /// caller's warm-up policy.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Minibatch> {
        if count == 0 || self.storage.is_empty() {
            return Err(Error::InsufficientSamples {
                available: self.storage.len(),
                requested: count,
            });
        }
        let transitions = (0..count)
            .map(|_| self.storage[rng.random_range(0..self.storage.len())].clone())
            .collect();
        Ok(Minibatch { transitions })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub transitions: Vec<Transition>,
}

impl Minibatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn observations(&self) -> Array2<f64> {
        stack(self.transitions.iter().map(|t| t.observation.as_ref()))
    }

    pub fn next_observations(&self) -> Array2<f64> {
        stack(self.transitions.iter().map(|t| t.next_observation.as_ref()))
    }

    pub fn actions(&self) -> Array2<f64> {
        actions_matrix(self.transitions.iter().map(|t| &t.action))
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }
}

/// Rows of network input, one per observation.
pub fn stack<'a>(observations: impl ExactSizeIterator<Item = &'a Observation>) -> Array2<f64> {
    let rows = observations.len();
    let mut iter = observations.peekable();
    let cols = iter.peek().map_or(0, |o| o.input_len());
    let mut out = Array2::zeros((rows, cols));
    for (mut row, obs) in out.rows_mut().into_iter().zip(iter) {
        obs.write_network_input(row.as_slice_mut().expect("rows of a fresh array are contiguous"));
    }
    out
}

pub fn actions_matrix<'a>(actions: impl ExactSizeIterator<Item = &'a ControlInput>) -> Array2<f64> {
    let mut out = Array2::zeros((actions.len(), 2));
    for (k, a) in actions.enumerate() {
        out[[k, 0]] = a.linear_velocity;
        out[[k, 1]] = a.angular_velocity;
    }
    out
}
