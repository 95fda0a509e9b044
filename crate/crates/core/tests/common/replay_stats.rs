//! Sampling frequencies and ring-buffer order.

use std::sync::Arc;

use flockrl::observation::Observation;
use flockrl::replay::{ReplayBuffer, Transition};
use flockrl::rng::{stream_rng, Stream};
use flockrl::sim::ControlInput;

pub const DRAWS: usize = 100_000;
pub const ELEMENTS: usize = 10;

fn tagged(tag: usize) -> Transition {
    let o = Arc::new(Observation::zeros(2));
    Transition {
        observation: Arc::clone(&o),
        action: ControlInput::new(0.0, 0.0),
        reward: tag as f64,
        next_observation: o,
    }
}

/// Largest deviation of any element's count from its expectation, in units
/// of the binomial standard deviation, over single-draw samples.
pub fn frequency_deviation(seed: u64) -> (f64, Vec<usize>) {
    let mut buffer = ReplayBuffer::new(ELEMENTS).unwrap();
    for k in 0..ELEMENTS {
        buffer.push(tagged(k)).unwrap();
    }
    let mut rng = stream_rng(seed, Stream::Replay);
    let mut counts = vec![0usize; ELEMENTS];
    for _ in 0..DRAWS {
        let batch = buffer.sample(1, &mut rng).unwrap();
        counts[batch.transitions[0].reward as usize] += 1;
    }
    let p = 1.0 / ELEMENTS as f64;
    let mean = DRAWS as f64 * p;
    let sigma = (DRAWS as f64 * p * (1.0 - p)).sqrt();
    let worst = counts
        .iter()
        .map(|&c| (c as f64 - mean).abs() / sigma)
        .fold(0.0, f64::max);
    (worst, counts)
}

/// Checks that after every push count up to three times the capacity the
/// buffer holds exactly the latest pushes, oldest first. Returns the number
/// of (capacity, push count) cases checked.
pub fn fifo_exhaustive(max_capacity: usize) -> Result<usize, String> {
    let mut cases = 0;
    for capacity in 1..=max_capacity {
        let mut buffer = ReplayBuffer::new(capacity).unwrap();
        for k in 1..=3 * capacity + 1 {
            buffer.push(tagged(k)).unwrap();
            let held: Vec<usize> = buffer.iter().map(|t| t.reward as usize).collect();
            let first = k.saturating_sub(capacity) + 1;
            let want: Vec<usize> = (first..=k).collect();
            if held != want {
                return Err(format!("capacity {capacity}, {k} pushes: {held:?}, expected {want:?}"));
            }
            cases += 1;
        }
    }
    Ok(cases)
}
