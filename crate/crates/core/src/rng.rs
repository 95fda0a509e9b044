//! Seed splitting. Every random consumer draws from its own ChaCha stream so
//! that changing how many numbers one consumer takes never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    ObstacleWalk = 2,
    Exploration = 3,
    Replay = 4,
    Network = 5,
    Evaluation = 6,
}

pub fn stream_rng(seed: u64, stream: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Stream for one numbered episode of a consumer, e.g. the initial layout of
/// evaluation episode 17.
pub fn episode_rng(seed: u64, stream: Stream, episode: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 40) | (episode & ((1 << 40) - 1)));
    rng
}
