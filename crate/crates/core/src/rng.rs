//! Seeded random streams.
//!
//! Every random draw in a run comes from a [`SimRng`] built here. A run seed
//! is split into independent ChaCha streams so that, for example, drawing an
//! extra election timer never shifts the GPS noise sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream ids used by the simulator. Each is a separate ChaCha stream of the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Movement = 1,
    Gps = 2,
    Imu = 3,
    Protocol = 4,
}

pub fn stream(seed: u64, stream: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
