//! Deterministic random streams.
//!
//! Every consumer draws from ChaCha8 keyed by the master seed, with the
//! 64-bit ChaCha stream id set to `(purpose << 48) | index`. Purposes never
//! share a stream, so enabling one feature (say SGLA draws) never shifts
//! the numbers another feature sees. Per-iteration streams also make
//! resuming a run equivalent to never having stopped.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    ScanSelect = 2,
    PixelSample = 3,
    Sgla = 4,
    Inversion = 5,
    Phantom = 6,
    HcNoise = 7,
    Probe = 8,
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    debug_assert!(index < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 48) | (index & ((1 << 48) - 1)));
    rng
}
