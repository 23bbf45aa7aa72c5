//! Seeded random streams.
//!
//! Every random draw in the toolkit comes from a ChaCha8 generator keyed by
//! the user seed, with the 64-bit ChaCha stream id selecting an independent
//! sub-stream. Stream ids are assigned as follows:
//!
//! * i.i.d. sampling from the Gaussian measure is split into fixed blocks of
//!   [`SAMPLE_BLOCK`] draws; block `j` uses stream `SAMPLES | j`.
//! * trajectory `r` of an ensemble draws its initial condition from stream
//!   `INITIAL | r` and its noise path from stream `NOISE | r`.
//!
//! Inside one stream, normals are consumed shell-major: `x_{1,1}, x_{1,2},
//! x_{2,1}, ..., x_{M,2}`, one full sweep per sample or time step. Results
//! therefore depend only on the seed and never on how work is spread across
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

/// Number of samples drawn from one stream during i.i.d. sampling.
pub const SAMPLE_BLOCK: usize = 4096;

const PURPOSE_SHIFT: u32 = 60;
pub const SAMPLES: u64 = 1 << PURPOSE_SHIFT;
pub const INITIAL: u64 = 2 << PURPOSE_SHIFT;
pub const NOISE: u64 = 3 << PURPOSE_SHIFT;

pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn sample_block_stream(seed: u64, block: u64) -> StreamRng {
    stream(seed, SAMPLES | block)
}

pub fn initial_stream(seed: u64, trajectory: u64) -> StreamRng {
    stream(seed, INITIAL | trajectory)
}

pub fn noise_stream(seed: u64, trajectory: u64) -> StreamRng {
    stream(seed, NOISE | trajectory)
}

/// Fills `out` with independent standard normals in shell-major order.
pub fn fill_normals<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [[f64; 2]]) {
    for x in out {
        x[0] = StandardNormal.sample(rng);
        x[1] = StandardNormal.sample(rng);
    }
}
