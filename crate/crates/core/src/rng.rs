//! Seeded random streams.
//!
//! Work that is split across threads draws from independent ChaCha streams
//! keyed by `(seed, stream)`, so results never depend on the thread count.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;

/// Generator for sub-stream `stream` of the master `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw on the open interval (0, 1).
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Standard Fréchet variate `-1 / ln U`.
pub fn frechet<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -1.0 / open_unit(rng).ln()
}

/// Standard Pareto variate `1 / U`.
pub fn pareto<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 / open_unit(rng)
}

/// Rows per independently seeded simulation chunk.
pub const CHUNK_ROWS: usize = 4096;
