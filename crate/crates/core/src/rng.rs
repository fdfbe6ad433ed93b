//! Counter-based random streams.
//!
//! Every random object is driven by its own ChaCha stream keyed by
//! `(seed, replica, stream id)`, so results never depend on the order in
//! which objects are materialized or on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};

pub type StreamRng = ChaCha8Rng;

/// Opens the stream `id` of replica `replica` under experiment seed `seed`.
pub fn stream(seed: u64, replica: u64, id: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replica.to_le_bytes());
    key[16..24].copy_from_slice(b"clanwalk");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(id);
    rng
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a tagged tuple of words into a stream id.
pub fn stream_id(tag: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix(tag);
    for &p in parts {
        h = splitmix(h ^ p);
    }
    h
}

pub fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive mean");
    d.sample(rng) as u64
}
