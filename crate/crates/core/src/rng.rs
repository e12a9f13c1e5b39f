//! Deterministic random sub-streams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream whose seed is a
//! function of `(master seed, role, id, round)`. The mixing is a chain of
//! splitmix64 finalizers, so streams for different tuples are unrelated and a
//! client's noise does not depend on which thread ran it or on how many other
//! clients drew before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Who consumes a stream. The discriminant is part of the seed derivation and
/// must stay stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Role {
    /// Initial hypotheses.
    Hypotheses = 1,
    /// Server-side client sampling, one stream per round.
    Sampling = 2,
    /// Client-side local training and sanitization, per (client, round).
    Client = 3,
    /// Sub-sampling of validation clients, per round.
    Validation = 4,
    /// Synthetic population generation.
    Population = 5,
    /// Train/validation split.
    Split = 6,
    /// Hospital-style fixture generation.
    Fixture = 7,
    /// Free-standing diagnostics (mechanism verification, examples).
    Diagnostics = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the sub-stream for `(master, role, id, round)`.
pub fn derive_seed(master: u64, role: Role, id: u64, round: u64) -> u64 {
    let mut h = splitmix64(master);
    for word in [role as u64, id, round] {
        h = splitmix64(h ^ word);
    }
    h
}

/// The sub-stream for `(master, role, id, round)`.
pub fn stream(master: u64, role: Role, id: u64, round: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, role, id, round))
}
