//! Counter-keyed random streams.
//!
//! Every random draw is addressed by a key `(seed, purpose, cell, replica,
//! step, attempt)`. The key is hashed into the state of a SplitMix64
//! generator, so a draw does not depend on which thread produced it or on
//! the order in which replicas are visited.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::SplitMix64;

/// Separates independent uses of the same seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Brownian = 0x6272_6f77,
    Initial = 0x696e_6974,
    Resample = 0x7265_7361,
    Parameters = 0x7061_7261,
    Generic = 0x6765_6e65,
}

/// SplitMix64 output function: one generator step from state `z`.
#[inline]
fn mix(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a 64-bit stream key from a seed and an ordered list of indices.
#[inline]
pub fn derive_key(seed: u64, purpose: Purpose, parts: &[u64]) -> u64 {
    extend_key(mix(seed ^ (purpose as u64).rotate_left(32)), parts)
}

/// Continues a key derivation with further indices:
/// `derive_key(s, p, &[a, b]) == extend_key(derive_key(s, p, &[a]), &[b])`.
#[inline]
pub fn extend_key(mut key: u64, parts: &[u64]) -> u64 {
    for &p in parts {
        key = mix(key ^ p.wrapping_mul(0xd6e8_feb8_6659_fd93));
    }
    key
}

/// A SplitMix64 stream positioned at the given key.
pub fn stream(seed: u64, purpose: Purpose, parts: &[u64]) -> SplitMix64 {
    SplitMix64::seed_from_u64(derive_key(seed, purpose, parts))
}

/// Address of one Brownian increment vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseKey {
    pub cell: usize,
    pub replica: usize,
    pub step: u64,
    /// Redraw counter for rejected FENE proposals.
    pub attempt: u32,
}

/// Source of standard normal vectors driving the dumbbell SDEs.
pub trait NoiseSource: Sync {
    /// Fills `out` with independent N(0, 1) draws addressed by `key`.
    fn standard_normals(&self, key: NoiseKey, out: &mut [f64]);
}

/// Fresh independent increments for every (cell, replica, step, attempt).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndependentNoise {
    pub seed: u64,
}

impl IndependentNoise {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl NoiseSource for IndependentNoise {
    fn standard_normals(&self, key: NoiseKey, out: &mut [f64]) {
        let mut rng = stream(
            self.seed,
            Purpose::Brownian,
            &[key.cell as u64, key.replica as u64, key.step, key.attempt as u64],
        );
        fill_normals(&mut rng, out);
    }
}

#[inline]
pub fn fill_normals<R: RngCore>(rng: &mut R, out: &mut [f64]) {
    for x in out {
        *x = rng.sample(StandardNormal);
    }
}

/// One standard normal draw.
pub fn normal<R: RngCore>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// One uniform draw in [0, 1).
pub fn uniform<R: RngCore>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}
