//! Counter-based random streams keyed by (seed, pixel, sample).
//!
//! Every Monte Carlo sample owns an independent stream derived only from its
//! key, so results do not depend on scheduling or thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SamplerState {
    pub seed: u64,
    pub pixel: u64,
    pub sample: u64,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SamplerState {
    pub fn new(seed: u64, pixel: u64, sample: u64) -> Self {
        Self {
            seed,
            pixel,
            sample,
        }
    }

    pub fn rng(&self) -> SampleRng {
        let a = splitmix64(self.seed);
        let b = splitmix64(a ^ self.pixel);
        let c = splitmix64(b ^ self.sample.rotate_left(32));
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&a.to_le_bytes());
        key[8..16].copy_from_slice(&b.to_le_bytes());
        key[16..24].copy_from_slice(&c.to_le_bytes());
        key[24..].copy_from_slice(&splitmix64(c).to_le_bytes());
        SampleRng(ChaCha8Rng::from_seed(key))
    }
}

/// Uniform stream for one Monte Carlo sample.
#[derive(Clone, Debug)]
pub struct SampleRng(ChaCha8Rng);

impl SampleRng {
    /// Stream seeded directly, for use outside the per-pixel renderer.
    pub fn from_seed(seed: u64) -> Self {
        SamplerState::new(seed, u64::MAX, u64::MAX).rng()
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn uniform2(&mut self) -> (f64, f64) {
        (self.uniform(), self.uniform())
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
}
