//! Counter-based normal variates.
//!
//! Every path owns a ChaCha8 generator whose 256-bit key is
//! `seed (8 bytes LE) || channel (8 bytes LE) || "mmlab-rng-key-v1"` and whose
//! stream id is the path index. Each variate consumes exactly one 64-bit word,
//! so draw `j` of a path lives at word position `2 j`; for Brownian increments
//! `j = step * dim + coordinate`. Normals come from the inverse normal CDF of
//! the open-interval uniform `((w >> 11) + 1/2) / 2^53`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

const KEY_SUFFIX: &[u8; 16] = b"mmlab-rng-key-v1";

/// Provenance of one simulated path: the ensemble seed and the path index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedTag {
    pub seed: u64,
    pub path: u64,
}

impl SeedTag {
    pub fn new(seed: u64, path: u64) -> Self {
        SeedTag { seed, path }
    }
}

/// Independent families of variates drawn for the same path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Brownian increments of the driving noise.
    Increments = 0,
    /// Interior samples used by the time-integral quadrature.
    Quadrature = 1,
    /// Fixed node sets (mollification fallback, probe grids).
    Nodes = 2,
}

#[derive(Clone)]
pub struct VariateStream {
    rng: ChaCha8Rng,
    normal: Normal,
}

impl VariateStream {
    pub fn new(tag: SeedTag, channel: Channel) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&tag.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(channel as u64).to_le_bytes());
        key[16..].copy_from_slice(KEY_SUFFIX);
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(tag.path);
        VariateStream { rng, normal: Normal::new(0.0, 1.0).expect("standard normal") }
    }

    /// Positions the stream so that the next variate is draw number `index`.
    pub fn seek(&mut self, index: u64) {
        self.rng.set_word_pos(2 * index as u128);
    }

    /// Uniform variate in the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        let u = self.uniform();
        self.normal.inverse_cdf(u)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for z in out {
            *z = self.normal();
        }
    }
}
