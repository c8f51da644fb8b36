//! Hierarchical, seeded randomness.
//!
//! A [`RngStream`] is an address `(seed, path)`. Child streams are derived by
//! appending to the path, and the generator for an address is obtained by
//! hashing the full address into a ChaCha seed. Two streams with the same
//! address always produce the same draws, regardless of which thread asks or
//! in which order, which is what makes per-point parallel evaluation
//! reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// The concrete generator handed out by [`RngStream::rng`].
pub type StreamRng = ChaCha8Rng;

/// Well-known path components used by the calibration and evaluation passes.
pub mod phase {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const CALIBRATION: u64 = 3;
    pub const TEST: u64 = 4;
    pub const VOLUME: u64 = 5;
    pub const WSC: u64 = 6;
    pub const CLUSTERING: u64 = 7;
    pub const DENSITY_FEATURES: u64 = 8;
    pub const MODEL: u64 = 9;
    pub const PROBE: u64 = 10;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    seed: u64,
    path: Vec<u64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, path: Vec::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Stream addressed by this path extended with `index`.
    pub fn child(&self, index: u64) -> Self {
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(index);
        Self { seed: self.seed, path }
    }

    /// Stream addressed by this path extended with every element of `parts`.
    pub fn derive(&self, parts: &[u64]) -> Self {
        let mut path = self.path.clone();
        path.extend_from_slice(parts);
        Self { seed: self.seed, path }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut hasher = Sha256::new();
        hasher.update(b"mocp-stream");
        hasher.update(self.seed.to_le_bytes());
        hasher.update((self.path.len() as u64).to_le_bytes());
        for part in &self.path {
            hasher.update(part.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest[..32]);
        ChaCha8Rng::from_seed(key)
    }
}
