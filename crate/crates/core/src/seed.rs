//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 generator whose 32-byte key is
//! `SHA-256("ragan/stream" ‖ seed as u64 little-endian ‖ name as UTF-8)`.
//! Streams with different names are independent; the derivation only uses
//! portable primitives, so runs reproduce across machines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Named streams used by a training run.
pub mod names {
    pub const INIT: &str = "init";
    pub const MESSAGES: &str = "messages";
    pub const CHANNEL: &str = "channel";
    pub const LATENT: &str = "latent";
    pub const RL_EXPLORE: &str = "rl-explore";
    pub const EVAL: &str = "eval";
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, name: &str) -> StreamRng {
        let mut hasher = Sha256::new();
        hasher.update(b"ragan/stream");
        hasher.update(self.seed.to_le_bytes());
        hasher.update(name.as_bytes());
        ChaCha8Rng::from_seed(hasher.finalize().into())
    }

    /// Stream for evaluation grid point `index`.
    pub fn eval_point(&self, index: usize) -> StreamRng {
        self.stream(&format!("{}/{index}", names::EVAL))
    }
}

/// Derives the run-scoped streams from a master seed.
pub fn seed_everything(seed: u64) -> Streams {
    Streams::new(seed)
}
