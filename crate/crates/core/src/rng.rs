//! Reproducible random streams.
//!
//! Every random object is drawn from a ChaCha20 stream addressed by
//! `(seed, domain, index)`. ChaCha is counter based, so distinct
//! `(domain, index)` pairs give independent streams that any worker can
//! reconstruct without coordination.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Independent families of streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum Domain {
    Disorder = 1,
    Resample = 2,
    Spins = 3,
    Coins = 4,
}

/// Address of one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub stream: u64,
}

impl SeedRecord {
    pub fn new(seed: u64, domain: Domain, index: u64) -> Self {
        assert!(index < (1 << 56), "stream index too large");
        SeedRecord {
            seed,
            stream: ((domain as u64) << 56) | index,
        }
    }

    /// Index within the domain.
    pub fn index(&self) -> u64 {
        self.stream & ((1 << 56) - 1)
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha20Rng {
    SeedRecord::new(seed, domain, index).rng()
}

pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
