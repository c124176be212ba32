//! Named, splittable seeding.
//!
//! Every random stage draws from a [`ChaCha8Rng`] whose seed is derived from
//! the run seed and a stage label, so results do not depend on thread
//! scheduling or on which other stages ran.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StageRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream for a named stage.
    pub fn derive(&self, label: &str) -> SeedStream {
        SeedStream {
            seed: splitmix64(self.seed ^ fnv1a(label.as_bytes())),
        }
    }

    /// Child stream for an indexed replicate.
    pub fn derive_index(&self, index: u64) -> SeedStream {
        SeedStream {
            seed: splitmix64(self.seed.wrapping_add(splitmix64(index ^ 0xA076_1D64_78BD_642F))),
        }
    }

    pub fn rng(&self) -> StageRng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
