//! Counter-based fan-out of one master seed into independent RNG streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Named consumers of randomness. Each gets its own ChaCha stream so that
/// adding or removing one consumer never shifts another's draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u64)]
pub enum Stream {
    EnvReset = 1,
    VictimInit = 2,
    VictimAct = 3,
    VictimMinibatch = 4,
    AdversaryInit = 5,
    AdversaryAct = 6,
    AdversaryMinibatch = 7,
    TaoInit = 8,
    TaoSample = 9,
    TaoMinibatch = 10,
    OpponentInit = 11,
    OpponentMinibatch = 12,
    Counterfactual = 13,
    Detector = 14,
    MixCoin = 15,
    Evaluation = 16,
    Scripted = 17,
}

/// Master seed plus deterministic derivation of per-stream generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeder {
    pub master: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl Seeder {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    /// Generator for `(stream, index)`.
    pub fn rng(&self, stream: Stream, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.master));
        rng.set_stream(((stream as u64) << 40) ^ index);
        rng
    }

    /// A derived 64-bit seed, e.g. for environment resets.
    pub fn derive(&self, stream: Stream, index: u64) -> u64 {
        splitmix64(splitmix64(self.master ^ ((stream as u64) << 48)) ^ index)
    }

    /// A child seeder (for sweeps and per-seed runs).
    pub fn child(&self, index: u64) -> Seeder {
        Seeder::new(splitmix64(self.master.rotate_left(17) ^ splitmix64(index)))
    }
}
