//! Deterministic random streams.
//!
//! Every random draw in the crate goes through an [`RngStream`], a key triple
//! `(global_seed, experiment_id, trial_id)`. The key selects a ChaCha8 seed
//! (from the first two components) and a ChaCha stream (the trial), so the
//! draws for a given key never depend on which worker ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub global_seed: u64,
    pub experiment_id: u64,
    pub trial_id: u64,
}

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn seed_bytes(a: u64, b: u64) -> [u8; 32] {
    let mut seed = [0u8; 32];
    let mut state = mix64(a) ^ mix64(b.wrapping_add(0x5851_f42d_4c95_7f2d));
    for chunk in seed.chunks_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    seed
}

impl RngStream {
    pub fn new(global_seed: u64, experiment_id: u64) -> Self {
        Self {
            global_seed,
            experiment_id,
            trial_id: 0,
        }
    }

    pub fn with_trial(self, trial_id: u64) -> Self {
        Self { trial_id, ..self }
    }

    /// A child stream keyed by this stream's full key plus `index`.
    ///
    /// Children of distinct parents or distinct indices never share a key.
    pub fn fork(&self, index: u64) -> Self {
        Self {
            global_seed: self.global_seed,
            experiment_id: mix64(self.experiment_id ^ mix64(self.trial_id.wrapping_add(1))),
            trial_id: index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(seed_bytes(self.global_seed, self.experiment_id));
        rng.set_stream(self.trial_id);
        rng
    }
}
