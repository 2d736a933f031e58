//! Counter-based random streams.
//!
//! Every random draw in a run is addressed by a [`StreamKey`]: the global seed,
//! a purpose tag, and up to three counters (iteration, rollout, time step).
//! The key is hashed into a ChaCha8 seed, so a stream can be reconstructed
//! anywhere without replaying earlier draws. This is what keeps rollouts
//! reproducible regardless of how they are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Noise = 1,
    InitialCondition = 2,
    PolicyInit = 3,
    ActuatorInit = 4,
    Evaluation = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub purpose: Purpose,
    pub iteration: u64,
    pub rollout: u64,
    pub step: u64,
}

impl StreamKey {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        Self { seed, purpose, iteration: 0, rollout: 0, step: 0 }
    }

    pub fn iteration(mut self, iteration: u64) -> Self {
        self.iteration = iteration;
        self
    }

    pub fn rollout(mut self, rollout: u64) -> Self {
        self.rollout = rollout;
        self
    }

    pub fn step(mut self, step: u64) -> Self {
        self.step = step;
        self
    }

    /// Build the generator for this key. Cheap enough to call once per time step.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = splitmix64(self.seed ^ 0x5354_534f_5f53_4545);
        for word in [self.purpose as u64, self.iteration, self.rollout, self.step] {
            state = splitmix64(state ^ splitmix64(word));
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
