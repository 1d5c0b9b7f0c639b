//! Counter-based random streams: one ChaCha8 stream per (path, purpose), so
//! a path's increments do not depend on how many paths run or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    /// Gaussian increments of the state path.
    Increments = 0,
    /// Competition indicators and randomisation devices.
    Draws = 1,
    /// Uniforms for the maximum of the Brownian bridge inside each step.
    Bridge = 2,
}

#[derive(Debug, Clone)]
pub struct SeedTree {
    root: ChaCha8Rng,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        SeedTree {
            root: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn stream(&self, path: u64, kind: StreamKind) -> ChaCha8Rng {
        let mut rng = self.root.clone();
        rng.set_stream((path << 2) | kind as u64);
        rng.set_word_pos(0);
        rng
    }

    /// `(θ₁-uniform, θ₂-uniform, U₁, U₂)` for a path.
    pub fn draws(&self, path: u64) -> [f64; 4] {
        let mut rng = self.stream(path, StreamKind::Draws);
        [rng.random(), rng.random(), rng.random(), rng.random()]
    }
}
