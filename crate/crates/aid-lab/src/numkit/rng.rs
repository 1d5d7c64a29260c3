//! Seeded random number generation.
//!
//! The generator is counter-based (ChaCha with 8 rounds), so identical seeds
//! and identical call sequences yield identical streams across runs and
//! platforms. Uniform doubles are derived from the top 53 bits of each
//! `u64` draw; integer bounds use unbiased rejection sampling, so every
//! draw path is explicit and stable.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Mix a master seed and a stream tag into an independent child seed.
///
/// SplitMix64 finalizer: golden-gamma increment `0x9E3779B97F4A7C15`,
/// multipliers `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic random source. Single-owner: one generator per run.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    draws: u64,
    state: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            draws: 0,
            state: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of draw calls made so far. Eval-mode code paths are required
    /// to leave this untouched.
    pub fn draw_count(&self) -> u64 {
        self.draws
    }

    pub fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.state.next_u64()
    }

    /// Uniform on `[0, 1)` with 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Bernoulli draw: `true` with probability `p`. Exact at `p = 0` and
    /// `p = 1`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.draws += 1;
        StandardNormal.sample(&mut self.state)
    }

    /// Uniform index in `[0, bound)`, unbiased via rejection.
    pub fn index(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "Rng::index: bound must be positive");
        let b = bound as u64;
        // Accept v in [0, zone]; zone + 1 is the largest multiple of b <= 2^64.
        let zone = u64::MAX - (u64::MAX - b + 1) % b;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return (v % b) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.index(i + 1);
            xs.swap(i, j);
        }
    }

    /// Uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}
