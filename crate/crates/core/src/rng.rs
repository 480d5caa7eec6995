//! Counter-based random streams.
//!
//! Every random draw is addressed by `(seed, stream, counter)`: the stream is
//! a ChaCha8 stream id and the counter selects a fixed 256-bit block within
//! it. Results therefore do not depend on evaluation order or thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Words (u32) reserved per counter value.
const WORDS_PER_COUNTER: u128 = 8;

#[derive(Debug, Clone)]
pub struct CounterRng {
    base: ChaCha8Rng,
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { base: ChaCha8Rng::seed_from_u64(seed), seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Four independent 64-bit words for `(stream, counter)`.
    pub fn block(&self, stream: u64, counter: u64) -> [u64; 4] {
        let mut rng = self.base.clone();
        rng.set_stream(stream);
        rng.set_word_pos(counter as u128 * WORDS_PER_COUNTER);
        [rng.next_u64(), rng.next_u64(), rng.next_u64(), rng.next_u64()]
    }

    /// Four uniforms in the open interval `(0, 1)`.
    pub fn uniforms(&self, stream: u64, counter: u64) -> [f64; 4] {
        self.block(stream, counter).map(open_unit)
    }

    /// Standard normal draw (Box–Muller on the first two words).
    pub fn normal(&self, stream: u64, counter: u64) -> f64 {
        let u = self.uniforms(stream, counter);
        box_muller(u[0], u[1])
    }
}

/// Maps 64 random bits to `(0, 1)` with 52-bit resolution.
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

pub fn box_muller(u1: f64, u2: f64) -> f64 {
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Derives an independent seed for sub-experiment `index` (replica, sample
/// batch, ensemble size) from a base seed with the SplitMix64 finalizer.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed
        ^ tag.wrapping_mul(0xD1B5_4A32_D192_ED03)
        ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Source of the Gaussian increments `ξ_{i,k}` of a particle simulation.
pub trait NoiseSource: Sync {
    /// Standard normal driving particle `particle` over step `step`.
    fn step_normal(&self, particle: usize, step: usize) -> f64;
}

/// The default source: particle `i` reads stream `i`, step `k` reads counter
/// `k + 1` (counter 0 is reserved for the initial position draw).
#[derive(Debug, Clone)]
pub struct ParticleNoise {
    rng: CounterRng,
}

impl ParticleNoise {
    pub fn new(seed: u64) -> Self {
        Self { rng: CounterRng::new(seed) }
    }

    pub fn rng(&self) -> &CounterRng {
        &self.rng
    }

    /// Uniforms for the initial draw of `particle`.
    pub fn initial_uniforms(&self, particle: usize) -> [f64; 4] {
        self.rng.uniforms(particle as u64, 0)
    }
}

impl NoiseSource for ParticleNoise {
    fn step_normal(&self, particle: usize, step: usize) -> f64 {
        self.rng.normal(particle as u64, step as u64 + 1)
    }
}

/// Mirror image of another source: every increment negated.
pub struct Negated<'a, N: NoiseSource>(pub &'a N);

impl<N: NoiseSource> NoiseSource for Negated<'_, N> {
    fn step_normal(&self, particle: usize, step: usize) -> f64 {
        -self.0.step_normal(particle, step)
    }
}

/// Relabelled source: particle `i` receives the stream of particle `perm[i]`.
pub struct Permuted<'a, N: NoiseSource> {
    pub inner: &'a N,
    pub perm: &'a [usize],
}

impl<N: NoiseSource> NoiseSource for Permuted<'_, N> {
    fn step_normal(&self, particle: usize, step: usize) -> f64 {
        self.inner.step_normal(self.perm[particle], step)
    }
}
