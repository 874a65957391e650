//! A small, fully specified pseudo-random generator.
//!
//! The algorithm is pinned so that datasets reproduce bit-for-bit across
//! implementations in other languages:
//!
//! * state: four 64-bit words, seeded by running SplitMix64 from `seed`
//!   (`z += 0x9E3779B97F4A7C15; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//!   z = (z ^ (z >> 27)) * 0x94D049BB133111EB; out = z ^ (z >> 31)`);
//! * step: xoshiro256** (`out = rotl(s1 * 5, 7) * 9`, then the standard
//!   shift/xor/rotate state update with `t = s1 << 17` and `rotl(s3, 45)`);
//! * uniforms: `(next_u64() >> 11) · 2⁻⁵³ ∈ [0, 1)`;
//! * normals: Box–Muller on a pair `(u₁, u₂)` of uniforms with
//!   `r = sqrt(−2 ln(1 − u₁))`, returning `r·cos(2πu₂)` and then, on the
//!   following call, the cached `r·sin(2πu₂)`.
//!
//! The bit stream is `rand_xoshiro`'s `Xoshiro256StarStar::seed_from_u64`,
//! which follows the first two items exactly.

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

#[derive(Debug, Clone)]
pub struct Rng {
    bits: Xoshiro256StarStar,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            bits: Xoshiro256StarStar::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.bits.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal sample.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }
}
