//! Seeded sampling helpers shared by model synthesis and initialization.
//!
//! All randomness flows through a caller-provided ChaCha generator so
//! identical seeds reproduce identical models on every platform.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::flt;

/// Standard complex normal: (N(0,1) + i N(0,1)) / sqrt(2), unit variance.
pub fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
}

/// Real standard normal draw.
pub fn real_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform draw from the closed complex disk of the given radius.
pub fn uniform_disk(rng: &mut ChaCha8Rng, radius: f64) -> Complex64 {
    let r = radius * flt::sqrt(rng.gen::<f64>());
    let theta = 2.0 * core::f64::consts::PI * rng.gen::<f64>();
    Complex64::new(r * flt::cos(theta), r * flt::sin(theta))
}
