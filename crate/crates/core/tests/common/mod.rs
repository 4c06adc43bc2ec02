//! Shared generators for the integration suites.

#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssmshrink_core::rand_util::{complex_normal, uniform_disk};
use ssmshrink_core::{CMat, Horizon, LqoSystem, Signal};

pub fn hz(l: usize) -> Horizon {
    Horizon::new(l).unwrap()
}

/// Random stable system with eigenvalue moduli at most `radius`.
pub fn random_system(
    seed: u64,
    n: usize,
    m: usize,
    p: usize,
    c: usize,
    radius: f64,
) -> LqoSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (n as f64).sqrt();
    let lambda = (0..n).map(|_| uniform_disk(&mut rng, radius)).collect();
    let b = CMat::from_fn(n, m, |_, _| complex_normal(&mut rng) * scale);
    let cm = CMat::from_fn(p, n, |_, _| complex_normal(&mut rng) * scale);
    let u = (0..p)
        .map(|_| CMat::from_fn(c, n, |_, _| complex_normal(&mut rng) * scale))
        .collect();
    LqoSystem::new(lambda, b, cm, u).unwrap()
}

pub fn random_real_signal(seed: u64, len: usize, width: usize, amp: f64) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Vec<f64>> = (0..len)
        .map(|_| {
            (0..width)
                .map(|_| amp * (2.0 * rng.gen::<f64>() - 1.0))
                .collect()
        })
        .collect();
    Signal::from_real_samples(&samples).unwrap()
}

pub fn random_complex_signal(seed: u64, len: usize, width: usize, amp: f64) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Vec<Complex64>> = (0..len)
        .map(|_| (0..width).map(|_| complex_normal(&mut rng) * amp).collect())
        .collect();
    Signal::from_samples(&samples).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
