//! The gramian-trace route to the h2_L norms must agree with literal
//! kernel-energy sums, and the six-term error expansion must equal the
//! energy of the kernel differences.

mod common;

use common::*;
use ssmshrink_core::lqo::{
    h2l_error_parts, h2l_error_sq, h2l_norm_parts, h2l_norm_sq, kernel_h1, kernel_h2,
};
use ssmshrink_core::{Horizon, LqoSystem};

/// Literal sum_t ||h1[t]||_F^2 over the truncated kernel.
fn kernel_energy_h1(sys: &LqoSystem, l: Horizon) -> f64 {
    kernel_h1(sys, l).values.iter().map(|m| m.norm_sqr()).sum()
}

/// Literal sum over t1, t2, j of ||H_j[t1,t2]||_F^2.
fn kernel_energy_h2(sys: &LqoSystem, l: Horizon) -> f64 {
    let k2 = kernel_h2(sys, l);
    let mut acc = 0.0;
    for t1 in 0..l.get() {
        for t2 in 0..l.get() {
            acc += k2.values[t1][t2].norm_sqr();
        }
    }
    acc
}

/// Energy of the kernel differences between two systems with matching
/// input and output dimensions.
fn kernel_error_energy(sys: &LqoSystem, rsys: &LqoSystem, l: Horizon) -> (f64, f64) {
    let a1 = kernel_h1(sys, l);
    let b1 = kernel_h1(rsys, l);
    let lin: f64 = a1
        .values
        .iter()
        .zip(&b1.values)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let a2 = kernel_h2(sys, l);
    let b2 = kernel_h2(rsys, l);
    let mut quad = 0.0;
    for t1 in 0..l.get() {
        for t2 in 0..l.get() {
            quad += (&a2.values[t1][t2] - &b2.values[t1][t2]).norm_sqr();
        }
    }
    (lin, quad)
}

#[test]
fn norm_parts_match_kernel_energies() {
    let dims = [(2, 1, 1, 1), (3, 2, 2, 1), (5, 2, 3, 2), (8, 3, 2, 1), (6, 3, 3, 2)];
    for (idx, &(n, m, p, c)) in dims.iter().enumerate() {
        for rep in 0..3 {
            let seed = 100 + (idx * 7 + rep) as u64;
            let sys = random_system(seed, n, m, p, c, 0.93);
            let l = hz(20 + 4 * rep);
            let (lin, quad) = h2l_norm_parts(&sys, l).unwrap();
            let lin_oracle = kernel_energy_h1(&sys, l);
            let quad_oracle = kernel_energy_h2(&sys, l);
            assert!(
                rel_diff(lin, lin_oracle) <= 1e-9,
                "linear part seed {seed}: {lin} vs {lin_oracle}"
            );
            assert!(
                rel_diff(quad, quad_oracle) <= 1e-9,
                "quadratic part seed {seed}: {quad} vs {quad_oracle}"
            );
            let total = h2l_norm_sq(&sys, l).unwrap();
            assert!(rel_diff(total, lin_oracle + quad_oracle) <= 1e-9);
        }
    }
}

#[test]
fn error_parts_match_kernel_difference_energies() {
    for seed in 0..10u64 {
        let sys = random_system(200 + seed, 6, 2, 2, 1, 0.93);
        let rsys = random_system(300 + seed, 3, 2, 2, 1, 0.9);
        let l = hz(18);
        let (lin, quad) = h2l_error_parts(&sys, &rsys, l).unwrap();
        let (lin_oracle, quad_oracle) = kernel_error_energy(&sys, &rsys, l);
        assert!(
            rel_diff(lin, lin_oracle) <= 1e-9,
            "seed {seed}: linear {lin} vs {lin_oracle}"
        );
        assert!(
            rel_diff(quad, quad_oracle) <= 1e-9,
            "seed {seed}: quadratic {quad} vs {quad_oracle}"
        );
        let total = h2l_error_sq(&sys, &rsys, l).unwrap();
        assert!(rel_diff(total, lin_oracle + quad_oracle) <= 1e-9);
    }
}

#[test]
fn error_is_symmetric_in_its_arguments() {
    // the h2_L distance between kernels does not care which side is
    // called "full", even though the trace expansion is asymmetric
    for seed in 0..5u64 {
        let a = random_system(400 + seed, 5, 2, 2, 1, 0.92);
        let b = random_system(500 + seed, 4, 2, 2, 1, 0.9);
        let l = hz(14);
        let ab = h2l_error_sq(&a, &b, l).unwrap();
        let ba = h2l_error_sq(&b, &a, l).unwrap();
        assert!(rel_diff(ab, ba) <= 1e-10, "seed {seed}: {ab} vs {ba}");
    }
}

#[test]
fn error_against_zero_system_recovers_the_norm() {
    use ssmshrink_core::LqoSystem as Sys;
    let sys = random_system(600, 5, 2, 2, 2, 0.92);
    let zero = Sys::zero(3, 2, 2, 2).unwrap();
    let l = hz(16);
    let err = h2l_error_sq(&sys, &zero, l).unwrap();
    let norm = h2l_norm_sq(&sys, l).unwrap();
    assert!(rel_diff(err, norm) <= 1e-10);
}

#[test]
fn norm_grows_with_horizon() {
    let sys = random_system(700, 5, 2, 2, 1, 0.93);
    let mut prev = 0.0;
    for l in [1, 2, 4, 8, 16, 32, 64] {
        let cur = h2l_norm_sq(&sys, hz(l)).unwrap();
        assert!(
            cur >= prev - 1e-12 * cur.abs(),
            "horizon {l}: {cur} < {prev}"
        );
        prev = cur;
    }
}
