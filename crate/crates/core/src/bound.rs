//! LayerNorm, its Lipschitz interval, layer gains, and output-error
//! bounds for deep LQO stacks.
//!
//! The normalization of a real vector z of width m is
//!
//! ```text
//!   LN(z) = gamma1 .* (z - mu 1) / sigma + gamma2,
//!   mu = mean(z),  sigma = sqrt(||z - mu 1||^2 / m + eps)
//! ```
//!
//! Its Lipschitz constant lies in the provable interval
//! [|gamma1|_inf/sqrt(eps) * sqrt(1 - 1/m), |gamma1|_inf/sqrt(eps)].
//!
//! The output error of a reduced stack at horizon L obeys
//!
//! ```text
//!   e_xi <= b sqrt(1+b^2) * sum_i Gtilde_i ||S_i - Shat_i||_{h2_L}
//! ```
//!
//! with accumulated gains Gtilde_i = omega^(xi-i+1) prod_{j>i} gtilde_j,
//! gtilde_j = 1 + sqrt(L)(||h1|| + 2 b ||h2||), whenever omega is an
//! upper bound on every layer's LN Lipschitz constant and b dominates
//! every layer input norm of both stacks.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::dssm::{forward, DeepSsm, ForwardTrace};
use crate::error::{Error, Result};
use crate::flt;
use crate::lqo::{h2l_error_sq, h2l_norm_parts, LqoSystem};
use crate::signal::{Horizon, Signal};

/// Learnable LayerNorm parameters: scale gamma1, bias gamma2, epsilon.
#[derive(Debug, Clone)]
pub struct LayerNormParams {
    gamma1: Vec<f64>,
    gamma2: Vec<f64>,
    eps: f64,
}

impl LayerNormParams {
    pub fn new(gamma1: Vec<f64>, gamma2: Vec<f64>, eps: f64) -> Result<Self> {
        if gamma1.is_empty() || gamma1.len() != gamma2.len() {
            return Err(Error::Shape(alloc::format!(
                "gamma1 and gamma2 must be equal nonzero length, got {} and {}",
                gamma1.len(),
                gamma2.len()
            )));
        }
        if !(eps > 0.0) || !flt::is_finite(eps) {
            return Err(Error::Domain(alloc::format!(
                "eps must be a positive finite real, got {eps}"
            )));
        }
        if gamma1.iter().chain(gamma2.iter()).any(|v| !flt::is_finite(*v)) {
            return Err(Error::Domain("gamma1/gamma2 must be finite".into()));
        }
        Ok(LayerNormParams { gamma1, gamma2, eps })
    }

    pub fn width(&self) -> usize {
        self.gamma1.len()
    }

    pub fn gamma1(&self) -> &[f64] {
        &self.gamma1
    }

    pub fn gamma2(&self) -> &[f64] {
        &self.gamma2
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
}

/// Apply LayerNorm to one sample. Panics if z and the parameters
/// disagree in width (a caller bug, not a data condition).
pub fn ln_apply(z: &[f64], p: &LayerNormParams) -> Vec<f64> {
    let m = p.width();
    assert_eq!(z.len(), m, "LayerNorm width mismatch");
    let mu = z.iter().sum::<f64>() / m as f64;
    let var = z.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m as f64;
    let sigma = flt::sqrt(var + p.eps);
    (0..m)
        .map(|i| p.gamma1[i] * (z[i] - mu) / sigma + p.gamma2[i])
        .collect()
}

/// Jacobian of ln_apply at z, row-major m x m:
/// J = D (I/sigma - c c^T / (sigma^3 m)) P with c = Pz centered,
/// D = diag(gamma1), P = I - (1/m) 1 1^T.
pub fn ln_jacobian(z: &[f64], p: &LayerNormParams) -> Vec<f64> {
    let m = p.width();
    assert_eq!(z.len(), m, "LayerNorm width mismatch");
    let mf = m as f64;
    let mu = z.iter().sum::<f64>() / mf;
    let c: Vec<f64> = z.iter().map(|v| v - mu).collect();
    let var = c.iter().map(|v| v * v).sum::<f64>() / mf;
    let sigma = flt::sqrt(var + p.eps);
    let s3m = sigma * sigma * sigma * mf;
    let mut j = vec![0.0; m * m];
    for i in 0..m {
        for k in 0..m {
            let proj = if i == k { 1.0 - 1.0 / mf } else { -1.0 / mf };
            j[i * m + k] = p.gamma1[i] * (proj / sigma - c[i] * c[k] / s3m);
        }
    }
    j
}

/// Largest eigenvalue of a symmetric real matrix by cyclic Jacobi
/// rotations. a is row-major dim x dim and is consumed by value.
fn sym_eig_max(mut a: Vec<f64>, dim: usize) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let sign = |x: f64| if x >= 0.0 { 1.0 } else { -1.0 };
    for _sweep in 0..60 {
        let mut off = 0.0;
        let mut diag_scale = 0.0_f64;
        for i in 0..dim {
            diag_scale = flt::max(diag_scale, flt::abs(a[i * dim + i]));
            for j in (i + 1)..dim {
                off += a[i * dim + j] * a[i * dim + j];
            }
        }
        if flt::sqrt(off) <= 1e-15 * flt::max(diag_scale, 1e-300) {
            break;
        }
        for p in 0..dim.saturating_sub(1) {
            for q in (p + 1)..dim {
                let apq = a[p * dim + q];
                if flt::abs(apq) <= 1e-300 {
                    continue;
                }
                let theta = (a[q * dim + q] - a[p * dim + p]) / (2.0 * apq);
                let t = sign(theta) / (flt::abs(theta) + flt::sqrt(theta * theta + 1.0));
                let c = 1.0 / flt::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..dim {
                    let akp = a[k * dim + p];
                    let akq = a[k * dim + q];
                    a[k * dim + p] = c * akp - s * akq;
                    a[k * dim + q] = s * akp + c * akq;
                }
                for k in 0..dim {
                    let apk = a[p * dim + k];
                    let aqk = a[q * dim + k];
                    a[p * dim + k] = c * apk - s * aqk;
                    a[q * dim + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut best = a[0];
    for i in 1..dim {
        best = flt::max(best, a[i * dim + i]);
    }
    best
}

/// Operator 2-norm of a real rows x cols matrix (row-major), exact up
/// to Jacobi convergence: sqrt of the top eigenvalue of A^T A.
pub fn spectral_norm(a: &[f64], rows: usize, cols: usize) -> f64 {
    assert_eq!(a.len(), rows * cols, "matrix data length mismatch");
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let mut gram = vec![0.0; cols * cols];
    for i in 0..cols {
        for j in i..cols {
            let mut acc = 0.0;
            for k in 0..rows {
                acc += a[k * cols + i] * a[k * cols + j];
            }
            gram[i * cols + j] = acc;
            gram[j * cols + i] = acc;
        }
    }
    flt::sqrt(flt::max(sym_eig_max(gram, cols), 0.0))
}

/// Provable Lipschitz interval of LayerNorm on width-m inputs:
/// [|gamma1|_inf/sqrt(eps) * sqrt(1 - 1/m), |gamma1|_inf/sqrt(eps)].
pub fn ln_lipschitz_interval(p: &LayerNormParams, m: usize) -> Result<(f64, f64)> {
    if m < 2 {
        return Err(Error::Domain(alloc::format!(
            "Lipschitz interval needs width at least 2, got {m}"
        )));
    }
    if m != p.width() {
        return Err(Error::Shape(alloc::format!(
            "width {m} does not match parameters of width {}",
            p.width()
        )));
    }
    let g_inf = p
        .gamma1
        .iter()
        .fold(0.0_f64, |acc, v| flt::max(acc, flt::abs(*v)));
    let hi = g_inf / flt::sqrt(p.eps);
    let lo = hi * flt::sqrt(1.0 - 1.0 / m as f64);
    Ok((lo, hi))
}

/// Input-uniform layer gain gtilde = 1 + sqrt(L)(||h1|| + 2 b ||h2||),
/// valid whenever b dominates the layer's input norms.
pub fn layer_gain_gtilde(sys: &LqoSystem, l: Horizon, b: f64) -> Result<f64> {
    if !(b >= 0.0) {
        return Err(Error::Domain(alloc::format!(
            "gain constant b must be nonnegative, got {b}"
        )));
    }
    let (lin, quad) = h2l_norm_parts(sys, l)?;
    Ok(1.0 + flt::sqrt(l.get() as f64) * (flt::sqrt(lin) + 2.0 * b * flt::sqrt(quad)))
}

/// Input-dependent layer gain g = 1 + sqrt(L)(||h1|| + ||h2||(bu + buhat))
/// with bu, buhat the measured l2_L norms of the layer's inputs.
pub fn layer_gain_g(sys: &LqoSystem, l: Horizon, u_norm: f64, uhat_norm: f64) -> Result<f64> {
    if !(u_norm >= 0.0) || !(uhat_norm >= 0.0) {
        return Err(Error::Domain("signal norms must be nonnegative".into()));
    }
    let (lin, quad) = h2l_norm_parts(sys, l)?;
    Ok(1.0 + flt::sqrt(l.get() as f64) * (flt::sqrt(lin) + flt::sqrt(quad) * (u_norm + uhat_norm)))
}

/// Accumulate G_i = omega^(xi-i+1) * prod_{j>i} gain_j (1-based layers).
pub fn accumulated_gains(gains: &[f64], omega: f64) -> Vec<f64> {
    let xi = gains.len();
    let mut out = vec![0.0; xi];
    // walk from the last layer down, extending the product suffix
    let mut suffix = 1.0;
    let mut omega_pow = omega;
    for i in (0..xi).rev() {
        out[i] = omega_pow * suffix;
        suffix *= gains[i];
        omega_pow *= omega;
    }
    out
}

fn check_compatible(full: &DeepSsm, reduced: &DeepSsm) -> Result<()> {
    if full.depth() != reduced.depth() {
        return Err(Error::Shape(alloc::format!(
            "stacks differ in depth: {} vs {}",
            full.depth(),
            reduced.depth()
        )));
    }
    if full.width() != reduced.width() {
        return Err(Error::Shape(alloc::format!(
            "stacks differ in width: {} vs {}",
            full.width(),
            reduced.width()
        )));
    }
    Ok(())
}

/// Per-layer h2_L errors weighted by accumulated gains:
/// bound = b sqrt(1+b^2) sum_i Gtilde_i ||S_i - Shat_i||_{h2_L}.
pub fn corollary_bound(
    full: &DeepSsm,
    reduced: &DeepSsm,
    l: Horizon,
    b: f64,
    omega: f64,
) -> Result<f64> {
    check_compatible(full, reduced)?;
    let gtildes = full
        .layers()
        .iter()
        .map(|layer| layer_gain_gtilde(layer.system(), l, b))
        .collect::<Result<Vec<f64>>>()?;
    let big = accumulated_gains(&gtildes, omega);
    let mut acc = 0.0;
    for (i, g) in big.iter().enumerate() {
        let err = flt::sqrt(h2l_error_sq(
            full.layers()[i].system(),
            reduced.layers()[i].system(),
            l,
        )?);
        acc += g * err;
    }
    Ok(b * flt::sqrt(1.0 + b * b) * acc)
}

/// Largest LN Lipschitz upper bound across the stack's layers, the
/// sound default choice for omega.
pub fn default_omega(model: &DeepSsm) -> Result<f64> {
    let m = model.width();
    let mut omega = 0.0_f64;
    for layer in model.layers() {
        let (_, hi) = ln_lipschitz_interval(layer.ln(), m)?;
        omega = flt::max(omega, hi);
    }
    Ok(omega)
}

/// Input-dependent bound sum_i G_i ||S_i - Shat_i|| buhat_i sqrt(1+buhat_i^2)
/// using measured per-layer input norms and the stack's maximum LN
/// Lipschitz upper bound as omega. Informational: tight only when the
/// full and reduced input norms coincide layer by layer.
pub fn theorem_bound(full: &DeepSsm, reduced: &DeepSsm, s_in: &Signal, l: Horizon) -> Result<f64> {
    check_compatible(full, reduced)?;
    let trace = forward(full, s_in, l)?;
    let rtrace = forward(reduced, s_in, l)?;
    let omega = default_omega(full)?;
    let xi = full.depth();
    let mut gains = Vec::with_capacity(xi);
    for (i, layer) in full.layers().iter().enumerate() {
        gains.push(layer_gain_g(
            layer.system(),
            l,
            trace.u_signals[i].norm_l2(),
            rtrace.u_signals[i].norm_l2(),
        )?);
    }
    let big = accumulated_gains(&gains, omega);
    let mut acc = 0.0;
    for i in 0..xi {
        let err = flt::sqrt(h2l_error_sq(
            full.layers()[i].system(),
            reduced.layers()[i].system(),
            l,
        )?);
        let bhat = rtrace.u_signals[i].norm_l2();
        acc += big[i] * err * bhat * flt::sqrt(1.0 + bhat * bhat);
    }
    Ok(acc)
}

/// e_xi: time-max Euclidean distance between the stacks' outputs.
pub fn measured_output_error(
    full: &DeepSsm,
    reduced: &DeepSsm,
    s_in: &Signal,
    l: Horizon,
) -> Result<f64> {
    check_compatible(full, reduced)?;
    let a = forward(full, s_in, l)?;
    let b = forward(reduced, s_in, l)?;
    Ok(a.s_out.sub(&b.s_out)?.norm_linf())
}

/// Evaluate both sides of the Kronecker-difference inequality
/// ||u(x)u - uhat(x)uhat||_{l2_L} <= ||u - uhat||_{l2_L}(||u|| + ||uhat||)
/// over the first L samples. Returns (lhs, rhs).
pub fn kron_inequality_check(u: &Signal, uhat: &Signal, l: Horizon) -> Result<(f64, f64)> {
    if u.width() != uhat.width() {
        return Err(Error::Shape(alloc::format!(
            "signal widths differ: {} vs {}",
            u.width(),
            uhat.width()
        )));
    }
    if u.len() < l.get() || uhat.len() < l.get() {
        return Err(Error::Shape(alloc::format!(
            "signals must have at least {} samples",
            l.get()
        )));
    }
    let ut = u.truncate(l)?;
    let vt = uhat.truncate(l)?;
    let m = ut.width();
    let mut lhs_sq = 0.0;
    for k in 0..l.get() {
        let a = ut.sample(k);
        let b = vt.sample(k);
        for i in 0..m {
            for j in 0..m {
                let d: Complex64 = a[i] * a[j] - b[i] * b[j];
                lhs_sq += d.norm_sqr();
            }
        }
    }
    let diff = ut.sub(&vt)?.norm_l2();
    let rhs = diff * (ut.norm_l2() + vt.norm_l2());
    Ok((flt::sqrt(lhs_sq), rhs))
}

/// One row of the bound report, for layer i (0-based in storage).
#[derive(Debug, Clone)]
pub struct PerLayerBound {
    /// ||S_i - Shat_i||_{h2_L}.
    pub h2l_error: f64,
    /// Accumulated downstream gain Gtilde_i.
    pub gain_accumulated: f64,
    /// This layer's own gain gtilde_i.
    pub gain_layer: f64,
    /// Measured l2_L norm of the full stack's layer input.
    pub u_norm: f64,
    /// Measured l2_L norm of the reduced stack's layer input.
    pub uhat_norm: f64,
}

/// Everything cmd-level bound evaluation reports.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub per_layer: Vec<PerLayerBound>,
    /// LN Lipschitz constant used (sound upper bound unless overridden).
    pub omega: f64,
    /// Input-norm constant used (measured max unless overridden).
    pub b: f64,
    pub bound_value: f64,
    pub measured_error: f64,
}

/// Full bound evaluation: simulate both stacks, choose b as the largest
/// measured layer-input norm and omega as the largest LN Lipschitz upper
/// bound (unless overridden), and assemble the per-layer table.
pub fn evaluate_bound(
    full: &DeepSsm,
    reduced: &DeepSsm,
    s_in: &Signal,
    l: Horizon,
    b_override: Option<f64>,
    omega_override: Option<f64>,
) -> Result<BoundReport> {
    check_compatible(full, reduced)?;
    let trace = forward(full, s_in, l)?;
    let rtrace = forward(reduced, s_in, l)?;
    let measured_b = measured_input_bound(&trace, &rtrace);
    let b = match b_override {
        Some(v) if v >= 0.0 => v,
        Some(v) => {
            return Err(Error::Domain(alloc::format!(
                "b must be nonnegative, got {v}"
            )))
        }
        None => measured_b,
    };
    let omega = match omega_override {
        Some(v) if v >= 0.0 => v,
        Some(v) => {
            return Err(Error::Domain(alloc::format!(
                "omega must be nonnegative, got {v}"
            )))
        }
        None => default_omega(full)?,
    };
    let xi = full.depth();
    let mut gtildes = Vec::with_capacity(xi);
    let mut errs = Vec::with_capacity(xi);
    for i in 0..xi {
        gtildes.push(layer_gain_gtilde(full.layers()[i].system(), l, b)?);
        errs.push(flt::sqrt(h2l_error_sq(
            full.layers()[i].system(),
            reduced.layers()[i].system(),
            l,
        )?));
    }
    let big = accumulated_gains(&gtildes, omega);
    let mut acc = 0.0;
    let mut per_layer = Vec::with_capacity(xi);
    for i in 0..xi {
        acc += big[i] * errs[i];
        per_layer.push(PerLayerBound {
            h2l_error: errs[i],
            gain_accumulated: big[i],
            gain_layer: gtildes[i],
            u_norm: trace.u_signals[i].norm_l2(),
            uhat_norm: rtrace.u_signals[i].norm_l2(),
        });
    }
    let bound_value = b * flt::sqrt(1.0 + b * b) * acc;
    let measured_error = trace.s_out.sub(&rtrace.s_out)?.norm_linf();
    Ok(BoundReport {
        per_layer,
        omega,
        b,
        bound_value,
        measured_error,
    })
}

/// Largest l2_L input norm across both stacks' layers.
pub fn measured_input_bound(trace: &ForwardTrace, rtrace: &ForwardTrace) -> f64 {
    let mut b = 0.0_f64;
    for s in trace.u_signals.iter().chain(rtrace.u_signals.iter()) {
        b = flt::max(b, s.norm_l2());
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dssm::{build_reduced_dssm, synth_random_dssm};

    fn hz(l: usize) -> Horizon {
        Horizon::new(l).unwrap()
    }

    fn params(gamma1: Vec<f64>, eps: f64) -> LayerNormParams {
        let m = gamma1.len();
        LayerNormParams::new(gamma1, vec![0.0; m], eps).unwrap()
    }

    #[test]
    fn constant_sample_maps_to_bias() {
        let p = LayerNormParams::new(vec![2.0, 3.0], vec![0.5, -0.5], 1e-3).unwrap();
        let out = ln_apply(&[7.0, 7.0], &p);
        assert_eq!(out, vec![0.5, -0.5]);
    }

    #[test]
    fn zero_scale_maps_to_bias() {
        let p = LayerNormParams::new(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 3.0], 1.0).unwrap();
        let out = ln_apply(&[0.3, -9.0, 4.5], &p);
        assert_eq!(out, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn hand_evaluated_two_point_sample() {
        // z = (1,-1), gamma1 = 1, eps = 1: sigma = sqrt(1+1), out = z/sqrt(2)
        let p = params(vec![1.0, 1.0], 1.0);
        let out = ln_apply(&[1.0, -1.0], &p);
        let inv = 1.0 / 2.0_f64.sqrt();
        assert!((out[0] - inv).abs() < 1e-15);
        assert!((out[1] + inv).abs() < 1e-15);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = LayerNormParams::new(vec![1.3, -0.7, 0.4], vec![0.1, 0.2, 0.3], 0.05).unwrap();
        let z = [0.4, -1.1, 0.6];
        let jac = ln_jacobian(&z, &p);
        let h = 1e-6;
        for k in 0..3 {
            let mut zp = z;
            let mut zm = z;
            zp[k] += h;
            zm[k] -= h;
            let fp = ln_apply(&zp, &p);
            let fm = ln_apply(&zm, &p);
            for i in 0..3 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!(
                    (jac[i * 3 + k] - fd).abs() < 1e-8,
                    "J[{i},{k}] = {} vs fd {fd}",
                    jac[i * 3 + k]
                );
            }
        }
    }

    #[test]
    fn lipschitz_interval_hand_case() {
        // gamma1 = (1,1), eps = 1, m = 2 -> (sqrt(0.5), 1)
        let p = params(vec![1.0, 1.0], 1.0);
        let (lo, hi) = ln_lipschitz_interval(&p, 2).unwrap();
        assert!((lo - 0.5_f64.sqrt()).abs() < 1e-15);
        assert!((hi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_interval_zero_scale() {
        let p = params(vec![0.0, 0.0, 0.0], 0.3);
        let (lo, hi) = ln_lipschitz_interval(&p, 3).unwrap();
        assert_eq!((lo, hi), (0.0, 0.0));
    }

    #[test]
    fn lipschitz_interval_homogeneous_in_gamma1() {
        let p1 = params(vec![1.0, -0.5], 0.7);
        let p2 = params(vec![-3.0, 1.5], 0.7);
        let (lo1, hi1) = ln_lipschitz_interval(&p1, 2).unwrap();
        let (lo2, hi2) = ln_lipschitz_interval(&p2, 2).unwrap();
        assert!((lo2 - 3.0 * lo1).abs() < 1e-12);
        assert!((hi2 - 3.0 * hi1).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_interval_rejects_width_one() {
        let p = params(vec![1.0], 1.0);
        assert!(matches!(ln_lipschitz_interval(&p, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn spectral_norm_of_diag_and_rotation() {
        // diag(3, -5): norm 5
        let a = [3.0, 0.0, 0.0, -5.0];
        assert!((spectral_norm(&a, 2, 2) - 5.0).abs() < 1e-12);
        // rank-1: [1 1; 1 1] has norm 2
        let b = [1.0, 1.0, 1.0, 1.0];
        assert!((spectral_norm(&b, 2, 2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gain_is_one_for_zero_system() {
        let sys = LqoSystem::zero(3, 2, 2, 1).unwrap();
        assert!((layer_gain_gtilde(&sys, hz(8), 2.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gain_hand_case_nilpotent() {
        // lambda = 0, B = C = 1, U = 0, L = 4: ||h1|| = 1, gain = 1 + 2
        let sys = LqoSystem::new(
            alloc::vec![Complex64::new(0.0, 0.0)],
            crate::cmatrix::CMat::from_rows(&[alloc::vec![Complex64::new(1.0, 0.0)]]).unwrap(),
            crate::cmatrix::CMat::from_rows(&[alloc::vec![Complex64::new(1.0, 0.0)]]).unwrap(),
            alloc::vec![crate::cmatrix::CMat::zeros(1, 1)],
        )
        .unwrap();
        assert!((layer_gain_gtilde(&sys, hz(4), 0.7).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn accumulated_gains_shape() {
        // gains (2, 3), omega 2: G_1 = 2^2 * 3 = 12, G_2 = 2
        let g = accumulated_gains(&[2.0, 3.0], 2.0);
        assert_eq!(g, vec![12.0, 2.0]);
    }

    #[test]
    fn self_reduction_bound_vanishes_relatively() {
        // phi(S, S) only cancels to round-off, so compare against the
        // same bound taken to the zero reduction instead of to 0.0
        let model = synth_random_dssm(2, 3, 2, 1, 11, 1e-5).unwrap();
        let roms: Vec<LqoSystem> = model.layers().iter().map(|l| l.system().clone()).collect();
        let red = build_reduced_dssm(&model, &roms).unwrap();
        let v = corollary_bound(&model, &red, hz(8), 1.0, 2.0).unwrap();
        let zeros: Vec<LqoSystem> = (0..model.depth())
            .map(|_| LqoSystem::zero(3, 2, 2, 1).unwrap())
            .collect();
        let zred = build_reduced_dssm(&model, &zeros).unwrap();
        let scale = corollary_bound(&model, &zred, hz(8), 1.0, 2.0).unwrap();
        assert!(v.abs() < 1e-6 * scale, "bound = {v}, scale = {scale}");
    }

    #[test]
    fn final_layer_bias_shift_measured_exactly() {
        let model = synth_random_dssm(2, 3, 2, 1, 13, 1e-5).unwrap();
        let mut layers = model.layers().to_vec();
        let last = layers.last().unwrap();
        let mut g2 = last.ln().gamma2().to_vec();
        g2[0] += 0.3;
        g2[1] -= 0.4;
        let shifted = crate::dssm::DssmLayer::new(
            last.system().clone(),
            LayerNormParams::new(last.ln().gamma1().to_vec(), g2, last.ln().eps()).unwrap(),
        )
        .unwrap();
        let n = layers.len();
        layers[n - 1] = shifted;
        let other = DeepSsm::new(layers).unwrap();
        let s_in =
            Signal::from_real_samples(&[alloc::vec![0.5, -0.2], alloc::vec![1.0, 0.3]]).unwrap();
        let e = measured_output_error(&model, &other, &s_in, hz(2)).unwrap();
        assert!((e - 0.5).abs() < 1e-12, "e = {e}");
    }

    #[test]
    fn kron_check_equal_signals() {
        let u = Signal::from_real_samples(&[alloc::vec![1.0, 2.0], alloc::vec![0.5, -1.0]])
            .unwrap();
        let (lhs, rhs) = kron_inequality_check(&u, &u.clone(), hz(2)).unwrap();
        assert_eq!((lhs, rhs), (0.0, 0.0));
    }

    #[test]
    fn kron_check_against_zero() {
        let u = Signal::from_real_samples(&[alloc::vec![1.0, 2.0], alloc::vec![-0.3, 0.4]])
            .unwrap();
        let z = Signal::zeros(2, 2);
        let (lhs, rhs) = kron_inequality_check(&u, &z, hz(2)).unwrap();
        assert!(lhs <= rhs + 1e-12, "lhs = {lhs}, rhs = {rhs}");
        // rhs = ||u||^2 here
        assert!((rhs - u.norm_l2() * u.norm_l2()).abs() < 1e-12);
    }
}
