//! Discrete-time complex linear-quadratic-output (LQO) systems.
//!
//! A system is
//!
//! ```text
//!   x_k = A x_{k-1} + B u_k,        A = diag(lambda), x_{-1} = 0
//!   y_k = C x_k + M (x_k (x) x_k)
//! ```
//!
//! where row j of the quadratic read-out is the sesquilinear form
//! x* M_j x with M_j = U_j* U_j Hermitian PSD. Kernels, norms and errors
//! use the finite horizon L: the linear Volterra kernel is
//! h1[t] = C A^t B and the quadratic kernel slice is
//! H_j[t1,t2] = B* (A*)^t1 M_j A^t2 B, paired with inputs as
//! u*_{k-t1} H_j u_{k-t2}.
//!
//! Vec/Kronecker convention: vec stacks columns, and the flattened form
//! "M (x (x) y)" denotes row j = x* M_j y, obtained by dotting
//! vec(M_j)^T against (y (x) conj(x)).

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::cmatrix::CMat;
use crate::error::{Error, Result};
use crate::flt;
use crate::signal::{Horizon, Signal};
use crate::stein;

/// Stability margin delta: constructors require |lambda_i| <= 1 - delta.
pub const STABILITY_MARGIN: f64 = 1e-6;

/// One LQO layer (Lambda, B, C, {U_j}) with M_j = U_j* U_j.
#[derive(Debug, Clone, PartialEq)]
pub struct LqoSystem {
    lambda: Vec<Complex64>,
    b: CMat,
    c: CMat,
    u: Vec<CMat>,
}

impl LqoSystem {
    /// Validates shapes, finiteness and the stability margin.
    pub fn new(lambda: Vec<Complex64>, b: CMat, c: CMat, u: Vec<CMat>) -> Result<Self> {
        let n = lambda.len();
        if n == 0 {
            return Err(Error::Shape("state dimension must be at least 1".into()));
        }
        if b.rows() != n || b.cols() == 0 {
            return Err(Error::Shape(alloc::format!(
                "B must be {n}xm with m >= 1, got {}x{}",
                b.rows(),
                b.cols()
            )));
        }
        if c.cols() != n || c.rows() == 0 {
            return Err(Error::Shape(alloc::format!(
                "C must be pxn with p >= 1 and n = {n}, got {}x{}",
                c.rows(),
                c.cols()
            )));
        }
        let p = c.rows();
        if u.len() != p {
            return Err(Error::Shape(alloc::format!(
                "expected {p} quadratic factors U_j (one per output), got {}",
                u.len()
            )));
        }
        let cq = u[0].rows();
        for (j, uj) in u.iter().enumerate() {
            if uj.rows() != cq || uj.cols() != n {
                return Err(Error::Shape(alloc::format!(
                    "U_{j} must be {cq}x{n}, got {}x{}",
                    uj.rows(),
                    uj.cols()
                )));
            }
            if !uj.all_finite() {
                return Err(Error::Domain(alloc::format!("U_{j} has non-finite entries")));
            }
        }
        if cq == 0 {
            return Err(Error::Shape("quadratic rank c must be at least 1".into()));
        }
        if !b.all_finite() || !c.all_finite() {
            return Err(Error::Domain("B or C has non-finite entries".into()));
        }
        for (i, &l) in lambda.iter().enumerate() {
            let modulus = l.norm();
            if !flt::is_finite(modulus) || modulus > 1.0 - STABILITY_MARGIN {
                return Err(Error::Unstable { index: i, modulus });
            }
        }
        Ok(LqoSystem { lambda, b, c, u })
    }

    /// Zero system of the given shape (lambda = 0, B = C = U = 0).
    pub fn zero(n: usize, m: usize, p: usize, cq: usize) -> Result<Self> {
        LqoSystem::new(
            vec![Complex64::new(0.0, 0.0); n],
            CMat::zeros(n, m),
            CMat::zeros(p, n),
            vec![CMat::zeros(cq, n); p],
        )
    }

    /// State dimension n.
    pub fn state_dim(&self) -> usize {
        self.lambda.len()
    }

    /// Input dimension m.
    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    /// Output dimension p.
    pub fn output_dim(&self) -> usize {
        self.c.rows()
    }

    /// Rank bound c of the quadratic factors.
    pub fn quad_rank(&self) -> usize {
        self.u[0].rows()
    }

    pub fn lambda(&self) -> &[Complex64] {
        &self.lambda
    }

    pub fn b(&self) -> &CMat {
        &self.b
    }

    pub fn c(&self) -> &CMat {
        &self.c
    }

    pub fn u(&self) -> &[CMat] {
        &self.u
    }

    /// Derived Hermitian PSD matrix M_j = U_j* U_j.
    pub fn m_matrix(&self, j: usize) -> CMat {
        &self.u[j].adjoint() * &self.u[j]
    }

    /// All derived M_j.
    pub fn m_matrices(&self) -> Vec<CMat> {
        (0..self.output_dim()).map(|j| self.m_matrix(j)).collect()
    }
}

fn check_input(sys: &LqoSystem, u: &Signal, l: Horizon) -> Result<()> {
    if u.width() != sys.input_dim() {
        return Err(Error::Shape(alloc::format!(
            "input width {} does not match system input dimension {}",
            u.width(),
            sys.input_dim()
        )));
    }
    if u.len() < l.get() {
        return Err(Error::Shape(alloc::format!(
            "input has {} samples, horizon needs {}",
            u.len(),
            l.get()
        )));
    }
    Ok(())
}

/// Simulate by the state recursion over the first L samples of u.
pub fn simulate_recursive(sys: &LqoSystem, u: &Signal, l: Horizon) -> Result<Signal> {
    check_input(sys, u, l)?;
    let n = sys.state_dim();
    let p = sys.output_dim();
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut y = Signal::zeros(l.get(), p);
    for k in 0..l.get() {
        let bu = sys.b.mul_vec(u.sample(k));
        for i in 0..n {
            x[i] = sys.lambda[i] * x[i] + bu[i];
        }
        let lin = sys.c.mul_vec(&x);
        let out = y.sample_mut(k);
        for j in 0..p {
            // x* M_j x = |U_j x|^2, real and nonnegative
            let w = sys.u[j].mul_vec(&x);
            let quad: f64 = w.iter().map(|z| z.norm_sqr()).sum();
            out[j] = lin[j] + quad;
        }
    }
    Ok(y)
}

/// Linear Volterra kernel, values[t] = C A^t B for t = 0..L-1.
#[derive(Debug, Clone)]
pub struct KernelH1 {
    pub values: Vec<CMat>,
}

/// Quadratic Volterra kernel. values[t1][t2] is p x m^2 with row j the
/// column-major vec of H_j[t1,t2] = B* (A*)^t1 M_j A^t2 B.
#[derive(Debug, Clone)]
pub struct KernelH2 {
    pub values: Vec<Vec<CMat>>,
    input_dim: usize,
}

impl KernelH2 {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Reshape row j of values[t1][t2] back into the m x m form H_j.
    pub fn form(&self, t1: usize, t2: usize, j: usize) -> CMat {
        let m = self.input_dim;
        let row = self.values[t1][t2].row(j);
        CMat::from_fn(m, m, |r, c| row[c * m + r])
    }

    /// Quadratic response contribution u1* H_j u2 for every output row j.
    pub fn apply(&self, t1: usize, t2: usize, u1: &[Complex64], u2: &[Complex64]) -> Vec<Complex64> {
        let m = self.input_dim;
        debug_assert_eq!(u1.len(), m);
        debug_assert_eq!(u2.len(), m);
        // (u2 (x) conj(u1))[i*m + l] = u2_i * conj(u1_l), dotted against
        // the stored column-major vec(H_j) rows.
        let mut w = Vec::with_capacity(m * m);
        for i in 0..m {
            for l in 0..m {
                w.push(u2[i] * u1[l].conj());
            }
        }
        let slab = &self.values[t1][t2];
        (0..slab.rows())
            .map(|j| {
                slab.row(j)
                    .iter()
                    .zip(w.iter())
                    .map(|(&h, &x)| h * x)
                    .sum()
            })
            .collect()
    }
}

/// h1[t] = C A^t B with elementwise diagonal powers.
pub fn kernel_h1(sys: &LqoSystem, l: Horizon) -> KernelH1 {
    let mut values = Vec::with_capacity(l.get());
    let mut scaled = sys.b.clone(); // A^t B, starting at t = 0
    for t in 0..l.get() {
        if t > 0 {
            scaled = scaled.scale_rows(sys.lambda());
        }
        values.push(&sys.c * &scaled);
    }
    KernelH1 { values }
}

/// h2[t1,t2] rows vec(H_j[t1,t2])^T via H_j = (U_j A^t1 B)* (U_j A^t2 B).
pub fn kernel_h2(sys: &LqoSystem, l: Horizon) -> KernelH2 {
    let m = sys.input_dim();
    let p = sys.output_dim();
    // W_j[t] = U_j A^t B; H_j[t1,t2] = W_j[t1]* W_j[t2]
    let mut w: Vec<Vec<CMat>> = Vec::with_capacity(p);
    for j in 0..p {
        let mut per_t = Vec::with_capacity(l.get());
        let mut scaled = sys.b.clone();
        for t in 0..l.get() {
            if t > 0 {
                scaled = scaled.scale_rows(sys.lambda());
            }
            per_t.push(&sys.u[j] * &scaled);
        }
        w.push(per_t);
    }
    let mut values = Vec::with_capacity(l.get());
    for t1 in 0..l.get() {
        let mut row_t = Vec::with_capacity(l.get());
        for t2 in 0..l.get() {
            let mut slab = CMat::zeros(p, m * m);
            for j in 0..p {
                let h = &w[j][t1].adjoint() * &w[j][t2];
                let row = slab.row_mut(j);
                for col in 0..m {
                    for r in 0..m {
                        row[col * m + r] = h[(r, col)];
                    }
                }
            }
            row_t.push(slab);
        }
        values.push(row_t);
    }
    KernelH2 {
        values,
        input_dim: m,
    }
}

/// Simulate through the Volterra kernels (oracle for the recursion).
pub fn simulate_convolution(sys: &LqoSystem, u: &Signal, l: Horizon) -> Result<Signal> {
    check_input(sys, u, l)?;
    let p = sys.output_dim();
    let h1 = kernel_h1(sys, l);
    let h2 = kernel_h2(sys, l);
    let mut y = Signal::zeros(l.get(), p);
    for k in 0..l.get() {
        let out = y.sample_mut(k);
        for t in 0..=k {
            let contrib = h1.values[t].mul_vec(u.sample(k - t));
            for j in 0..p {
                out[j] += contrib[j];
            }
        }
        for t1 in 0..=k {
            for t2 in 0..=k {
                let contrib = h2.apply(t1, t2, u.sample(k - t1), u.sample(k - t2));
                for j in 0..p {
                    out[j] += contrib[j];
                }
            }
        }
    }
    Ok(y)
}

/// Stack the quadratic read-out as a p x n^2 matrix with row j the
/// column-major vec(M_j)^T, M_j = U_j* U_j.
pub fn assemble_m(u: &[CMat]) -> Result<CMat> {
    if u.is_empty() {
        return Err(Error::Shape("assemble_m needs at least one factor".into()));
    }
    let n = u[0].cols();
    for (j, uj) in u.iter().enumerate() {
        if uj.cols() != n {
            return Err(Error::Shape(alloc::format!(
                "U_{j} has {} columns, expected {n}",
                uj.cols()
            )));
        }
    }
    let mut out = CMat::zeros(u.len(), n * n);
    for (j, uj) in u.iter().enumerate() {
        let mj = &uj.adjoint() * uj;
        let row = out.row_mut(j);
        for col in 0..n {
            for r in 0..n {
                row[col * n + r] = mj[(r, col)];
            }
        }
    }
    Ok(out)
}

/// Clamp tiny negative round-off in a mathematically nonnegative value.
fn clamp_nonneg(v: f64, scale: f64) -> f64 {
    if v < 0.0 && flt::abs(v) < 1e-10 * flt::max(scale, 1e-300) {
        0.0
    } else {
        v
    }
}

/// Squared h2_L norm split into (linear, quadratic) kernel energies:
/// tr(C P_L C*) and sum_j tr(P_L M_j P_L M_j).
pub fn h2l_norm_parts(sys: &LqoSystem, l: Horizon) -> Result<(f64, f64)> {
    let p_l = stein::reachability_gramian(sys, l)?;
    let lin = (&(&sys.c * &p_l) * &sys.c.adjoint()).trace().re;
    let mut quad = 0.0;
    let mut scale = 0.0;
    for j in 0..sys.output_dim() {
        let pm = &p_l * &sys.m_matrix(j);
        let term = (&pm * &pm).trace().re;
        quad += term;
        scale += flt::abs(term);
    }
    Ok((
        clamp_nonneg(lin, flt::abs(lin)),
        clamp_nonneg(quad, scale),
    ))
}

/// Squared h2_L norm ||S||^2 = ||h1||^2 + ||h2||^2 via trace formulas.
pub fn h2l_norm_sq(sys: &LqoSystem, l: Horizon) -> Result<f64> {
    let (lin, quad) = h2l_norm_parts(sys, l)?;
    Ok(lin + quad)
}

/// Squared h2_L error split into (linear, quadratic) parts:
///   lin  = tr(C P_L C*) + tr(Chat Phat_L Chat*) - 2 Re tr(C Ptilde_L Chat*)
///   quad = sum_j [ tr(P_L M_j P_L M_j) + tr(Phat_L Mhat_j Phat_L Mhat_j)
///                  - 2 Re tr(Ptilde_L* M_j Ptilde_L Mhat_j) ]
pub fn h2l_error_parts(sys: &LqoSystem, rsys: &LqoSystem, l: Horizon) -> Result<(f64, f64)> {
    if sys.input_dim() != rsys.input_dim() || sys.output_dim() != rsys.output_dim() {
        return Err(Error::Shape(alloc::format!(
            "systems must share input/output dimensions: {}x{} vs {}x{}",
            sys.input_dim(),
            sys.output_dim(),
            rsys.input_dim(),
            rsys.output_dim()
        )));
    }
    let (p_l, ptilde_l, phat_l) = stein::finite_gramians(sys, rsys, l)?;
    let t1 = (&(&sys.c * &p_l) * &sys.c.adjoint()).trace().re;
    let t2 = (&(&rsys.c * &phat_l) * &rsys.c.adjoint()).trace().re;
    let t3 = (&(&sys.c * &ptilde_l) * &rsys.c.adjoint()).trace().re;
    let lin = t1 + t2 - 2.0 * t3;
    let lin_scale = flt::abs(t1) + flt::abs(t2) + 2.0 * flt::abs(t3);
    let mut quad = 0.0;
    let mut quad_scale = 0.0;
    let ptilde_adj = ptilde_l.adjoint();
    for j in 0..sys.output_dim() {
        let m = sys.m_matrix(j);
        let mhat = rsys.m_matrix(j);
        let pm = &p_l * &m;
        let q1 = (&pm * &pm).trace().re;
        let pmh = &phat_l * &mhat;
        let q2 = (&pmh * &pmh).trace().re;
        let q3 = (&(&(&ptilde_adj * &m) * &ptilde_l) * &mhat).trace().re;
        quad += q1 + q2 - 2.0 * q3;
        quad_scale += flt::abs(q1) + flt::abs(q2) + 2.0 * flt::abs(q3);
    }
    Ok((
        clamp_nonneg(lin, lin_scale),
        clamp_nonneg(quad, quad_scale),
    ))
}

/// Squared h2_L error ||S - Shat||^2 between a system and its reduction.
pub fn h2l_error_sq(sys: &LqoSystem, rsys: &LqoSystem, l: Horizon) -> Result<f64> {
    let (lin, quad) = h2l_error_parts(sys, rsys, l)?;
    Ok(lin + quad)
}

/// Wrap an S5-style layer: output sigma(C_s5 x) with sigma the
/// coordinatewise squared modulus becomes C = 0, U_j = row j of C_s5.
pub fn s5_to_lqo(lambda: Vec<Complex64>, b: CMat, c_s5: CMat) -> Result<LqoSystem> {
    let n = lambda.len();
    if c_s5.cols() != n {
        return Err(Error::Shape(alloc::format!(
            "C_s5 must have {n} columns, got {}",
            c_s5.cols()
        )));
    }
    let p = c_s5.rows();
    let u = (0..p)
        .map(|j| CMat::from_fn(1, n, |_, i| c_s5[(j, i)]))
        .collect();
    LqoSystem::new(lambda, b, CMat::zeros(p, n), u)
}
