//! Diagonal Stein equations and the gramian catalog for h2_L errors.
//!
//! With diagonal coefficient vectors a, b the Stein equation
//!
//! ```text
//!   X = diag(a) X diag(b) + RHS
//! ```
//!
//! has the closed form X_ij = RHS_ij / (1 - a_i b_j). The solver does no
//! conjugation of its own; callers pass the conjugated vector when a sum
//! like sum_t A^t E (A*)^t is wanted. Finite-horizon sums
//! sum_{t=0}^{L-1} diag(a)^t RHS diag(b)^t reuse the same solve with the
//! corrected right-hand side RHS_ij (1 - (a_i b_j)^L).

use alloc::vec::Vec;
use num_complex::Complex64;

use crate::cmatrix::{pow_elem, CMat};
use crate::error::{Error, Result};
use crate::lqo::{LqoSystem, STABILITY_MARGIN};
use crate::signal::Horizon;

/// Solve X = diag(a) X diag(b) + RHS elementwise.
///
/// Fails with NearSingular when |a_i b_j| >= 1 - STABILITY_MARGIN, where
/// the divisor 1 - a_i b_j loses all relative accuracy.
pub fn solve_diag_stein(a: &[Complex64], b: &[Complex64], rhs: &CMat) -> Result<CMat> {
    if rhs.rows() != a.len() || rhs.cols() != b.len() {
        return Err(Error::Shape(alloc::format!(
            "RHS must be {}x{}, got {}x{}",
            a.len(),
            b.len(),
            rhs.rows(),
            rhs.cols()
        )));
    }
    let mut x = rhs.clone();
    for i in 0..a.len() {
        for j in 0..b.len() {
            let q = a[i] * b[j];
            let magnitude = q.norm();
            if magnitude >= 1.0 - STABILITY_MARGIN {
                return Err(Error::NearSingular {
                    row: i,
                    col: j,
                    magnitude,
                });
            }
            x[(i, j)] = x[(i, j)] / (Complex64::new(1.0, 0.0) - q);
        }
    }
    Ok(x)
}

/// RHS for the finite sum: RHS0_ij (1 - (a_i b_j)^L).
pub(crate) fn corrected_rhs(a: &[Complex64], b: &[Complex64], rhs0: &CMat, l: Horizon) -> CMat {
    let lp = l.as_u32();
    CMat::from_fn(rhs0.rows(), rhs0.cols(), |i, j| {
        rhs0[(i, j)] * (Complex64::new(1.0, 0.0) - (a[i] * b[j]).powu(lp))
    })
}

fn conj_vec(v: &[Complex64]) -> Vec<Complex64> {
    v.iter().map(|z| z.conj()).collect()
}

/// Finite sum sum_{t=0}^{L-1} diag(a)^t RHS0 diag(b)^t.
fn finite_sum(a: &[Complex64], b: &[Complex64], rhs0: &CMat, l: Horizon) -> Result<CMat> {
    solve_diag_stein(a, b, &corrected_rhs(a, b, rhs0, l))
}

/// Reachability gramian P_L = sum_{t=0}^{L-1} A^t B B* (A*)^t.
pub(crate) fn reachability_gramian(sys: &LqoSystem, l: Horizon) -> Result<CMat> {
    let lam = sys.lambda();
    finite_sum(lam, &conj_vec(lam), &(sys.b() * &sys.b().adjoint()), l)
}

/// Time-limited reachability triple (P_L, Ptilde_L, Phat_L):
///   P_L      = sum_t A^t B B* (A*)^t          (n x n)
///   Ptilde_L = sum_t A^t B Bhat* (Ahat*)^t    (n x r)
///   Phat_L   = sum_t Ahat^t Bhat Bhat* (Ahat*)^t  (r x r)
pub fn finite_gramians(sys: &LqoSystem, rsys: &LqoSystem, l: Horizon) -> Result<(CMat, CMat, CMat)> {
    if sys.input_dim() != rsys.input_dim() {
        return Err(Error::Shape(alloc::format!(
            "input dimensions differ: {} vs {}",
            sys.input_dim(),
            rsys.input_dim()
        )));
    }
    let lam = sys.lambda();
    let lamh = rsys.lambda();
    let p_l = reachability_gramian(sys, l)?;
    let ptilde_l = finite_sum(lam, &conj_vec(lamh), &(sys.b() * &rsys.b().adjoint()), l)?;
    let phat_l = finite_sum(lamh, &conj_vec(lamh), &(rsys.b() * &rsys.b().adjoint()), l)?;
    Ok((p_l, ptilde_l, phat_l))
}

/// Infinite-horizon cross and reduced reachability gramians
/// (Ptilde, Phat), the L -> infinity limits of Ptilde_L, Phat_L.
pub fn infinite_gramians(sys: &LqoSystem, rsys: &LqoSystem) -> Result<(CMat, CMat)> {
    if sys.input_dim() != rsys.input_dim() {
        return Err(Error::Shape(alloc::format!(
            "input dimensions differ: {} vs {}",
            sys.input_dim(),
            rsys.input_dim()
        )));
    }
    let lam = sys.lambda();
    let lamh = rsys.lambda();
    let ptilde = solve_diag_stein(lam, &conj_vec(lamh), &(sys.b() * &rsys.b().adjoint()))?;
    let phat = solve_diag_stein(lamh, &conj_vec(lamh), &(rsys.b() * &rsys.b().adjoint()))?;
    Ok((ptilde, phat))
}

/// Every gramian the error traces and gradients draw on, computed once
/// per (full, reduced) pair and horizon.
#[derive(Debug, Clone)]
pub struct GramianSet {
    /// P_L, n x n.
    pub p_l: CMat,
    /// Ptilde_L = sum_t A^t B Bhat* (Ahat*)^t, n x r.
    pub ptilde_l: CMat,
    /// Phat_L, r x r.
    pub phat_l: CMat,
    /// Ytilde_L = sum_t (A*)^t C* Chat Ahat^t, n x r.
    pub ytilde_l: CMat,
    /// Yhat_L = sum_t (Ahat*)^t Chat* Chat Ahat^t, r x r.
    pub yhat_l: CMat,
    /// Ztilde_L = sum_t (A*)^t Ntilde Ahat^t with
    /// Ntilde = sum_j M_j Ptilde_L Mhat_j, n x r.
    pub ztilde_l: CMat,
    /// Zhat_L = sum_t (Ahat*)^t Nhat Ahat^t with
    /// Nhat = sum_j Mhat_j Phat_L Mhat_j, r x r.
    pub zhat_l: CMat,
    /// Zbar_L: infinite-horizon solve with the same Ntilde, n x r.
    pub zbar_l: CMat,
    /// Zbar_{r,L}: infinite-horizon solve with the same Nhat, r x r.
    pub zbar_r_l: CMat,
    /// Ptilde = lim_L Ptilde_L, n x r.
    pub ptilde_inf: CMat,
    /// Phat = lim_L Phat_L, r x r.
    pub phat_inf: CMat,
    /// Diagonal of A^L, elementwise lambda_i^L.
    pub s_l: Vec<Complex64>,
    /// Diagonal of Ahat^L, elementwise lambdahat_i^L.
    pub shat_l: Vec<Complex64>,
}

impl GramianSet {
    pub fn compute(sys: &LqoSystem, rsys: &LqoSystem, l: Horizon) -> Result<GramianSet> {
        if sys.output_dim() != rsys.output_dim() {
            return Err(Error::Shape(alloc::format!(
                "output dimensions differ: {} vs {}",
                sys.output_dim(),
                rsys.output_dim()
            )));
        }
        let (p_l, ptilde_l, phat_l) = finite_gramians(sys, rsys, l)?;
        let (ptilde_inf, phat_inf) = infinite_gramians(sys, rsys)?;
        let lam = sys.lambda();
        let lamh = rsys.lambda();
        let lam_c = conj_vec(lam);
        let lamh_c = conj_vec(lamh);

        let ytilde_l = finite_sum(&lam_c, lamh, &(&sys.c().adjoint() * rsys.c()), l)?;
        let yhat_l = finite_sum(&lamh_c, lamh, &(&rsys.c().adjoint() * rsys.c()), l)?;

        let p = sys.output_dim();
        let mut ntilde = CMat::zeros(sys.state_dim(), rsys.state_dim());
        let mut nhat = CMat::zeros(rsys.state_dim(), rsys.state_dim());
        for j in 0..p {
            let m = sys.m_matrix(j);
            let mh = rsys.m_matrix(j);
            ntilde = &ntilde + &(&(&m * &ptilde_l) * &mh);
            nhat = &nhat + &(&(&mh * &phat_l) * &mh);
        }
        let ztilde_l = finite_sum(&lam_c, lamh, &ntilde, l)?;
        let zhat_l = finite_sum(&lamh_c, lamh, &nhat, l)?;
        let zbar_l = solve_diag_stein(&lam_c, lamh, &ntilde)?;
        let zbar_r_l = solve_diag_stein(&lamh_c, lamh, &nhat)?;

        Ok(GramianSet {
            p_l,
            ptilde_l,
            phat_l,
            ytilde_l,
            yhat_l,
            ztilde_l,
            zhat_l,
            zbar_l,
            zbar_r_l,
            ptilde_inf,
            phat_inf,
            s_l: pow_elem(lam, l.as_u32()),
            shat_l: pow_elem(lamh, l.as_u32()),
        })
    }
}

/// Which member of the catalog `bruteforce_gramian_sum` should accumulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramianKind {
    PL,
    PtildeL,
    PhatL,
    YtildeL,
    YhatL,
    ZtildeL,
    ZhatL,
    ZbarL,
    ZbarRL,
    PtildeInf,
    PhatInf,
}

/// Accumulate the defining sum term by term with explicit diagonal powers.
///
/// Independent oracle for GramianSet: no Stein solve is involved. The
/// infinite kinds truncate once the running term falls below 1e-30 in
/// max-modulus, which is adequate for the desk-scale spectra used in
/// tests (capped at 2_000_000 terms).
pub fn bruteforce_gramian_sum(
    sys: &LqoSystem,
    rsys: &LqoSystem,
    l: Horizon,
    kind: GramianKind,
) -> Result<CMat> {
    let lam = sys.lambda().to_vec();
    let lamh = rsys.lambda().to_vec();
    let lam_c = conj_vec(&lam);
    let lamh_c = conj_vec(&lamh);
    let p = sys.output_dim();

    // Ntilde and Nhat reuse the brute-forced finite reachability sums so
    // the oracle stays independent of the solver.
    let build_n = |which_hat: bool| -> Result<CMat> {
        let ptilde_l = accumulate(&lam, &lamh_c, &(sys.b() * &rsys.b().adjoint()), Some(l));
        let phat_l = accumulate(&lamh, &lamh_c, &(rsys.b() * &rsys.b().adjoint()), Some(l));
        let mut acc = if which_hat {
            CMat::zeros(rsys.state_dim(), rsys.state_dim())
        } else {
            CMat::zeros(sys.state_dim(), rsys.state_dim())
        };
        for j in 0..p {
            let mh = rsys.m_matrix(j);
            if which_hat {
                acc = &acc + &(&(&mh * &phat_l) * &mh);
            } else {
                let m = sys.m_matrix(j);
                acc = &acc + &(&(&m * &ptilde_l) * &mh);
            }
        }
        Ok(acc)
    };

    let out = match kind {
        GramianKind::PL => accumulate(&lam, &lam_c, &(sys.b() * &sys.b().adjoint()), Some(l)),
        GramianKind::PtildeL => {
            accumulate(&lam, &lamh_c, &(sys.b() * &rsys.b().adjoint()), Some(l))
        }
        GramianKind::PhatL => {
            accumulate(&lamh, &lamh_c, &(rsys.b() * &rsys.b().adjoint()), Some(l))
        }
        GramianKind::YtildeL => {
            accumulate(&lam_c, &lamh, &(&sys.c().adjoint() * rsys.c()), Some(l))
        }
        GramianKind::YhatL => {
            accumulate(&lamh_c, &lamh, &(&rsys.c().adjoint() * rsys.c()), Some(l))
        }
        GramianKind::ZtildeL => accumulate(&lam_c, &lamh, &build_n(false)?, Some(l)),
        GramianKind::ZhatL => accumulate(&lamh_c, &lamh, &build_n(true)?, Some(l)),
        GramianKind::ZbarL => accumulate(&lam_c, &lamh, &build_n(false)?, None),
        GramianKind::ZbarRL => accumulate(&lamh_c, &lamh, &build_n(true)?, None),
        GramianKind::PtildeInf => {
            accumulate(&lam, &lamh_c, &(sys.b() * &rsys.b().adjoint()), None)
        }
        GramianKind::PhatInf => {
            accumulate(&lamh, &lamh_c, &(rsys.b() * &rsys.b().adjoint()), None)
        }
    };
    Ok(out)
}

/// sum_t diag(a)^t RHS diag(b)^t, finite or truncated-infinite.
fn accumulate(a: &[Complex64], b: &[Complex64], rhs: &CMat, l: Option<Horizon>) -> CMat {
    let mut x = CMat::zeros(rhs.rows(), rhs.cols());
    let mut term = rhs.clone();
    let mut t: usize = 0;
    loop {
        x = &x + &term;
        t += 1;
        match l {
            Some(h) => {
                if t >= h.get() {
                    break;
                }
            }
            None => {
                if term.max_abs() < 1e-30 || t >= 2_000_000 {
                    break;
                }
            }
        }
        term = term.scale_rows(a).scale_cols(b);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn hz(l: usize) -> Horizon {
        Horizon::new(l).unwrap()
    }

    fn scalar_sys(lambda: Complex64, b: Complex64, cc: Complex64, u: Complex64) -> LqoSystem {
        LqoSystem::new(
            vec![lambda],
            CMat::from_rows(&[vec![b]]).unwrap(),
            CMat::from_rows(&[vec![cc]]).unwrap(),
            vec![CMat::from_rows(&[vec![u]]).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn scalar_geometric_limit() {
        // X = 0.25 X + 1 -> X = 4/3
        let a = [c(0.5, 0.0)];
        let b = [c(0.5, 0.0)];
        let rhs = CMat::from_rows(&[vec![c(1.0, 0.0)]]).unwrap();
        let x = solve_diag_stein(&a, &b, &rhs).unwrap();
        assert!((x[(0, 0)] - c(4.0 / 3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = [c(0.3, 0.2), c(-0.4, 0.1)];
        let x = solve_diag_stein(&a, &a, &CMat::zeros(2, 2)).unwrap();
        assert_eq!(x.norm_sqr(), 0.0);
    }

    #[test]
    fn zero_coefficients_return_rhs() {
        let a = [c(0.0, 0.0)];
        let rhs = CMat::from_rows(&[vec![c(2.5, -1.0), c(0.0, 3.0)]]).unwrap();
        let x = solve_diag_stein(&a, &[c(0.7, 0.0), c(0.1, 0.0)], &rhs).unwrap();
        assert_eq!(x.row(0), rhs.row(0));
    }

    #[test]
    fn near_singular_product_rejected() {
        let a = [c(0.9999995, 0.0)];
        let b = [c(1.0, 0.0)];
        let rhs = CMat::from_rows(&[vec![c(1.0, 0.0)]]).unwrap();
        match solve_diag_stein(&a, &b, &rhs) {
            Err(Error::NearSingular { row: 0, col: 0, magnitude }) => {
                assert!(magnitude >= 1.0 - STABILITY_MARGIN);
            }
            other => panic!("expected NearSingular, got {other:?}"),
        }
    }

    #[test]
    fn finite_two_step_reachability() {
        // P_2 = 1 + |0.5|^2 = 1.25
        let sys = scalar_sys(c(0.5, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0));
        let (p, _, _) = finite_gramians(&sys, &sys, hz(2)).unwrap();
        assert!((p[(0, 0)] - c(1.25, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn long_horizon_approaches_limit() {
        let sys = scalar_sys(c(0.5, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0));
        let (p, _, _) = finite_gramians(&sys, &sys, hz(200)).unwrap();
        assert!((p[(0, 0)] - c(4.0 / 3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn self_reduction_collapses_the_triple() {
        let sys = scalar_sys(c(0.3, 0.4), c(1.0, -2.0), c(0.5, 0.5), c(1.0, 0.0));
        let (p, pt, ph) = finite_gramians(&sys, &sys, hz(7)).unwrap();
        assert!((p[(0, 0)] - pt[(0, 0)]).norm() < 1e-15);
        assert!((p[(0, 0)] - ph[(0, 0)]).norm() < 1e-15);
    }

    #[test]
    fn gramian_set_matches_bruteforce_spot_check() {
        let sys = LqoSystem::new(
            vec![c(0.5, 0.2), c(-0.3, 0.4)],
            CMat::from_rows(&[vec![c(1.0, 0.5)], vec![c(-0.5, 1.0)]]).unwrap(),
            CMat::from_rows(&[vec![c(0.7, -0.2), c(0.3, 0.1)]]).unwrap(),
            vec![CMat::from_rows(&[vec![c(0.4, 0.0), c(0.0, 0.6)]]).unwrap()],
        )
        .unwrap();
        let rsys = scalar_sys(c(0.6, -0.1), c(0.9, 0.3), c(0.2, 0.8), c(0.5, -0.5));
        let l = hz(9);
        let set = GramianSet::compute(&sys, &rsys, l).unwrap();
        for (got, kind) in [
            (&set.p_l, GramianKind::PL),
            (&set.ytilde_l, GramianKind::YtildeL),
            (&set.zhat_l, GramianKind::ZhatL),
            (&set.ptilde_inf, GramianKind::PtildeInf),
        ] {
            let want = bruteforce_gramian_sum(&sys, &rsys, l, kind).unwrap();
            let diff = &(got.clone()) - &want;
            assert!(
                diff.max_abs() < 1e-12 * (1.0 + want.max_abs()),
                "{kind:?} mismatch: {}",
                diff.max_abs()
            );
        }
    }

    #[test]
    fn horizon_powers_recorded() {
        let sys = scalar_sys(c(0.5, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0));
        let set = GramianSet::compute(&sys, &sys, hz(3)).unwrap();
        assert!((set.s_l[0] - c(0.125, 0.0)).norm() < 1e-15);
    }
}
