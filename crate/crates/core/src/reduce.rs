//! Gradients of the time-limited h2 objective and the stability-guarded
//! Armijo gradient descent that reduces every layer of a deep stack.
//!
//! The objective over reduced layers (Lambda_i, B_i, C_i, U_i) is
//!
//! ```text
//!   f = sum_i gain_i * sqrt(phi_i),
//!   phi_i = ||S_i - Shat_i||^2_{h2_L}
//! ```
//!
//! with fixed per-layer gains. Gradients follow the convention
//! df = Re tr(G* dTheta), so dRe(theta_kj) = Re(G_kj) and
//! dIm(theta_kj) = Im(G_kj); every formula below was fixed against
//! central finite differences (the published forms of the A-gradient and
//! the sign of the C-gradient do not pass that check; see grad_phi).

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cmatrix::CMat;
use crate::error::{Error, Result};
use crate::flt;
use crate::lqo::{h2l_error_sq, h2l_norm_sq, LqoSystem, STABILITY_MARGIN};
use crate::rand_util::{complex_normal, uniform_disk};
use crate::signal::Horizon;
use crate::stein::GramianSet;

/// Apply the map X -> sum_{j=0}^{L-1} (Ahat*)^j X (Ahat*)^{L-1-j} for
/// diagonal Ahat = diag(lambda_hat); X must be r x r.
///
/// Entry (i, j) scales by s = sum_k ci^k cj^{L-1-k} with ci, cj the
/// conjugated eigenvalues. Three branches keep s accurate to 1e-12:
/// bitwise-equal pairs use the limit L*ci^(L-1); well-separated pairs
/// use the ratio (ci^L - cj^L)/(ci - cj); near-coincident pairs fall
/// back to the explicit L-term sum, where the terms share phase and so
/// accumulate without cancellation.
pub fn t_star_diag(lambda_hat: &[Complex64], x: &CMat, l: Horizon) -> Result<CMat> {
    let r = lambda_hat.len();
    if x.rows() != r || x.cols() != r {
        return Err(Error::Shape(alloc::format!(
            "X must be {r}x{r}, got {}x{}",
            x.rows(),
            x.cols()
        )));
    }
    let lp = l.as_u32();
    let conj: Vec<Complex64> = lambda_hat.iter().map(|z| z.conj()).collect();
    let mut out = CMat::zeros(r, r);
    for i in 0..r {
        for j in 0..r {
            out[(i, j)] = x[(i, j)] * pair_power_sum(conj[i], conj[j], lp);
        }
    }
    Ok(out)
}

/// sum_{k=0}^{L-1} x^k y^{L-1-k} for |x|, |y| < 1.
fn pair_power_sum(x: Complex64, y: Complex64, l: u32) -> Complex64 {
    if l == 0 {
        return Complex64::new(0.0, 0.0);
    }
    if l == 1 {
        return Complex64::new(1.0, 0.0);
    }
    if x == y {
        return x.powu(l - 1) * l as f64;
    }
    let mag = flt::max(x.norm(), y.norm());
    if mag == 0.0 {
        // only the k with all exponents on the nonzero factor survives,
        // and l >= 2 means every term carries a positive power of 0
        return Complex64::new(0.0, 0.0);
    }
    let sep = (x - y).norm();
    if sep > 0.05 * mag {
        return (x.powu(l) - y.powu(l)) / (x - y);
    }
    // near-coincident: |sum| <= l * mag^(l-1); skip if that underflows
    if (l as f64 - 1.0) * flt::ln(mag) < -745.0 {
        return Complex64::new(0.0, 0.0);
    }
    if l > 8_000_000 {
        // the explicit sum below would be too slow; the ratio form is
        // exact in exact arithmetic and its round-off stays below the
        // l * mag^(l-1) scale of any surviving sum
        return (x.powu(l) - y.powu(l)) / (x - y);
    }
    // explicit sum, evaluated by Horner in x/y: near-equal x and y make
    // the ratio form cancel catastrophically, while direct accumulation
    // loses at most l ulps against the term magnitude
    let mut term = y.powu(l - 1);
    let ratio = x / y;
    let mut acc = Complex64::new(0.0, 0.0);
    for _ in 0..l {
        acc += term;
        term *= ratio;
    }
    acc
}

/// Gradients of phi = ||S - Shat||^2_{h2_L} in the reduced parameters,
/// before the diagonal restriction of A and the U chain rule.
#[derive(Debug, Clone)]
pub struct PhiGradient {
    /// Gradient in a dense r x r Ahat (restrict to the diagonal for
    /// diagonal parameterizations).
    pub d_a: CMat,
    /// r x m.
    pub d_b: CMat,
    /// p x r.
    pub d_c: CMat,
    /// One Hermitian r x r gradient per output row, in Mhat_j.
    pub d_m: Vec<CMat>,
}

/// Assemble the phi gradients from the gramian catalog.
///
/// The A-gradient and the sign of the C-gradient are the finite-
/// difference-arbitrated forms:
///
/// ```text
///   grad_C = 2(-C Ptilde_L + Chat Phat_L)
///   grad_B = 2(-(Ytilde_L + 2 Ztilde_L)* B + (Yhat_L + 2 Zhat_L) Bhat)
///   grad_M_j = 2(-Ptilde_L* M_j Ptilde_L + Phat_L Mhat_j Phat_L)
///   grad_A = 2[ (Yhat_L + 2 Zhat_L) Ahat Phat
///              - (Ytilde_L + 2 Ztilde_L)* A Ptilde
///              + Tstar_{Ahat,L}(V) ]
///   V = Chat* C S_L Ptilde - Chat* Chat Shat_L Phat
///       + 2 Ntilde* S_L Ptilde - 2 Nhat Shat_L Phat
/// ```
///
/// with S_L = A^L, Shat_L = Ahat^L, Ntilde = sum_j M_j Ptilde_L Mhat_j,
/// Nhat = sum_j Mhat_j Phat_L Mhat_j, and Ptilde, Phat the infinite-
/// horizon gramians. Each block matches central finite differences to
/// ~1e-9 relative on random instances.
pub fn grad_phi(sys: &LqoSystem, rsys: &LqoSystem, l: Horizon) -> Result<PhiGradient> {
    let gs = GramianSet::compute(sys, rsys, l)?;
    let p = sys.output_dim();

    // YZt = Ytilde_L + 2 Ztilde_L (n x r), YZh = Yhat_L + 2 Zhat_L (r x r)
    let yzt = &gs.ytilde_l + &gs.ztilde_l.scale(Complex64::new(2.0, 0.0));
    let yzh = &gs.yhat_l + &gs.zhat_l.scale(Complex64::new(2.0, 0.0));

    let c_cross = sys.c() * &gs.ptilde_l;
    let c_own = rsys.c() * &gs.phat_l;
    let d_c = (&c_own - &c_cross).scale(Complex64::new(2.0, 0.0));

    let b_cross = &yzt.adjoint() * sys.b();
    let b_own = &yzh * rsys.b();
    let d_b = (&b_own - &b_cross).scale(Complex64::new(2.0, 0.0));

    let ptilde_adj = gs.ptilde_l.adjoint();
    let mut d_m = Vec::with_capacity(p);
    let r = rsys.state_dim();
    let mut ntilde_adj = CMat::zeros(r, sys.state_dim());
    let mut nhat = CMat::zeros(r, r);
    for j in 0..p {
        let m = sys.m_matrix(j);
        let mh = rsys.m_matrix(j);
        let cross = &(&ptilde_adj * &m) * &gs.ptilde_l;
        let own = &(&gs.phat_l * &mh) * &gs.phat_l;
        d_m.push((&own - &cross).scale(Complex64::new(2.0, 0.0)));
        ntilde_adj = &ntilde_adj + &(&(&mh * &ptilde_adj) * &m);
        nhat = &nhat + &(&(&mh * &gs.phat_l) * &mh);
    }

    // V collects the finite-horizon boundary terms through A^L, Ahat^L
    let sp = gs.ptilde_inf.scale_rows(&gs.s_l);
    let shp = gs.phat_inf.scale_rows(&gs.shat_l);
    let mut v = &(&rsys.c().adjoint() * sys.c()) * &sp;
    v = &v + &(&ntilde_adj * &sp).scale(Complex64::new(2.0, 0.0));
    v = &v - &(&(&rsys.c().adjoint() * rsys.c()) * &shp);
    v = &v - &(&nhat * &shp).scale(Complex64::new(2.0, 0.0));

    let term_hat = &yzh.scale_cols(rsys.lambda()) * &gs.phat_inf;
    let term_cross = &yzt.adjoint().scale_cols(sys.lambda()) * &gs.ptilde_inf;
    let d_a = (&(&term_hat - &term_cross) + &t_star_diag(rsys.lambda(), &v, l)?)
        .scale(Complex64::new(2.0, 0.0));

    Ok(PhiGradient { d_a, d_b, d_c, d_m })
}

/// Chain rule through Mhat = U* U: grad_U = U (grad_M + grad_M*).
pub fn grad_u_from_m(u: &CMat, d_m: &CMat) -> CMat {
    u * &(d_m + &d_m.adjoint())
}

/// Gradient of f in one layer's reduced parameters, diagonal A restricted.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub d_lambda: Vec<Complex64>,
    pub d_b: CMat,
    pub d_c: CMat,
    pub d_u: Vec<CMat>,
}

impl GradientSet {
    fn zero(rsys: &LqoSystem) -> GradientSet {
        GradientSet {
            d_lambda: vec![Complex64::new(0.0, 0.0); rsys.state_dim()],
            d_b: CMat::zeros(rsys.state_dim(), rsys.input_dim()),
            d_c: CMat::zeros(rsys.output_dim(), rsys.state_dim()),
            d_u: (0..rsys.output_dim())
                .map(|_| CMat::zeros(rsys.quad_rank(), rsys.state_dim()))
                .collect(),
        }
    }

    /// Squared Frobenius norms per block: [Lambda, B, C, U].
    pub fn block_norms_sq(&self) -> [f64; 4] {
        [
            self.d_lambda.iter().map(|z| z.norm_sqr()).sum(),
            self.d_b.norm_sqr(),
            self.d_c.norm_sqr(),
            self.d_u.iter().map(|m| m.norm_sqr()).sum(),
        ]
    }
}

fn check_layer_counts(fulls: &[LqoSystem], roms: &[LqoSystem], gains: &[f64]) -> Result<()> {
    if fulls.is_empty() || fulls.len() != roms.len() || fulls.len() != gains.len() {
        return Err(Error::Shape(alloc::format!(
            "need equal nonzero layer counts, got {} full, {} reduced, {} gains",
            fulls.len(),
            roms.len(),
            gains.len()
        )));
    }
    if gains.iter().any(|g| !flt::is_finite(*g) || *g < 0.0) {
        return Err(Error::Domain("gains must be finite and nonnegative".into()));
    }
    Ok(())
}

/// f = sum_i gains[i] * sqrt(phi_i) over the layer pairs.
pub fn objective_f(
    fulls: &[LqoSystem],
    roms: &[LqoSystem],
    gains: &[f64],
    l: Horizon,
) -> Result<f64> {
    check_layer_counts(fulls, roms, gains)?;
    let mut acc = 0.0;
    for i in 0..fulls.len() {
        acc += gains[i] * flt::sqrt(h2l_error_sq(&fulls[i], &roms[i], l)?);
    }
    Ok(acc)
}

/// Per-layer gradients of f: grad_phi scaled by gains[i]/(2 sqrt(phi_i)),
/// with the diagonal of the A-gradient and the U chain rule applied.
///
/// Layers already at their minimum (phi_i below 1e-14 of the full
/// layer's squared norm) get a zero gradient: 1/sqrt(phi) is singular
/// there and the layer cannot be improved.
pub fn grad_objective(
    fulls: &[LqoSystem],
    roms: &[LqoSystem],
    gains: &[f64],
    l: Horizon,
) -> Result<Vec<GradientSet>> {
    check_layer_counts(fulls, roms, gains)?;
    let mut out = Vec::with_capacity(fulls.len());
    for i in 0..fulls.len() {
        let phi = h2l_error_sq(&fulls[i], &roms[i], l)?;
        let scale = h2l_norm_sq(&fulls[i], l)? + 1e-300;
        if phi < 1e-14 * scale {
            out.push(GradientSet::zero(&roms[i]));
            continue;
        }
        let s = Complex64::new(gains[i] / (2.0 * flt::sqrt(phi)), 0.0);
        let pg = grad_phi(&fulls[i], &roms[i], l)?;
        let r = roms[i].state_dim();
        out.push(GradientSet {
            d_lambda: (0..r).map(|k| pg.d_a[(k, k)] * s).collect(),
            d_b: pg.d_b.scale(s),
            d_c: pg.d_c.scale(s),
            d_u: (0..roms[i].output_dim())
                .map(|j| grad_u_from_m(&roms[i].u()[j], &pg.d_m[j]).scale(s))
                .collect(),
        });
    }
    Ok(out)
}

/// Settings for the descent loop. eta_init orders the step sizes as
/// (Lambda, B, C, U).
#[derive(Debug, Clone)]
pub struct ReductionConfig {
    /// Expected reduced dimension per layer; checked against the
    /// initializers' shapes when nonempty.
    pub ranks: Vec<usize>,
    pub l: Horizon,
    pub eta_init: [f64; 4],
    pub c1: f64,
    pub rho: f64,
    pub k_max: usize,
    pub grad_tol: f64,
    pub stability_margin: f64,
    pub max_backtracks: usize,
}

impl ReductionConfig {
    /// Defaults everything but the ranks and horizon.
    pub fn new(ranks: Vec<usize>, l: Horizon) -> Self {
        ReductionConfig {
            ranks,
            l,
            eta_init: [1.0, 1.0, 1.0, 1.0],
            c1: 1e-4,
            rho: 0.5,
            k_max: 20,
            grad_tol: 1e-8,
            stability_margin: STABILITY_MARGIN,
            max_backtracks: 60,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            return Err(Error::Domain(alloc::format!(
                "c1 must lie in (0, 1), got {}",
                self.c1
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Domain(alloc::format!(
                "rho must lie in (0, 1), got {}",
                self.rho
            )));
        }
        if self.eta_init.iter().any(|e| !(*e > 0.0) || !flt::is_finite(*e)) {
            return Err(Error::Domain("every eta_init entry must be positive".into()));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::Domain("grad_tol must be nonnegative".into()));
        }
        if self.stability_margin < STABILITY_MARGIN || self.stability_margin >= 1.0 {
            return Err(Error::Domain(alloc::format!(
                "stability margin must lie in [{STABILITY_MARGIN}, 1), got {}",
                self.stability_margin
            )));
        }
        Ok(())
    }
}

/// Why the descent loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Completed k_max accepted iterations.
    MaxIters,
    /// Aggregate gradient norm fell below grad_tol.
    GradTol,
    /// max_backtracks retries could not produce an acceptable step.
    Stalled,
}

/// One report row: the state at the start of iteration `iter` and the
/// step taken from it (the final row describes the terminal state).
#[derive(Debug, Clone)]
pub struct IterationRow {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub backtracks: usize,
    /// Step sizes in effect for the accepted step, (Lambda, B, C, U).
    pub step_scales: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct ReductionReport {
    pub rows: Vec<IterationRow>,
    pub final_objective: f64,
    pub termination: Termination,
}

fn propose(
    roms: &[LqoSystem],
    grads: &[GradientSet],
    eta: &[f64; 4],
    margin: f64,
) -> Result<Option<Vec<LqoSystem>>> {
    let mut out = Vec::with_capacity(roms.len());
    for (rom, g) in roms.iter().zip(grads) {
        let lambda: Vec<Complex64> = rom
            .lambda()
            .iter()
            .zip(&g.d_lambda)
            .map(|(l, d)| l - d * eta[0])
            .collect();
        // stability guard before any construction
        if lambda.iter().any(|z| z.norm() > 1.0 - margin) {
            return Ok(None);
        }
        let b = rom.b() - &g.d_b.scale(Complex64::new(eta[1], 0.0));
        let c = rom.c() - &g.d_c.scale(Complex64::new(eta[2], 0.0));
        let u = rom
            .u()
            .iter()
            .zip(&g.d_u)
            .map(|(uj, duj)| uj - &duj.scale(Complex64::new(eta[3], 0.0)))
            .collect();
        out.push(LqoSystem::new(lambda, b, c, u)?);
    }
    Ok(Some(out))
}

/// Armijo gradient descent over all layers at once.
///
/// Each outer iteration resets eta to eta_init, computes the gradients,
/// and proposes theta - eta .* grad. A proposal whose eigenvalues leave
/// the stability disk shrinks eta_Lambda alone; a stable proposal that
/// misses the sufficient-decrease test
///   f(new) <= f - c1 * (eta_L |gL|^2 + eta_B |gB|^2 + eta_C |gC|^2 + eta_U |gU|^2)
/// shrinks every eta by rho. Either retry counts toward max_backtracks;
/// exhausting them rejects the step and stops with "stalled".
pub fn reduce_gradient_descent(
    fulls: &[LqoSystem],
    init_roms: &[LqoSystem],
    gains: &[f64],
    config: &ReductionConfig,
) -> Result<(Vec<LqoSystem>, ReductionReport)> {
    config.validate()?;
    check_layer_counts(fulls, init_roms, gains)?;
    if !config.ranks.is_empty() {
        if config.ranks.len() != init_roms.len() {
            return Err(Error::Shape(alloc::format!(
                "{} ranks for {} layers",
                config.ranks.len(),
                init_roms.len()
            )));
        }
        for (i, (&r, rom)) in config.ranks.iter().zip(init_roms).enumerate() {
            if rom.state_dim() != r {
                return Err(Error::Shape(alloc::format!(
                    "layer {i}: initializer has dimension {}, config expects {r}",
                    rom.state_dim()
                )));
            }
        }
    }
    for (i, (full, rom)) in fulls.iter().zip(init_roms).enumerate() {
        if rom.state_dim() > full.state_dim() {
            return Err(Error::Shape(alloc::format!(
                "layer {i}: reduced dimension {} exceeds full dimension {}",
                rom.state_dim(),
                full.state_dim()
            )));
        }
        for (k, z) in rom.lambda().iter().enumerate() {
            let modulus = z.norm();
            if modulus > 1.0 - config.stability_margin {
                return Err(Error::Unstable { index: k, modulus });
            }
        }
    }

    let mut roms = init_roms.to_vec();
    let mut f_cur = objective_f(fulls, &roms, gains, config.l)?;
    let mut rows = Vec::new();

    for iter in 0..config.k_max {
        let grads = grad_objective(fulls, &roms, gains, config.l)?;
        let mut block_sums = [0.0_f64; 4];
        for g in &grads {
            let ns = g.block_norms_sq();
            for k in 0..4 {
                block_sums[k] += ns[k];
            }
        }
        let grad_norm = flt::sqrt(block_sums.iter().sum());
        if grad_norm < config.grad_tol {
            rows.push(IterationRow {
                iter,
                objective: f_cur,
                grad_norm,
                backtracks: 0,
                step_scales: config.eta_init,
            });
            return Ok((
                roms,
                ReductionReport {
                    rows,
                    final_objective: f_cur,
                    termination: Termination::GradTol,
                },
            ));
        }

        let mut eta = config.eta_init;
        let mut backtracks = 0usize;
        loop {
            match propose(&roms, &grads, &eta, config.stability_margin)? {
                None => {
                    // an eigenvalue stepped out of the disk
                    eta[0] *= config.rho;
                }
                Some(candidate) => {
                    let d_l = eta[0] * block_sums[0]
                        + eta[1] * block_sums[1]
                        + eta[2] * block_sums[2]
                        + eta[3] * block_sums[3];
                    let f_new = objective_f(fulls, &candidate, gains, config.l)?;
                    if f_new <= f_cur - config.c1 * d_l {
                        rows.push(IterationRow {
                            iter,
                            objective: f_cur,
                            grad_norm,
                            backtracks,
                            step_scales: eta,
                        });
                        roms = candidate;
                        f_cur = f_new;
                        break;
                    }
                    for e in eta.iter_mut() {
                        *e *= config.rho;
                    }
                }
            }
            backtracks += 1;
            if backtracks > config.max_backtracks {
                rows.push(IterationRow {
                    iter,
                    objective: f_cur,
                    grad_norm,
                    backtracks,
                    step_scales: eta,
                });
                return Ok((
                    roms,
                    ReductionReport {
                        rows,
                        final_objective: f_cur,
                        termination: Termination::Stalled,
                    },
                ));
            }
        }
    }

    // terminal row for the state reached after k_max accepted steps
    let grads = grad_objective(fulls, &roms, gains, config.l)?;
    let grad_norm = flt::sqrt(
        grads
            .iter()
            .map(|g| g.block_norms_sq().iter().sum::<f64>())
            .sum(),
    );
    rows.push(IterationRow {
        iter: config.k_max,
        objective: f_cur,
        grad_norm,
        backtracks: 0,
        step_scales: config.eta_init,
    });
    Ok((
        roms,
        ReductionReport {
            rows,
            final_objective: f_cur,
            termination: Termination::MaxIters,
        },
    ))
}

/// Keep the r modes with the largest estimated kernel-energy share
/// s_i = (|C e_i| + sum_j |U_j e_i|) * |e_i^T B| / sqrt(1 - |lambda_i|^2),
/// breaking score ties toward the lower mode index. The horizon is
/// accepted for signature uniformity; the score uses the infinite-
/// horizon mode energy.
pub fn init_mode_dominance(sys: &LqoSystem, r: usize, _l: Horizon) -> Result<LqoSystem> {
    let n = sys.state_dim();
    if r == 0 || r > n {
        return Err(Error::Shape(alloc::format!(
            "reduced dimension must lie in 1..={n}, got {r}"
        )));
    }
    let mut scored: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let col_c: f64 = (0..sys.output_dim())
                .map(|k| sys.c()[(k, i)].norm_sqr())
                .sum();
            let col_u: f64 = sys
                .u()
                .iter()
                .map(|uj| {
                    flt::sqrt((0..uj.rows()).map(|k| uj[(k, i)].norm_sqr()).sum::<f64>())
                })
                .sum();
            let row_b: f64 = (0..sys.input_dim())
                .map(|k| sys.b()[(i, k)].norm_sqr())
                .sum();
            let amp = 1.0 / flt::sqrt(1.0 - sys.lambda()[i].norm_sqr());
            let score = (flt::sqrt(col_c) + col_u) * flt::sqrt(row_b) * amp;
            (score, i)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    let keep: Vec<usize> = scored.iter().take(r).map(|&(_, i)| i).collect();
    let lambda = keep.iter().map(|&i| sys.lambda()[i]).collect();
    let b = CMat::from_fn(r, sys.input_dim(), |k, j| sys.b()[(keep[k], j)]);
    let c = CMat::from_fn(sys.output_dim(), r, |j, k| sys.c()[(j, keep[k])]);
    let u = sys
        .u()
        .iter()
        .map(|uj| CMat::from_fn(uj.rows(), r, |j, k| uj[(j, keep[k])]))
        .collect();
    LqoSystem::new(lambda, b, c, u)
}

/// Random stable reduced system: eigenvalues uniform in the disk of
/// radius 1 - delta - 0.05, B/C/U entries complex normal scaled
/// 1/sqrt(r). Deterministic per seed.
pub fn init_random_stable(r: usize, m: usize, p: usize, c: usize, seed: u64) -> Result<LqoSystem> {
    if r == 0 || m == 0 || p == 0 || c == 0 {
        return Err(Error::Shape(
            "all of r, m, p, c must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = 1.0 - STABILITY_MARGIN - 0.05;
    let scale = 1.0 / flt::sqrt(r as f64);
    let lambda = (0..r).map(|_| uniform_disk(&mut rng, radius)).collect();
    let b = CMat::from_fn(r, m, |_, _| complex_normal(&mut rng) * scale);
    let cm = CMat::from_fn(p, r, |_, _| complex_normal(&mut rng) * scale);
    let u = (0..p)
        .map(|_| CMat::from_fn(c, r, |_, _| complex_normal(&mut rng) * scale))
        .collect();
    LqoSystem::new(lambda, b, cm, u)
}

/// Optional deliberate defect for exercising the validator itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdMutation {
    None,
    /// Negate the analytic C-gradient before comparing.
    FlipGradCSign,
}

/// Worst relative disagreement per parameter block.
#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    pub d_lambda: f64,
    pub d_b: f64,
    pub d_c: f64,
    pub d_u: f64,
}

impl FdReport {
    pub fn max_rel_err(&self) -> f64 {
        flt::max(
            flt::max(self.d_lambda, self.d_b),
            flt::max(self.d_c, self.d_u),
        )
    }
}

/// Validate the analytic gradients of f against central finite
/// differences over every real and imaginary coordinate of every
/// reduced parameter, with unit per-layer gains.
pub fn finite_difference_check(
    fulls: &[LqoSystem],
    roms: &[LqoSystem],
    l: Horizon,
    step: f64,
) -> Result<FdReport> {
    finite_difference_check_mutated(fulls, roms, l, step, FdMutation::None)
}

/// The same check with an optional injected defect (mutation testing of
/// the validator: a sign flip must be caught with relative error ~2).
pub fn finite_difference_check_mutated(
    fulls: &[LqoSystem],
    roms: &[LqoSystem],
    l: Horizon,
    step: f64,
    mutation: FdMutation,
) -> Result<FdReport> {
    if !(step >= 1e-8 && step <= 1e-4) {
        return Err(Error::Domain(alloc::format!(
            "finite-difference step must lie in [1e-8, 1e-4], got {step}"
        )));
    }
    let gains = vec![1.0; fulls.len()];
    let analytic = grad_objective(fulls, roms, &gains, l)?;
    let mut report = FdReport {
        d_lambda: 0.0,
        d_b: 0.0,
        d_c: 0.0,
        d_u: 0.0,
    };
    for i in 0..fulls.len() {
        let layer_term = |rom: &LqoSystem| -> Result<f64> {
            Ok(flt::sqrt(h2l_error_sq(&fulls[i], rom, l)?))
        };
        let rom = &roms[i];
        let r = rom.state_dim();

        // lambda block
        let mut fd_lambda = Vec::with_capacity(r);
        for k in 0..r {
            let re = central_diff(step, |h| {
                let mut lam = rom.lambda().to_vec();
                lam[k] += Complex64::new(h, 0.0);
                layer_term(&with_lambda(rom, lam))
            })?;
            let im = central_diff(step, |h| {
                let mut lam = rom.lambda().to_vec();
                lam[k] += Complex64::new(0.0, h);
                layer_term(&with_lambda(rom, lam))
            })?;
            fd_lambda.push(Complex64::new(re, im));
        }
        report.d_lambda = flt::max(
            report.d_lambda,
            rel_err_vec(&analytic[i].d_lambda, &fd_lambda),
        );

        // B block
        let fd_b = fd_matrix(rom.b(), step, |mat| layer_term(&with_b(rom, mat)))?;
        report.d_b = flt::max(report.d_b, rel_err_mat(&analytic[i].d_b, &fd_b));

        // C block, optionally with the deliberate sign defect
        let fd_c = fd_matrix(rom.c(), step, |mat| layer_term(&with_c(rom, mat)))?;
        let ana_c = match mutation {
            FdMutation::None => analytic[i].d_c.clone(),
            FdMutation::FlipGradCSign => analytic[i].d_c.scale(Complex64::new(-1.0, 0.0)),
        };
        report.d_c = flt::max(report.d_c, rel_err_mat(&ana_c, &fd_c));

        // U block
        for j in 0..rom.output_dim() {
            let fd_u = fd_matrix(&rom.u()[j], step, |mat| {
                layer_term(&with_u(rom, j, mat))
            })?;
            report.d_u = flt::max(report.d_u, rel_err_mat(&analytic[i].d_u[j], &fd_u));
        }
    }
    Ok(report)
}

fn central_diff(step: f64, mut eval: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    Ok((eval(step)? - eval(-step)?) / (2.0 * step))
}

fn fd_matrix(
    base: &CMat,
    step: f64,
    mut eval: impl FnMut(CMat) -> Result<f64>,
) -> Result<CMat> {
    let mut out = CMat::zeros(base.rows(), base.cols());
    for i in 0..base.rows() {
        for j in 0..base.cols() {
            let re = {
                let mut plus = base.clone();
                plus[(i, j)] += Complex64::new(step, 0.0);
                let mut minus = base.clone();
                minus[(i, j)] -= Complex64::new(step, 0.0);
                (eval(plus)? - eval(minus)?) / (2.0 * step)
            };
            let im = {
                let mut plus = base.clone();
                plus[(i, j)] += Complex64::new(0.0, step);
                let mut minus = base.clone();
                minus[(i, j)] -= Complex64::new(0.0, step);
                (eval(plus)? - eval(minus)?) / (2.0 * step)
            };
            out[(i, j)] = Complex64::new(re, im);
        }
    }
    Ok(out)
}

fn with_lambda(rom: &LqoSystem, lambda: Vec<Complex64>) -> LqoSystem {
    LqoSystem::new(lambda, rom.b().clone(), rom.c().clone(), rom.u().to_vec())
        .expect("perturbed system stays valid for FD-sized steps")
}

fn with_b(rom: &LqoSystem, b: CMat) -> LqoSystem {
    LqoSystem::new(rom.lambda().to_vec(), b, rom.c().clone(), rom.u().to_vec())
        .expect("perturbed system stays valid")
}

fn with_c(rom: &LqoSystem, c: CMat) -> LqoSystem {
    LqoSystem::new(rom.lambda().to_vec(), rom.b().clone(), c, rom.u().to_vec())
        .expect("perturbed system stays valid")
}

fn with_u(rom: &LqoSystem, j: usize, uj: CMat) -> LqoSystem {
    let mut u = rom.u().to_vec();
    u[j] = uj;
    LqoSystem::new(rom.lambda().to_vec(), rom.b().clone(), rom.c().clone(), u)
        .expect("perturbed system stays valid")
}

fn rel_err_vec(a: &[Complex64], fd: &[Complex64]) -> f64 {
    let mut num = 0.0_f64;
    let mut den = 0.0_f64;
    for (x, y) in a.iter().zip(fd) {
        num = flt::max(num, (x - y).norm());
        den = flt::max(den, y.norm());
    }
    num / flt::max(den, 1e-10)
}

fn rel_err_mat(a: &CMat, fd: &CMat) -> f64 {
    let mut num = 0.0_f64;
    let mut den = 0.0_f64;
    for (x, y) in a.as_slice().iter().zip(fd.as_slice()) {
        num = flt::max(num, (x - y).norm());
        den = flt::max(den, y.norm());
    }
    num / flt::max(den, 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn hz(l: usize) -> Horizon {
        Horizon::new(l).unwrap()
    }

    #[test]
    fn t_star_zero_eigenvalues() {
        let x = CMat::from_rows(&[vec![c(1.0, 2.0), c(3.0, 0.0)], vec![c(0.0, 1.0), c(5.0, 5.0)]])
            .unwrap();
        let out = t_star_diag(&[c(0.0, 0.0), c(0.0, 0.0)], &x, hz(3)).unwrap();
        assert_eq!(out.norm_sqr(), 0.0);
    }

    #[test]
    fn t_star_horizon_one_is_identity() {
        let x = CMat::from_rows(&[vec![c(1.0, -1.0)]]).unwrap();
        let out = t_star_diag(&[c(0.3, 0.4)], &x, hz(1)).unwrap();
        assert_eq!(out[(0, 0)], x[(0, 0)]);
    }

    #[test]
    fn t_star_scalar_half_horizon_two() {
        // multiplier = conj(0.5)^0 conj(0.5)^1 + conj(0.5)^1 conj(0.5)^0 = 1
        let x = CMat::from_rows(&[vec![c(2.0, 1.0)]]).unwrap();
        let out = t_star_diag(&[c(0.5, 0.0)], &x, hz(2)).unwrap();
        assert!((out[(0, 0)] - x[(0, 0)]).norm() < 1e-15);
    }

    #[test]
    fn t_star_matches_literal_sum_near_coincident() {
        // two eigenvalues 1e-9 apart exercise the explicit-sum branch
        let l = 24;
        let a = c(0.7, 0.2);
        let b = a + c(1e-9, -1e-9);
        let pairs = [(a, a), (a, b), (b, a)];
        for (x, y) in pairs {
            let got = pair_power_sum(x.conj(), y.conj(), l);
            let mut want = c(0.0, 0.0);
            for k in 0..l {
                want += x.conj().powu(k) * y.conj().powu(l - 1 - k);
            }
            let scale = (l as f64) * x.norm().max(y.norm()).powi(l as i32 - 1);
            assert!(
                (got - want).norm() <= 1e-12 * scale.max(want.norm()),
                "x={x}, y={y}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn gradients_vanish_at_exact_match() {
        let sys = init_random_stable(3, 2, 2, 1, 5).unwrap();
        let grads = grad_objective(
            core::slice::from_ref(&sys),
            core::slice::from_ref(&sys),
            &[1.0],
            hz(12),
        )
        .unwrap();
        let total: f64 = grads[0].block_norms_sq().iter().sum();
        assert!(flt::sqrt(total) <= 1e-8, "norm = {}", flt::sqrt(total));
    }

    #[test]
    fn quadratic_channel_off_zeroes_m_gradient() {
        let mut full = init_random_stable(4, 2, 2, 1, 8).unwrap();
        let mut rom = init_random_stable(2, 2, 2, 1, 9).unwrap();
        full = with_u(&full, 0, CMat::zeros(1, 4));
        full = with_u(&full, 1, CMat::zeros(1, 4));
        rom = with_u(&rom, 0, CMat::zeros(1, 2));
        rom = with_u(&rom, 1, CMat::zeros(1, 2));
        let pg = grad_phi(&full, &rom, hz(10)).unwrap();
        for dm in &pg.d_m {
            assert!(dm.max_abs() < 1e-14);
        }
    }

    #[test]
    fn fd_check_passes_on_random_instance() {
        let fulls = vec![init_random_stable(5, 2, 2, 1, 21).unwrap()];
        let roms = vec![init_random_stable(3, 2, 2, 1, 22).unwrap()];
        let rep = finite_difference_check(&fulls, &roms, hz(12), 1e-6).unwrap();
        assert!(
            rep.max_rel_err() <= 1e-5,
            "lambda {} b {} c {} u {}",
            rep.d_lambda,
            rep.d_b,
            rep.d_c,
            rep.d_u
        );
    }

    #[test]
    fn fd_check_catches_flipped_c_sign() {
        let fulls = vec![init_random_stable(4, 2, 2, 1, 31).unwrap()];
        let roms = vec![init_random_stable(2, 2, 2, 1, 32).unwrap()];
        let rep = finite_difference_check_mutated(
            &fulls,
            &roms,
            hz(10),
            1e-6,
            FdMutation::FlipGradCSign,
        )
        .unwrap();
        assert!(rep.d_c > 1.0, "flipped sign went unnoticed: {}", rep.d_c);
    }

    #[test]
    fn fd_step_domain_enforced() {
        let fulls = vec![init_random_stable(2, 1, 1, 1, 1).unwrap()];
        let roms = vec![init_random_stable(1, 1, 1, 1, 2).unwrap()];
        assert!(matches!(
            finite_difference_check(&fulls, &roms, hz(4), 1e-2),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn doubling_gain_doubles_gradient() {
        let fulls = vec![init_random_stable(4, 2, 2, 1, 41).unwrap()];
        let roms = vec![init_random_stable(2, 2, 2, 1, 42).unwrap()];
        let g1 = grad_objective(&fulls, &roms, &[1.0], hz(8)).unwrap();
        let g2 = grad_objective(&fulls, &roms, &[2.0], hz(8)).unwrap();
        for (a, b) in g1[0].d_lambda.iter().zip(&g2[0].d_lambda) {
            assert!((b - a * 2.0).norm() < 1e-13 * b.norm().max(1.0));
        }
        let diff = &g2[0].d_b - &g1[0].d_b.scale(c(2.0, 0.0));
        assert!(diff.max_abs() < 1e-13);
    }

    #[test]
    fn descent_on_identical_init_stops_at_zero() {
        let sys = init_random_stable(3, 2, 2, 1, 51).unwrap();
        let fulls = vec![sys.clone()];
        let cfg = ReductionConfig::new(vec![3], hz(8));
        let (roms, report) =
            reduce_gradient_descent(&fulls, &[sys], &[1.0], &cfg).unwrap();
        assert_eq!(report.termination, Termination::GradTol);
        assert_eq!(report.rows.len(), 1);
        assert!(report.final_objective < 1e-7);
        assert_eq!(roms[0].state_dim(), 3);
    }

    #[test]
    fn descent_objective_is_nonincreasing() {
        let fulls = vec![
            init_random_stable(6, 2, 2, 1, 61).unwrap(),
            init_random_stable(6, 2, 2, 1, 62).unwrap(),
        ];
        let inits = vec![
            init_mode_dominance(&fulls[0], 2, hz(16)).unwrap(),
            init_mode_dominance(&fulls[1], 2, hz(16)).unwrap(),
        ];
        let mut cfg = ReductionConfig::new(vec![2, 2], hz(16));
        cfg.k_max = 8;
        let (roms, report) =
            reduce_gradient_descent(&fulls, &inits, &[1.0, 1.5], &cfg).unwrap();
        for w in report.rows.windows(2) {
            assert!(
                w[1].objective <= w[0].objective + 1e-12,
                "objective rose: {} -> {}",
                w[0].objective,
                w[1].objective
            );
        }
        for rom in &roms {
            for z in rom.lambda() {
                assert!(z.norm() <= 1.0 - STABILITY_MARGIN);
            }
        }
        assert!(report.final_objective <= report.rows[0].objective);
    }

    #[test]
    fn mode_dominance_full_rank_is_exact() {
        let sys = init_random_stable(4, 2, 2, 1, 71).unwrap();
        let init = init_mode_dominance(&sys, 4, hz(12)).unwrap();
        let phi = h2l_error_sq(&sys, &init, hz(12)).unwrap();
        let scale = h2l_norm_sq(&sys, hz(12)).unwrap();
        assert!(phi < 1e-12 * scale.max(1.0), "phi = {phi}");
    }

    #[test]
    fn mode_dominance_keeps_single_active_mode() {
        // only mode 1 is observable and reachable
        let sys = LqoSystem::new(
            vec![c(0.2, 0.0), c(0.5, 0.1)],
            CMat::from_rows(&[vec![c(0.0, 0.0)], vec![c(1.0, 0.0)]]).unwrap(),
            CMat::from_rows(&[vec![c(0.0, 0.0), c(2.0, 0.0)]]).unwrap(),
            vec![CMat::from_rows(&[vec![c(0.0, 0.0), c(0.3, 0.0)]]).unwrap()],
        )
        .unwrap();
        let init = init_mode_dominance(&sys, 1, hz(16)).unwrap();
        assert_eq!(init.lambda(), &[c(0.5, 0.1)]);
        let phi = h2l_error_sq(&sys, &init, hz(16)).unwrap();
        assert!(phi < 1e-14, "phi = {phi}");
    }

    #[test]
    fn random_init_is_deterministic_and_stable() {
        let a = init_random_stable(4, 3, 2, 2, 99).unwrap();
        let b = init_random_stable(4, 3, 2, 2, 99).unwrap();
        assert_eq!(a, b);
        for z in a.lambda() {
            assert!(z.norm() <= 0.95 - STABILITY_MARGIN + 1e-12);
        }
    }

    #[test]
    fn config_rejects_bad_rho() {
        let sys = init_random_stable(2, 1, 1, 1, 3).unwrap();
        let rom = init_random_stable(1, 1, 1, 1, 4).unwrap();
        let mut cfg = ReductionConfig::new(vec![1], hz(4));
        cfg.rho = 1.5;
        assert!(matches!(
            reduce_gradient_descent(&[sys], &[rom], &[1.0], &cfg),
            Err(Error::Domain(_))
        ));
    }
}
