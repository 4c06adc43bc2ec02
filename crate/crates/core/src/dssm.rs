//! Deep state-space stacks: LQO layer, real-part residual, LayerNorm.
//!
//! Layer i maps its real input sequence u^(i) to
//!
//! ```text
//!   y^(i) = LQO_i(u^(i)),  z^(i) = u^(i) + Re(y^(i)),
//!   u^(i+1) = LN_{gamma1,gamma2}(z^(i))
//! ```
//!
//! with u^(1) = s_in and s_out = u^(xi+1). Every layer shares the width
//! m and has LQO output dimension p = m so the residual adds elementwise.

use alloc::vec::Vec;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bound::{ln_apply, LayerNormParams};
use crate::cmatrix::CMat;
use crate::error::{Error, Result};
use crate::lqo::{simulate_recursive, LqoSystem, STABILITY_MARGIN};
use crate::rand_util::{complex_normal, real_normal, uniform_disk};
use crate::signal::{Horizon, Signal};

/// One stack entry: the LQO dynamics plus its LayerNorm parameters.
#[derive(Debug, Clone)]
pub struct DssmLayer {
    system: LqoSystem,
    ln: LayerNormParams,
}

impl DssmLayer {
    pub fn new(system: LqoSystem, ln: LayerNormParams) -> Result<Self> {
        let m = system.input_dim();
        if system.output_dim() != m {
            return Err(Error::Shape(alloc::format!(
                "layer system must have p = m, got p = {}, m = {m}",
                system.output_dim()
            )));
        }
        if ln.width() != m {
            return Err(Error::Shape(alloc::format!(
                "LayerNorm width {} does not match system width {m}",
                ln.width()
            )));
        }
        Ok(DssmLayer { system, ln })
    }

    pub fn system(&self) -> &LqoSystem {
        &self.system
    }

    pub fn ln(&self) -> &LayerNormParams {
        &self.ln
    }
}

/// A depth-xi stack of equal-width layers.
#[derive(Debug, Clone)]
pub struct DeepSsm {
    layers: Vec<DssmLayer>,
}

impl DeepSsm {
    pub fn new(layers: Vec<DssmLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("a deep stack needs at least one layer".into()));
        }
        let m = layers[0].system.input_dim();
        for (i, layer) in layers.iter().enumerate() {
            if layer.system.input_dim() != m {
                return Err(Error::Shape(alloc::format!(
                    "layer {i} has width {}, expected {m}",
                    layer.system.input_dim()
                )));
            }
        }
        Ok(DeepSsm { layers })
    }

    pub fn width(&self) -> usize {
        self.layers[0].system.input_dim()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[DssmLayer] {
        &self.layers
    }
}

/// Everything the forward pass saw: per-layer inputs u^(i) (real), raw
/// LQO outputs y^(i) (complex), and the final output s_out = u^(xi+1).
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub u_signals: Vec<Signal>,
    pub y_signals: Vec<Signal>,
    pub s_out: Signal,
}

/// Run the stack on the first L samples of a real input sequence.
pub fn forward(model: &DeepSsm, s_in: &Signal, l: Horizon) -> Result<ForwardTrace> {
    let m = model.width();
    if s_in.width() != m {
        return Err(Error::Shape(alloc::format!(
            "input width {} does not match stack width {m}",
            s_in.width()
        )));
    }
    if s_in.len() < l.get() {
        return Err(Error::Shape(alloc::format!(
            "input has {} samples, horizon needs {}",
            s_in.len(),
            l.get()
        )));
    }
    if !s_in.is_real() {
        return Err(Error::Domain(
            "stack inputs must be real (imaginary parts all zero)".into(),
        ));
    }
    let mut u_cur = s_in.truncate(l)?;
    let mut u_signals = Vec::with_capacity(model.depth());
    let mut y_signals = Vec::with_capacity(model.depth());
    for layer in &model.layers {
        let y = simulate_recursive(&layer.system, &u_cur, l)?;
        let mut u_next = Signal::zeros(l.get(), m);
        let mut z = Vec::with_capacity(m);
        for k in 0..l.get() {
            z.clear();
            let uk = u_cur.sample(k);
            let yk = y.sample(k);
            for j in 0..m {
                z.push(uk[j].re + yk[j].re);
            }
            let nk = ln_apply(&z, &layer.ln);
            let out = u_next.sample_mut(k);
            for j in 0..m {
                out[j] = Complex64::new(nk[j], 0.0);
            }
        }
        u_signals.push(u_cur);
        y_signals.push(y);
        u_cur = u_next;
    }
    Ok(ForwardTrace {
        u_signals,
        y_signals,
        s_out: u_cur,
    })
}

/// Deterministic synthetic stack: eigenvalues uniform in the disk of
/// radius 1 - delta - 0.05, B/C/U entries complex normal scaled 1/sqrt(n),
/// gamma1 uniform in [0.5, 1.5], gamma2 normal scaled 0.1.
pub fn synth_random_dssm(
    xi: usize,
    n: usize,
    m: usize,
    c: usize,
    seed: u64,
    ln_eps: f64,
) -> Result<DeepSsm> {
    if xi == 0 || n == 0 || m == 0 || c == 0 {
        return Err(Error::Shape(
            "depth, state dimension, width and quad rank must all be at least 1".into(),
        ));
    }
    if !(ln_eps > 0.0) {
        return Err(Error::Domain(alloc::format!(
            "ln_eps must be positive, got {ln_eps}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = 1.0 - STABILITY_MARGIN - 0.05;
    let scale = 1.0 / crate::flt::sqrt(n as f64);
    let mut layers = Vec::with_capacity(xi);
    for _ in 0..xi {
        let lambda: Vec<Complex64> = (0..n).map(|_| uniform_disk(&mut rng, radius)).collect();
        let b = CMat::from_fn(n, m, |_, _| complex_normal(&mut rng) * scale);
        let cmat = CMat::from_fn(m, n, |_, _| complex_normal(&mut rng) * scale);
        let u = (0..m)
            .map(|_| CMat::from_fn(c, n, |_, _| complex_normal(&mut rng) * scale))
            .collect();
        let system = LqoSystem::new(lambda, b, cmat, u)?;
        let gamma1: Vec<f64> = (0..m).map(|_| 0.5 + rng.gen::<f64>()).collect();
        let gamma2: Vec<f64> = (0..m).map(|_| 0.1 * real_normal(&mut rng)).collect();
        let ln = LayerNormParams::new(gamma1, gamma2, ln_eps)?;
        layers.push(DssmLayer::new(system, ln)?);
    }
    DeepSsm::new(layers)
}

/// Swap in reduced LQO systems, keeping each layer's LayerNorm.
pub fn build_reduced_dssm(full: &DeepSsm, roms: &[LqoSystem]) -> Result<DeepSsm> {
    if roms.len() != full.depth() {
        return Err(Error::Shape(alloc::format!(
            "expected {} reduced systems, got {}",
            full.depth(),
            roms.len()
        )));
    }
    let mut layers = Vec::with_capacity(roms.len());
    for (layer, rom) in full.layers.iter().zip(roms) {
        if rom.input_dim() != layer.system.input_dim()
            || rom.output_dim() != layer.system.output_dim()
        {
            return Err(Error::Shape(alloc::format!(
                "reduced system is {}x{} wide, full layer is {}x{}",
                rom.input_dim(),
                rom.output_dim(),
                layer.system.input_dim(),
                layer.system.output_dim()
            )));
        }
        layers.push(DssmLayer::new(rom.clone(), layer.ln.clone())?);
    }
    DeepSsm::new(layers)
}
