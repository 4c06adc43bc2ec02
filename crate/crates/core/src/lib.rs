//! Time-limited h2 model-order reduction for deep stacks of
//! discrete-time complex linear-quadratic-output (LQO) state-space
//! layers.
//!
//! The crate covers: simulation and Volterra kernels of single LQO
//! layers, finite-horizon h2 norms and output errors via diagonal Stein
//! equations, layer-normalized deep stacks, a-priori output-error upper
//! bounds, and a stability-guarded gradient-descent reduction of every
//! layer at once.
//!
//! The library is no_std + alloc; the companion command-line crate adds
//! file formats and orchestration on top.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bound;
pub mod cmatrix;
pub mod dssm;
pub mod error;
mod flt;
pub mod lqo;
pub mod rand_util;
pub mod reduce;
pub mod signal;
pub mod stein;

pub use cmatrix::CMat;
pub use error::{Error, Result};
pub use lqo::{LqoSystem, STABILITY_MARGIN};
pub use signal::{Horizon, Signal};
