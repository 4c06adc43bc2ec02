//! JSON model files.
//!
//! A model file is a JSON object
//!
//!   { "format_version": 1, "layers": [ <layer>, ... ] }
//!
//! where each layer carries one LQO system plus its LayerNorm constants:
//!
//!   lambda     n complex eigenvalues, each as [re, im]
//!   B          n x m complex matrix, rows of [re, im] pairs
//!   C          p x n complex matrix
//!   U          c complex factor matrices, each p x n (layers have p = m)
//!   ln_gamma1  m reals, LayerNorm scale
//!   ln_gamma2  m reals, LayerNorm shift
//!   ln_eps     positive real, LayerNorm epsilon
//!
//! Floats are written as shortest round-trip decimals, so save followed by
//! load reproduces every f64 bit for bit. All structural invariants (shape
//! agreement, eigenvalue stability margin, p = m) are enforced on load by
//! the core constructors; a file that violates them is rejected.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use ssmshrink_core::bound::LayerNormParams;
use ssmshrink_core::dssm::{DeepSsm, DssmLayer};
use ssmshrink_core::{CMat, LqoSystem};

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
pub struct LayerFile {
    pub lambda: Vec<[f64; 2]>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<[f64; 2]>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<[f64; 2]>>,
    #[serde(rename = "U")]
    pub u: Vec<Vec<Vec<[f64; 2]>>>,
    pub ln_gamma1: Vec<f64>,
    pub ln_gamma2: Vec<f64>,
    pub ln_eps: f64,
}

fn mat_to_rows(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.rows())
        .map(|i| m.row(i).iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

fn rows_to_mat(rows: &[Vec<[f64; 2]>], what: &str) -> Result<CMat, CliError> {
    let data: Vec<Vec<Complex64>> = rows
        .iter()
        .map(|r| r.iter().map(|&[re, im]| Complex64::new(re, im)).collect())
        .collect();
    CMat::from_rows(&data).map_err(|e| CliError::Usage(format!("{what}: {e}")))
}

pub fn from_model(model: &DeepSsm) -> ModelFile {
    let layers = model
        .layers()
        .iter()
        .map(|layer| {
            let sys = layer.system();
            let ln = layer.ln();
            LayerFile {
                lambda: sys.lambda().iter().map(|z| [z.re, z.im]).collect(),
                b: mat_to_rows(sys.b()),
                c: mat_to_rows(sys.c()),
                u: sys.u().iter().map(mat_to_rows).collect(),
                ln_gamma1: ln.gamma1().to_vec(),
                ln_gamma2: ln.gamma2().to_vec(),
                ln_eps: ln.eps(),
            }
        })
        .collect();
    ModelFile {
        format_version: FORMAT_VERSION,
        layers,
    }
}

pub fn to_model(file: &ModelFile) -> Result<DeepSsm, CliError> {
    if file.format_version != FORMAT_VERSION {
        return Err(CliError::Usage(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, lf) in file.layers.iter().enumerate() {
        let lambda: Vec<Complex64> = lf
            .lambda
            .iter()
            .map(|&[re, im]| Complex64::new(re, im))
            .collect();
        let b = rows_to_mat(&lf.b, &format!("layer {i} B"))?;
        let c = rows_to_mat(&lf.c, &format!("layer {i} C"))?;
        let mut u = Vec::with_capacity(lf.u.len());
        for (j, uj) in lf.u.iter().enumerate() {
            u.push(rows_to_mat(uj, &format!("layer {i} U[{j}]"))?);
        }
        let sys = LqoSystem::new(lambda, b, c, u)
            .map_err(|e| CliError::from_core(&format!("layer {i}"), e))?;
        let ln = LayerNormParams::new(lf.ln_gamma1.clone(), lf.ln_gamma2.clone(), lf.ln_eps)
            .map_err(|e| CliError::from_core(&format!("layer {i} LayerNorm"), e))?;
        layers.push(
            DssmLayer::new(sys, ln).map_err(|e| CliError::from_core(&format!("layer {i}"), e))?,
        );
    }
    DeepSsm::new(layers).map_err(|e| CliError::from_core("model", e))
}

pub fn save(path: &Path, model: &DeepSsm) -> Result<(), CliError> {
    let file = from_model(model);
    let mut text = serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::Usage(format!("serializing model: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::Usage(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<DeepSsm, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("reading {}: {e}", path.display())))?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("parsing {}: {e}", path.display())))?;
    to_model(&file)
}
