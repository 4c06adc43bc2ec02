//! Time horizons and finite discrete-time signals.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flt;

/// Validated horizon length L >= 1.
///
/// Horizons are capped so that elementwise eigenvalue powers fit a u32
/// exponent; anything near that cap is far outside sensible use anyway.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Horizon(usize);

impl Horizon {
    pub const MAX: usize = u32::MAX as usize;

    pub fn new(l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::Domain("horizon must be at least 1".into()));
        }
        if l > Self::MAX {
            return Err(Error::Domain(alloc::format!(
                "horizon {l} exceeds the supported maximum {}",
                Self::MAX
            )));
        }
        Ok(Horizon(l))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub(crate) fn as_u32(self) -> u32 {
        self.0 as u32
    }
}

/// A length-L sequence of width-m complex sample vectors, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    width: usize,
    data: Vec<Complex64>,
}

impl Signal {
    /// Zero signal with `len` samples of the given width.
    pub fn zeros(len: usize, width: usize) -> Self {
        Signal {
            width,
            data: vec![Complex64::new(0.0, 0.0); len * width],
        }
    }

    /// Build from per-sample rows; all rows must share one width >= 1.
    pub fn from_samples(samples: &[Vec<Complex64>]) -> Result<Self> {
        if samples.is_empty() || samples[0].is_empty() {
            return Err(Error::Shape("signal must have at least one sample and channel".into()));
        }
        let width = samples[0].len();
        let mut data = Vec::with_capacity(samples.len() * width);
        for (k, s) in samples.iter().enumerate() {
            if s.len() != width {
                return Err(Error::Shape(alloc::format!(
                    "sample {k} has width {}, expected {width}",
                    s.len()
                )));
            }
            data.extend_from_slice(s);
        }
        Ok(Signal {
            width,
            data,
        })
    }

    /// Build a real-valued signal from per-sample real rows.
    pub fn from_real_samples(samples: &[Vec<f64>]) -> Result<Self> {
        let complex: Vec<Vec<Complex64>> = samples
            .iter()
            .map(|row| row.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Signal::from_samples(&complex)
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.data.len() / self.width
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Channels per sample.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Sample k as a slice of width entries.
    pub fn sample(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.width..(k + 1) * self.width]
    }

    pub fn sample_mut(&mut self, k: usize) -> &mut [Complex64] {
        &mut self.data[k * self.width..(k + 1) * self.width]
    }

    /// True when every entry has exactly zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    /// l2_L norm: sqrt of the summed squared sample norms.
    pub fn norm_l2(&self) -> f64 {
        flt::sqrt(self.data.iter().map(|z| z.norm_sqr()).sum())
    }

    /// Largest per-sample Euclidean norm.
    pub fn norm_linf(&self) -> f64 {
        (0..self.len()).fold(0.0, |m, k| {
            flt::max(m, flt::sqrt(crate::cmatrix::vec_norm_sqr(self.sample(k))))
        })
    }

    /// Entrywise difference; widths and lengths must match.
    pub fn sub(&self, other: &Signal) -> Result<Signal> {
        if self.width != other.width || self.len() != other.len() {
            return Err(Error::Shape(alloc::format!(
                "signal shapes differ: {}x{} vs {}x{}",
                self.len(),
                self.width,
                other.len(),
                other.width
            )));
        }
        Ok(Signal {
            width: self.width,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    /// First `l` samples as a new signal; errors when fewer are present.
    pub fn truncate(&self, l: Horizon) -> Result<Signal> {
        if self.len() < l.get() {
            return Err(Error::Shape(alloc::format!(
                "signal has {} samples, horizon needs {}",
                self.len(),
                l.get()
            )));
        }
        Ok(Signal {
            width: self.width,
            data: self.data[..l.get() * self.width].to_vec(),
        })
    }
}
