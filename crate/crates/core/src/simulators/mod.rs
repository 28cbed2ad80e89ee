//! Built-in black-box simulators and the external-process protocol.

mod external;
pub mod metrics;
mod microring;
mod mzi;
mod synthetic;

pub use external::{ExternalCommand, ExternalSimulator};
pub use microring::{Microring, MICRORING_FSR_GHZ};
pub use mzi::{Mzi, MZI_FSR_GHZ};
pub use synthetic::Synthetic;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frequency points per FSR for the photonic simulators.
pub const SPECTRUM_POINTS: usize = 2001;

/// A deterministic map `(x, xi) -> metrics`.
pub trait Simulator: Send + Sync {
    fn design_bounds(&self) -> Vec<(f64, f64)>;

    fn noise_dim(&self) -> usize;

    fn metric_names(&self) -> Vec<String>;

    fn metric_units(&self) -> Vec<String> {
        vec![String::new(); self.metric_names().len()]
    }

    fn simulate(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>>;

    /// Simulates every `(x, xi)` row; errors carry the row index.
    fn simulate_batch(&self, rows: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<Vec<f64>>> {
        rows.par_iter()
            .enumerate()
            .map(|(index, (x, xi))| {
                self.simulate(x, xi).map_err(|e| match e {
                    Error::Simulation { .. } => e,
                    other => Error::Simulation {
                        index,
                        detail: other.to_string(),
                    },
                })
            })
            .collect()
    }

    /// Port spectra for photonic devices.
    fn spectrum(&self, _x: &[f64], _xi: &[f64]) -> Option<Result<SpectralResponse>> {
        None
    }
}

pub(crate) fn check_dims(x: &[f64], xi: &[f64], d1: usize, d2: usize) -> Result<()> {
    if x.len() != d1 {
        return Err(Error::DimensionMismatch {
            expected: d1,
            got: x.len(),
        });
    }
    if xi.len() != d2 {
        return Err(Error::DimensionMismatch {
            expected: d2,
            got: xi.len(),
        });
    }
    Ok(())
}

/// Power transmission of a two-port device over one FSR, in GHz relative to
/// the band center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResponse {
    pub frequencies: Vec<f64>,
    pub through: Vec<f64>,
    /// Drop port for rings, cross port for the MZI.
    pub drop: Vec<f64>,
}

impl SpectralResponse {
    /// `n` equally spaced frequencies covering `[-fsr/2, fsr/2]`.
    pub fn grid(fsr: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| -0.5 * fsr + fsr * k as f64 / (n - 1) as f64).collect()
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some(k) = self
            .through
            .iter()
            .zip(&self.drop)
            .position(|(a, b)| !a.is_finite() || !b.is_finite())
        {
            return Err(Error::Metric(format!(
                "non-finite transmission at {} GHz",
                self.frequencies[k]
            )));
        }
        Ok(())
    }

    /// Largest `|through + drop - 1|` over the grid.
    pub fn unitarity_defect(&self) -> f64 {
        self.through
            .iter()
            .zip(&self.drop)
            .map(|(a, b)| (a + b - 1.0).abs())
            .fold(0.0, f64::max)
    }
}
