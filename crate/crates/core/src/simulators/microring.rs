use num_complex::Complex64;

use super::metrics::{extinction_ratio, passband, roughness, to_db};
use super::{check_dims, Simulator, SpectralResponse, SPECTRUM_POINTS};
use crate::error::{Error, Result};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
const GROUP_INDEX: f64 = 4.19;
const RING_RADIUS_M: f64 = 10e-6;
const COUPLING_CLAMP: (f64, f64) = (1e-3, 1.0 - 1e-3);

/// Free spectral range `c / (n_g L)` of a 10 um lossless ring, in GHz.
pub const MICRORING_FSR_GHZ: f64 = SPEED_OF_LIGHT / (GROUP_INDEX * 2.0 * std::f64::consts::PI * RING_RADIUS_M) / 1e9;

type M2 = [[Complex64; 2]; 2];

fn mul(a: &M2, b: &M2) -> M2 {
    let mut c = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Three identical rings coupled in series between an input and a drop bus.
///
/// Each coupler maps the (in, out) field pair on one guide to the pair on
/// the next guide; each half ring adds phase `theta / 2` with
/// `theta = 2 pi f / FSR`. Design variables are the four field coupling
/// coefficients, perturbed additively by the noise.
#[derive(Debug, Clone, Copy)]
pub struct Microring {
    pub points: usize,
}

impl Default for Microring {
    fn default() -> Self {
        Self { points: SPECTRUM_POINTS }
    }
}

impl Microring {
    pub fn couplings(x: &[f64], xi: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(xi)
            .map(|(k, e)| (k + e).clamp(COUPLING_CLAMP.0, COUPLING_CLAMP.1))
            .collect()
    }

    /// Complex (through, drop) field amplitudes at one frequency for unit input.
    pub fn amplitudes(kappas: &[f64], freq: f64) -> (Complex64, Complex64) {
        let i = Complex64::i();
        let theta = 2.0 * std::f64::consts::PI * freq / MICRORING_FSR_GHZ;
        let h = Complex64::from_polar(1.0, 0.5 * theta);
        let ring: M2 = [[Complex64::new(0.0, 0.0), h], [h.inv(), Complex64::new(0.0, 0.0)]];
        let coupler = |k: f64| -> M2 {
            let t = (1.0 - k * k).sqrt();
            let s = (i * k).inv();
            [[s * -t, s], [-s, s * t]]
        };
        let mut m = coupler(kappas[0]);
        for &k in &kappas[1..] {
            m = mul(&ring, &m);
            m = mul(&coupler(k), &m);
        }
        (-m[0][0] / m[0][1], m[0][1].inv())
    }

    pub fn response(&self, x: &[f64], xi: &[f64]) -> Result<SpectralResponse> {
        check_dims(x, xi, 4, 4)?;
        let kappas = Self::couplings(x, xi);
        let frequencies = SpectralResponse::grid(MICRORING_FSR_GHZ, self.points);
        let (through, drop) = frequencies
            .iter()
            .map(|&f| {
                let (t, d) = Self::amplitudes(&kappas, f);
                (t.norm_sqr(), d.norm_sqr())
            })
            .unzip();
        let r = SpectralResponse {
            frequencies,
            through,
            drop,
        };
        r.check_finite()?;
        Ok(r)
    }
}

impl Simulator for Microring {
    fn design_bounds(&self) -> Vec<(f64, f64)> {
        vec![(0.3, 0.6); 4]
    }

    fn noise_dim(&self) -> usize {
        4
    }

    fn metric_names(&self) -> Vec<String> {
        vec!["bw".into(), "re".into(), "sigma_pass".into()]
    }

    fn metric_units(&self) -> Vec<String> {
        vec!["GHz".into(), "dB".into(), "dB".into()]
    }

    fn simulate(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        let r = self.response(x, xi)?;
        let db = to_db(&r.drop);
        let band = passband(&r.frequencies, &db)?;
        let out = vec![
            band.bandwidth(),
            extinction_ratio(&r.frequencies, &db)?,
            roughness(&r.frequencies, &db)?,
        ];
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Metric(format!("non-finite ring metrics {out:?}")));
        }
        Ok(out)
    }

    fn spectrum(&self, x: &[f64], xi: &[f64]) -> Option<Result<SpectralResponse>> {
        Some(self.response(x, xi))
    }
}
