use num_complex::Complex64;

use super::metrics::{attenuation, crosstalk, passband, to_db};
use super::{check_dims, Simulator, SpectralResponse, SPECTRUM_POINTS};
use crate::error::{Error, Result};

pub const MZI_FSR_GHZ: f64 = 1000.0;
const GAP_DECAY_NM: f64 = 260.0;
const GAP_CLAMP_NM: (f64, f64) = (10.0, 600.0);

/// Third-order Mach-Zehnder lattice: three directional couplers separated by
/// two equal arm imbalances. Design variables are the coupler gaps in nm,
/// with field coupling `exp(-g / 260)`; the noise adds to the gaps.
#[derive(Debug, Clone, Copy)]
pub struct Mzi {
    pub points: usize,
}

impl Default for Mzi {
    fn default() -> Self {
        Self { points: SPECTRUM_POINTS }
    }
}

impl Mzi {
    pub fn coupling(gap_nm: f64) -> f64 {
        (-gap_nm.clamp(GAP_CLAMP_NM.0, GAP_CLAMP_NM.1) / GAP_DECAY_NM).exp()
    }

    /// Complex (bar, cross) amplitudes for unit input on the first port.
    pub fn amplitudes(kappas: &[f64], freq: f64) -> (Complex64, Complex64) {
        let i = Complex64::i();
        let delay = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * freq / MZI_FSR_GHZ);
        let couple = |k: f64, (a, b): (Complex64, Complex64)| {
            let t = (1.0 - k * k).sqrt();
            (a * t + b * i * k, a * i * k + b * t)
        };
        let mut v = couple(kappas[0], (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)));
        for &k in &kappas[1..] {
            v = couple(k, (v.0 * delay, v.1));
        }
        v
    }

    pub fn response_for_couplings(&self, kappas: &[f64]) -> Result<SpectralResponse> {
        let frequencies = SpectralResponse::grid(MZI_FSR_GHZ, self.points);
        let (through, drop) = frequencies
            .iter()
            .map(|&f| {
                let (bar, cross) = Self::amplitudes(kappas, f);
                (bar.norm_sqr(), cross.norm_sqr())
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

    pub fn response(&self, x: &[f64], xi: &[f64]) -> Result<SpectralResponse> {
        check_dims(x, xi, 3, 3)?;
        let kappas: Vec<f64> = x.iter().zip(xi).map(|(g, e)| Self::coupling(g + e)).collect();
        self.response_for_couplings(&kappas)
    }
}

impl Simulator for Mzi {
    fn design_bounds(&self) -> Vec<(f64, f64)> {
        vec![(100.0, 300.0); 3]
    }

    fn noise_dim(&self) -> usize {
        3
    }

    fn metric_names(&self) -> Vec<String> {
        vec!["bw".into(), "xt".into(), "alpha".into()]
    }

    fn metric_units(&self) -> Vec<String> {
        vec!["GHz".into(), "dB".into(), "dB".into()]
    }

    fn simulate(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        let r = self.response(x, xi)?;
        let db = to_db(&r.drop);
        let out = vec![
            passband(&r.frequencies, &db)?.bandwidth(),
            crosstalk(&r.frequencies, &db)?,
            attenuation(&db)?,
        ];
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Metric(format!("non-finite MZI metrics {out:?}")));
        }
        Ok(out)
    }

    fn spectrum(&self, x: &[f64], xi: &[f64]) -> Option<Result<SpectralResponse>> {
        Some(self.response(x, xi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn coupling_law() {
        assert_abs_diff_eq!(Mzi::coupling(260.0), (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(Mzi::coupling(260.0), 0.367879, epsilon = 1e-6);
        assert_eq!(Mzi::coupling(5.0), Mzi::coupling(10.0));
    }

    #[test]
    fn vanishing_coupling_is_identity() {
        let r = Mzi::default().response_for_couplings(&[0.0; 3]).unwrap();
        assert!(r.drop.iter().all(|&c| c == 0.0));
        assert!(r.through.iter().all(|&b| (b - 1.0).abs() < 1e-15));
    }
}
