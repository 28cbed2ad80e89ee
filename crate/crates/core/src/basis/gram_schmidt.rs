use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{MultiIndexSet, PolynomialBasis};
use crate::error::{Error, Result};
use crate::gaussmix::GaussianMixture;

const GRAM_TOLERANCE: f64 = 1e-10;
const NORM_FLOOR: f64 = 1e-12;

/// Polynomials orthonormal under a Gaussian-mixture density, obtained by
/// Gram-Schmidt on the monomials in graded-lex order.
///
/// Monomials are evaluated in per-coordinate scaled form `(xi_i / s_i)^k`
/// with `s_i = sqrt(E[xi_i^2])`. Scaling each monomial by a positive constant
/// leaves the Gram-Schmidt output unchanged and keeps the moment matrix well
/// conditioned for small variations. [`raw_coefficients`](Self::raw_coefficients)
/// reports the expansion over unscaled monomials.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GramSchmidtRepr", into = "GramSchmidtRepr")]
pub struct GramSchmidtBasis {
    mixture: GaussianMixture,
    indices: MultiIndexSet,
    scales: Vec<f64>,
    // row j holds Psi_j over scaled monomials; lower triangular
    coefficients: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GramSchmidtRepr {
    order: usize,
    mixture: GaussianMixture,
}

impl TryFrom<GramSchmidtRepr> for GramSchmidtBasis {
    type Error = Error;
    fn try_from(r: GramSchmidtRepr) -> Result<Self> {
        GramSchmidtBasis::new(&r.mixture, r.order)
    }
}

impl From<GramSchmidtBasis> for GramSchmidtRepr {
    fn from(b: GramSchmidtBasis) -> Self {
        GramSchmidtRepr {
            order: b.indices.order(),
            mixture: b.mixture,
        }
    }
}

impl GramSchmidtBasis {
    pub fn new(mixture: &GaussianMixture, order: usize) -> Result<Self> {
        let dim = mixture.dim();
        let indices = MultiIndexSet::total_order(dim, order)?;
        let table = mixture.moment_table(2 * order.max(1));
        let scales: Vec<f64> = (0..dim)
            .map(|i| {
                let mut e = vec![0u32; dim];
                e[i] = 2;
                table.get(&e).expect("second moments present").sqrt()
            })
            .collect();

        let n = indices.len();
        let mut moments = DMatrix::zeros(n, n);
        let mut beta = vec![0u32; dim];
        for i in 0..n {
            for j in 0..=i {
                let (a, b) = (indices.get(i), indices.get(j));
                let mut scale = 1.0;
                for k in 0..dim {
                    beta[k] = a[k] + b[k];
                    scale *= scales[k].powi(beta[k] as i32);
                }
                let m = table.get(&beta).expect("degree <= 2p") / scale;
                moments[(i, j)] = m;
                moments[(j, i)] = m;
            }
        }

        let mut coefficients = DMatrix::identity(n, n);
        orthonormalize(&mut coefficients, &moments)?;
        if gram_deviation(&coefficients, &moments) > GRAM_TOLERANCE {
            orthonormalize(&mut coefficients, &moments)?;
            let dev = gram_deviation(&coefficients, &moments);
            if dev > GRAM_TOLERANCE {
                return Err(Error::DegenerateMeasure(format!(
                    "Gram matrix deviates from identity by {dev:e} after re-orthogonalization"
                )));
            }
        }
        Ok(Self {
            mixture: mixture.clone(),
            indices,
            scales,
            coefficients,
        })
    }

    pub fn order(&self) -> usize {
        self.indices.order()
    }

    pub fn mixture(&self) -> &GaussianMixture {
        &self.mixture
    }

    /// Same measure, different order.
    pub fn with_order(&self, order: usize) -> Result<Self> {
        Self::new(&self.mixture, order)
    }

    /// `E[Psi_i Psi_j]` from the analytic mixture moments.
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let moments = self.scaled_moment_matrix();
        &self.coefficients * moments * self.coefficients.transpose()
    }

    fn scaled_moment_matrix(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let n = self.len();
        let table = self.mixture.moment_table(2 * self.order().max(1));
        let mut moments = DMatrix::zeros(n, n);
        let mut beta = vec![0u32; dim];
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (self.indices.get(i), self.indices.get(j));
                let mut scale = 1.0;
                for k in 0..dim {
                    beta[k] = a[k] + b[k];
                    scale *= self.scales[k].powi(beta[k] as i32);
                }
                moments[(i, j)] = table.get(&beta).expect("degree <= 2p") / scale;
            }
        }
        moments
    }

    /// Row `j` expresses `Psi_j` over the raw monomials `xi^beta` in graded-lex order.
    pub fn raw_coefficients(&self) -> DMatrix<f64> {
        let mut raw = self.coefficients.clone();
        for (k, beta) in self.indices.iter().enumerate() {
            let s: f64 = beta
                .iter()
                .zip(&self.scales)
                .map(|(&e, &s)| s.powi(e as i32))
                .product();
            raw.column_mut(k).unscale_mut(s);
        }
        raw
    }

    fn powers(&self, xi: &[f64]) -> Vec<f64> {
        let p1 = self.order() + 1;
        let mut pw = vec![1.0; self.dim() * p1];
        for i in 0..self.dim() {
            let z = xi[i] / self.scales[i];
            for e in 1..p1 {
                pw[i * p1 + e] = pw[i * p1 + e - 1] * z;
            }
        }
        pw
    }
}

/// Classical Gram-Schmidt over the rows of `coeffs` with inner product `moments`.
fn orthonormalize(coeffs: &mut DMatrix<f64>, moments: &DMatrix<f64>) -> Result<()> {
    let n = coeffs.nrows();
    for j in 0..n {
        let start = coeffs.row(j).clone_owned();
        // E[p_j Psi_i] for every finished row i < j
        let mp = moments * start.transpose();
        let mut row = start;
        for i in 0..j {
            let proj = coeffs.row(i).dot(&mp.transpose());
            row -= coeffs.row(i) * proj;
        }
        let norm2 = (&row * moments * row.transpose())[(0, 0)];
        if !(norm2 > NORM_FLOOR * NORM_FLOOR) {
            return Err(Error::DegenerateMeasure(format!(
                "basis function {j} has norm {:e}; the measure does not separate degree-{} monomials",
                norm2.max(0.0).sqrt(),
                n
            )));
        }
        coeffs.set_row(j, &(row / norm2.sqrt()));
    }
    Ok(())
}

fn gram_deviation(coeffs: &DMatrix<f64>, moments: &DMatrix<f64>) -> f64 {
    let g = coeffs * moments * coeffs.transpose();
    (g - DMatrix::identity(coeffs.nrows(), coeffs.nrows())).amax()
}

impl PolynomialBasis for GramSchmidtBasis {
    fn indices(&self) -> &MultiIndexSet {
        &self.indices
    }

    fn evaluate_into(&self, point: &[f64], out: &mut [f64]) {
        let p1 = self.order() + 1;
        let pw = self.powers(point);
        let mono: Vec<f64> = self
            .indices
            .iter()
            .map(|beta| {
                beta.iter()
                    .enumerate()
                    .map(|(i, &e)| pw[i * p1 + e as usize])
                    .product()
            })
            .collect();
        for j in 0..self.len() {
            let row = self.coefficients.row(j);
            out[j] = (0..=j).map(|k| row[k] * mono[k]).sum();
        }
    }

    fn gradient_into(&self, point: &[f64], values: &mut [f64], grad: &mut [f64]) {
        let p1 = self.order() + 1;
        let d = self.dim();
        let n = self.len();
        let pw = self.powers(point);
        let mut mono = vec![0.0; n];
        let mut dmono = vec![0.0; n * d];
        for (k, beta) in self.indices.iter().enumerate() {
            mono[k] = beta
                .iter()
                .enumerate()
                .map(|(i, &e)| pw[i * p1 + e as usize])
                .product();
            for i in 0..d {
                if beta[i] == 0 {
                    continue;
                }
                let mut g = beta[i] as f64 * pw[i * p1 + beta[i] as usize - 1] / self.scales[i];
                for (l, &e) in beta.iter().enumerate() {
                    if l != i {
                        g *= pw[l * p1 + e as usize];
                    }
                }
                dmono[k * d + i] = g;
            }
        }
        for j in 0..n {
            let row = self.coefficients.row(j);
            values[j] = (0..=j).map(|k| row[k] * mono[k]).sum();
            for i in 0..d {
                grad[j * d + i] = (0..=j).map(|k| row[k] * dmono[k * d + i]).sum();
            }
        }
    }
}
