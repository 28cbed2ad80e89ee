//! Gaussian-mixture measure for correlated, non-Gaussian process variations.
//!
//! Besides density evaluation and seeded sampling, the mixture exposes exact
//! raw moments `E[xi^beta]`, which drive the Gram-Schmidt basis and the
//! noise-space quadrature targets.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::MultiIndexSet;
use crate::error::{Error, Result};

/// The generator used for every seeded stream in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MixtureSpec", into = "MixtureSpec")]
pub struct GaussianMixture {
    components: Vec<MixtureComponent>,
    // lower Cholesky factor per component
    factors: Vec<DMatrix<f64>>,
    // log of the normalizing constant per component
    log_norms: Vec<f64>,
    precisions: Vec<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureSpec {
    components: Vec<MixtureComponent>,
}

impl TryFrom<MixtureSpec> for GaussianMixture {
    type Error = Error;
    fn try_from(spec: MixtureSpec) -> Result<Self> {
        GaussianMixture::new(spec.components)
    }
}

impl From<GaussianMixture> for MixtureSpec {
    fn from(m: GaussianMixture) -> Self {
        MixtureSpec {
            components: m.components,
        }
    }
}

impl GaussianMixture {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::invalid("mixture needs at least one component"))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::invalid("mixture dimension must be at least 1"));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if components.iter().any(|c| !(c.weight >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "mixture weights must be nonnegative and sum to 1 (sum = {total})"
            )));
        }
        let mut factors = Vec::with_capacity(components.len());
        let mut log_norms = Vec::with_capacity(components.len());
        let mut precisions = Vec::with_capacity(components.len());
        for (c, comp) in components.iter().enumerate() {
            if comp.mean.len() != dim || comp.covariance.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: comp.mean.len().max(comp.covariance.len()),
                });
            }
            let mut cov = DMatrix::zeros(dim, dim);
            for (i, row) in comp.covariance.iter().enumerate() {
                if row.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: row.len(),
                    });
                }
                for (j, &v) in row.iter().enumerate() {
                    cov[(i, j)] = v;
                }
            }
            let scale = cov.diagonal().amax().max(f64::MIN_POSITIVE);
            if (&cov - cov.transpose()).amax() > 1e-12 * scale {
                return Err(Error::invalid(format!("covariance of component {c} is not symmetric")));
            }
            let min_eig = cov.clone().symmetric_eigenvalues().min();
            if !(min_eig > 0.0) {
                return Err(Error::invalid(format!(
                    "covariance of component {c} is not positive definite (min eigenvalue {min_eig})"
                )));
            }
            let chol = Cholesky::new(cov).ok_or_else(|| {
                Error::invalid(format!("covariance of component {c} has no Cholesky factor"))
            })?;
            let l = chol.l();
            let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            log_norms.push(-0.5 * (dim as f64 * (2.0 * std::f64::consts::PI).ln() + log_det));
            precisions.push(chol.inverse());
            factors.push(l);
        }
        Ok(Self {
            components,
            factors,
            log_norms,
            precisions,
        })
    }

    /// `1/2 N(mu, cov) + 1/2 N(-mu, cov)`, the shape used by all benchmark problems.
    pub fn symmetric_pair(mu: &[f64], cov: Vec<Vec<f64>>) -> Result<Self> {
        let neg: Vec<f64> = mu.iter().map(|v| -v).collect();
        Self::new(vec![
            MixtureComponent {
                weight: 0.5,
                mean: mu.to_vec(),
                covariance: cov.clone(),
            },
            MixtureComponent {
                weight: 0.5,
                mean: neg,
                covariance: cov,
            },
        ])
    }

    /// Single Gaussian component.
    pub fn gaussian(mean: &[f64], cov: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(vec![MixtureComponent {
            weight: 1.0,
            mean: mean.to_vec(),
            covariance: cov,
        }])
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn density(&self, xi: &[f64]) -> Result<f64> {
        let d = self.dim();
        if xi.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: xi.len(),
            });
        }
        let mut total = 0.0;
        for (c, comp) in self.components.iter().enumerate() {
            let diff = DVector::from_iterator(d, xi.iter().zip(&comp.mean).map(|(a, b)| a - b));
            let q = (&self.precisions[c] * &diff).dot(&diff);
            total += comp.weight * (self.log_norms[c] - 0.5 * q).exp();
        }
        Ok(total)
    }

    /// Draws one sample using `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.components.len() - 1;
        for (c, comp) in self.components.iter().enumerate() {
            acc += comp.weight;
            if u < acc {
                pick = c;
                break;
            }
        }
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let l = &self.factors[pick];
        let mean = &self.components[pick].mean;
        (0..d)
            .map(|i| mean[i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>())
            .collect()
    }

    /// `count` i.i.d. draws, reproducible for a given seed.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seeded_rng(seed);
        (0..count).map(|_| self.draw(&mut rng)).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d];
        for comp in &self.components {
            for i in 0..d {
                m[i] += comp.weight * comp.mean[i];
            }
        }
        m
    }

    /// Total covariance: weighted component covariance plus spread of the component means.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mu = self.mean();
        let mut cov = vec![vec![0.0; d]; d];
        for comp in &self.components {
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += comp.weight
                        * (comp.covariance[i][j]
                            + (comp.mean[i] - mu[i]) * (comp.mean[j] - mu[j]));
                }
            }
        }
        cov
    }

    /// Per-coordinate box covering every component's mean +/- `n_sigma` standard deviations.
    pub fn bounding_box(&self, n_sigma: f64) -> Vec<(f64, f64)> {
        (0..self.dim())
            .map(|i| {
                self.components.iter().fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(lo, hi), comp| {
                        let s = comp.covariance[i][i].sqrt();
                        (lo.min(comp.mean[i] - n_sigma * s), hi.max(comp.mean[i] + n_sigma * s))
                    },
                )
            })
            .collect()
    }

    /// `E[prod xi_i^beta_i]`.
    pub fn raw_moment(&self, beta: &[u32]) -> Result<f64> {
        if beta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: beta.len(),
            });
        }
        let degree: u32 = beta.iter().sum();
        let table = self.moment_table(degree as usize);
        Ok(table.get(beta).expect("index within table degree"))
    }

    /// All raw moments up to total degree `max_degree`.
    pub fn moment_table(&self, max_degree: usize) -> MomentTable {
        let indices = MultiIndexSet::total_order(self.dim(), max_degree).expect("dim >= 1");
        let mut values = vec![0.0; indices.len()];
        let mut comp_moments = vec![0.0; indices.len()];
        for comp in &self.components {
            gaussian_moments(&indices, &comp.mean, &comp.covariance, &mut comp_moments);
            for (v, m) in values.iter_mut().zip(&comp_moments) {
                *v += comp.weight * m;
            }
        }
        MomentTable { indices, values }
    }
}

/// Raw moments of one Gaussian via
/// `m_{b+e_i} = mu_i m_b + sum_j cov_ij b_j m_{b-e_j}`.
fn gaussian_moments(indices: &MultiIndexSet, mean: &[f64], cov: &[Vec<f64>], out: &mut [f64]) {
    let d = indices.dim();
    out[0] = 1.0;
    let mut b = vec![0u32; d];
    for k in 1..indices.len() {
        let beta = indices.get(k);
        let i = beta.iter().position(|&e| e > 0).expect("nonzero index");
        b.copy_from_slice(beta);
        b[i] -= 1;
        let mut v = mean[i] * out[indices.position(&b).expect("lower degree present")];
        for j in 0..d {
            if b[j] > 0 {
                b[j] -= 1;
                v += cov[i][j] * (b[j] + 1) as f64 * out[indices.position(&b).expect("present")];
                b[j] += 1;
            }
        }
        out[k] = v;
    }
}

#[derive(Debug, Clone)]
pub struct MomentTable {
    indices: MultiIndexSet,
    values: Vec<f64>,
}

impl MomentTable {
    pub fn get(&self, beta: &[u32]) -> Option<f64> {
        self.indices.position(beta).map(|k| self.values[k])
    }

    pub fn max_degree(&self) -> usize {
        self.indices.order()
    }
}
