//! Polynomial-chaos surrogates fitted by projection onto the joint basis.

use serde::{Deserialize, Serialize};

use crate::basis::{GramSchmidtBasis, LegendreBasis, PolynomialBasis, ProductBasis};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;

/// `y_i(x, xi) ~ sum c_{alpha,beta} Phi_alpha(x) Psi_beta(xi)` for each metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SurrogateRepr", into = "SurrogateRepr")]
pub struct SurrogateModel {
    basis: ProductBasis,
    names: Vec<String>,
    // one vector per metric, indexed like `basis`
    coefficients: Vec<Vec<f64>>,
    simulation_count: usize,
    residual_l1: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SurrogateRepr {
    order: usize,
    design: LegendreBasis,
    noise: GramSchmidtBasis,
    simulation_count: usize,
    residual_l1: f64,
    metrics: Vec<MetricRepr>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricRepr {
    name: String,
    terms: Vec<TermRepr>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermRepr {
    alpha: Vec<u32>,
    beta: Vec<u32>,
    value: f64,
}

impl TryFrom<SurrogateRepr> for SurrogateModel {
    type Error = Error;
    fn try_from(r: SurrogateRepr) -> Result<Self> {
        let basis = ProductBasis::new(Some(&r.design), Some(&r.noise), r.order)?;
        let d1 = basis.design_dim();
        let mut names = Vec::with_capacity(r.metrics.len());
        let mut coefficients = Vec::with_capacity(r.metrics.len());
        for metric in r.metrics {
            if metric.terms.len() != basis.len() {
                return Err(Error::invalid(format!(
                    "metric '{}' has {} terms, expected {}",
                    metric.name,
                    metric.terms.len(),
                    basis.len()
                )));
            }
            let mut c = vec![f64::NAN; basis.len()];
            for term in metric.terms {
                let joint: Vec<u32> = term.alpha.iter().chain(&term.beta).copied().collect();
                let k = (term.alpha.len() == d1)
                    .then(|| basis.indices().position(&joint))
                    .flatten()
                    .ok_or_else(|| {
                        Error::invalid(format!("metric '{}': term {:?}/{:?} outside the basis", metric.name, term.alpha, term.beta))
                    })?;
                c[k] = term.value;
            }
            if c.iter().any(|v| v.is_nan()) {
                return Err(Error::invalid(format!("metric '{}' repeats a term", metric.name)));
            }
            names.push(metric.name);
            coefficients.push(c);
        }
        Ok(Self {
            basis,
            names,
            coefficients,
            simulation_count: r.simulation_count,
            residual_l1: r.residual_l1,
        })
    }
}

impl From<SurrogateModel> for SurrogateRepr {
    fn from(m: SurrogateModel) -> Self {
        let d1 = m.basis.design_dim();
        let metrics = m
            .names
            .iter()
            .zip(&m.coefficients)
            .map(|(name, c)| MetricRepr {
                name: name.clone(),
                terms: m
                    .basis
                    .indices()
                    .iter()
                    .zip(c)
                    .map(|(joint, &value)| TermRepr {
                        alpha: joint[..d1].to_vec(),
                        beta: joint[d1..].to_vec(),
                        value,
                    })
                    .collect(),
            })
            .collect();
        SurrogateRepr {
            order: m.order(),
            design: m.design_basis().clone(),
            noise: m.noise_basis().clone(),
            simulation_count: m.simulation_count,
            residual_l1: m.residual_l1,
            metrics,
        }
    }
}

impl SurrogateModel {
    /// Projects simulator outputs (one row per rule point, one column per
    /// metric) onto the joint basis of total order `rule.order`.
    pub fn fit(
        rule: &QuadratureRule,
        design: &LegendreBasis,
        noise: &GramSchmidtBasis,
        names: &[String],
        outputs: &[Vec<f64>],
    ) -> Result<Self> {
        let basis = ProductBasis::new(Some(design), Some(noise), rule.order)?;
        if rule.design_dim != basis.design_dim() || rule.noise_dim != basis.noise_dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: rule.dim(),
            });
        }
        if outputs.len() != rule.len() {
            return Err(Error::DimensionMismatch {
                expected: rule.len(),
                got: outputs.len(),
            });
        }
        for (index, (point, row)) in rule.points.iter().zip(outputs).enumerate() {
            if row.len() != names.len() {
                return Err(Error::DimensionMismatch {
                    expected: names.len(),
                    got: row.len(),
                });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteOutput {
                    index,
                    point: point.clone(),
                    detail: format!("metric '{}' = {}", names[j], row[j]),
                });
            }
        }
        let n = basis.len();
        let mut coefficients = vec![vec![0.0; n]; names.len()];
        let mut phi = vec![0.0; n];
        for ((point, row), &w) in rule.points.iter().zip(outputs).zip(&rule.weights) {
            basis.evaluate_into(point, &mut phi);
            for (c, &y) in coefficients.iter_mut().zip(row) {
                for (ck, &pk) in c.iter_mut().zip(&phi) {
                    *ck += y * pk * w;
                }
            }
        }
        Ok(Self {
            basis,
            names: names.to_vec(),
            coefficients,
            simulation_count: rule.len(),
            residual_l1: rule.residual_l1,
        })
    }

    /// Builds a model from explicit coefficients, one vector per metric in
    /// joint-basis order.
    pub fn from_coefficients(
        design: &LegendreBasis,
        noise: &GramSchmidtBasis,
        order: usize,
        names: Vec<String>,
        coefficients: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let basis = ProductBasis::new(Some(design), Some(noise), order)?;
        if names.len() != coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                got: coefficients.len(),
            });
        }
        if let Some(c) = coefficients.iter().find(|c| c.len() != basis.len()) {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: c.len(),
            });
        }
        Ok(Self {
            basis,
            names,
            coefficients,
            simulation_count: 0,
            residual_l1: 0.0,
        })
    }

    pub fn basis(&self) -> &ProductBasis {
        &self.basis
    }

    pub fn design_basis(&self) -> &LegendreBasis {
        self.basis.design().expect("surrogate has a design block")
    }

    pub fn noise_basis(&self) -> &GramSchmidtBasis {
        self.basis.noise().expect("surrogate has a noise block")
    }

    pub fn order(&self) -> usize {
        self.basis.indices().order()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn metric_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coefficients(&self, metric: usize) -> &[f64] {
        &self.coefficients[metric]
    }

    /// Coefficient of `Phi_alpha Psi_beta`, if the pair is in the basis.
    pub fn coefficient(&self, metric: usize, alpha: &[u32], beta: &[u32]) -> Option<f64> {
        let joint: Vec<u32> = alpha.iter().chain(beta).copied().collect();
        self.basis.indices().position(&joint).map(|k| self.coefficients[metric][k])
    }

    pub fn simulation_count(&self) -> usize {
        self.simulation_count
    }

    pub fn residual_l1(&self) -> f64 {
        self.residual_l1
    }

    pub fn evaluate(&self, metric: usize, x: &[f64], xi: &[f64]) -> f64 {
        self.evaluate_all(x, xi)[metric]
    }

    /// All metrics at one joint point.
    pub fn evaluate_all(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let point: Vec<f64> = x.iter().chain(xi).copied().collect();
        let mut phi = vec![0.0; self.basis.len()];
        self.basis.evaluate_into(&point, &mut phi);
        self.coefficients
            .iter()
            .map(|c| c.iter().zip(&phi).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Coefficients over the design basis of `E_xi[y](x)`.
    pub fn mean_in_x(&self, metric: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.design_basis().len()];
        for (k, &(a, b)) in self.basis.pairs().iter().enumerate() {
            if b == 0 {
                out[a] = self.coefficients[metric][k];
            }
        }
        out
    }

    /// Inner polynomials `v_beta(x)` over the design basis, one per noise
    /// index `beta != 0`, with `var_xi[y](x) = sum v_beta(x)^2`.
    pub fn variance_in_x(&self, metric: usize) -> Vec<Vec<f64>> {
        let n_design = self.design_basis().len();
        let mut out = vec![vec![0.0; n_design]; self.noise_basis().len() - 1];
        for (k, &(a, b)) in self.basis.pairs().iter().enumerate() {
            if b > 0 {
                out[b - 1][a] = self.coefficients[metric][k];
            }
        }
        out
    }

    pub fn mean_at(&self, metric: usize, x: &[f64]) -> Result<f64> {
        let phi = self.design_basis().evaluate(x)?;
        Ok(dot(&self.mean_in_x(metric), &phi))
    }

    pub fn variance_at(&self, metric: usize, x: &[f64]) -> Result<f64> {
        let phi = self.design_basis().evaluate(x)?;
        Ok(self.variance_in_x(metric).iter().map(|v| dot(v, &phi).powi(2)).sum())
    }

    /// Sum of squared coefficients, the model's second moment over x and xi.
    pub fn second_moment(&self, metric: usize) -> f64 {
        self.coefficients[metric].iter().map(|c| c * c).sum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussmix::GaussianMixture;
    use approx::assert_abs_diff_eq;

    fn bases() -> (LegendreBasis, GramSchmidtBasis) {
        let s = 1e-4;
        let m = GaussianMixture::symmetric_pair(&[0.01, 0.01], vec![vec![s, 0.75 * s], vec![0.75 * s, s]]).unwrap();
        (
            LegendreBasis::new(&[(-1.0, 1.0); 2], 2).unwrap(),
            GramSchmidtBasis::new(&m, 2).unwrap(),
        )
    }

    fn model(c: &[(usize, f64)]) -> SurrogateModel {
        let (d, n) = bases();
        let len = ProductBasis::new(Some(&d), Some(&n), 2).unwrap().len();
        let mut v = vec![0.0; len];
        for &(k, x) in c {
            v[k] = x;
        }
        SurrogateModel::from_coefficients(&d, &n, 2, vec!["y".into()], vec![v]).unwrap()
    }

    #[test]
    fn constant_and_zero_models() {
        let zero = model(&[]);
        let one = model(&[(0, 1.0)]);
        for (x, xi) in [([0.2, -0.7], [0.01, 0.0]), ([1.0, 1.0], [-0.03, 0.02])] {
            assert_eq!(zero.evaluate(0, &x, &xi), 0.0);
            assert_abs_diff_eq!(one.evaluate(0, &x, &xi), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn noise_only_term_has_unit_mean_and_fixed_variance() {
        // joint index of (alpha, beta) = ((0,0), (1,0)) is 3 in graded-lex order
        let m = model(&[(0, 1.0), (3, 2.0)]);
        assert_eq!(m.coefficient(0, &[0, 0], &[1, 0]), Some(2.0));
        let mean = m.mean_in_x(0);
        assert_eq!(mean[0], 1.0);
        assert!(mean[1..].iter().all(|&v| v == 0.0));
        assert_abs_diff_eq!(m.variance_at(0, &[0.3, -0.2]).unwrap(), 4.0, epsilon = 1e-14);
    }

    #[test]
    fn deterministic_model_has_zero_variance() {
        let m = model(&[(0, 1.0), (1, 0.5), (2, -0.3), (5, 0.8)]);
        assert_eq!(m.variance_at(0, &[0.1, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn variance_inner_polynomials_respect_degree() {
        let (d, n) = bases();
        let len = ProductBasis::new(Some(&d), Some(&n), 2).unwrap().len();
        let m = SurrogateModel::from_coefficients(&d, &n, 2, vec!["y".into()], vec![vec![1.0; len]]).unwrap();
        let inner = m.variance_in_x(0);
        for (b, v) in inner.iter().enumerate() {
            let noise_deg = n.indices().degree(b + 1);
            for (a, &c) in v.iter().enumerate() {
                let deg = d.indices().degree(a);
                assert_eq!(c != 0.0, deg + noise_deg <= 2);
            }
        }
    }

    #[test]
    fn serde_roundtrip() {
        let m = model(&[(0, 1.5), (4, -0.25), (14, 3.0)]);
        let text = serde_json::to_string(&m).unwrap();
        let back: SurrogateModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back.coefficients(0), m.coefficients(0));
        assert_eq!(back.names(), m.names());
    }

    #[test]
    fn serde_rejects_missing_terms() {
        let m = model(&[(0, 1.0)]);
        let mut v: serde_json::Value = serde_json::to_value(&m).unwrap();
        v["metrics"][0]["terms"].as_array_mut().unwrap().pop();
        assert!(serde_json::from_value::<SurrogateModel>(v).is_err());
    }

    #[test]
    fn non_finite_output_names_point() {
        let (d, n) = bases();
        let rule = QuadratureRule {
            design_dim: 2,
            noise_dim: 2,
            order: 2,
            points: vec![vec![0.0, 0.0, 0.0, 0.0], vec![0.5, 0.5, 0.01, 0.02]],
            weights: vec![0.5, 0.5],
            residual_l1: 1.0,
            warning: None,
        };
        let err = SurrogateModel::fit(&rule, &d, &n, &["y".into()], &[vec![1.0], vec![f64::NAN]]).unwrap_err();
        match err {
            Error::NonFiniteOutput { index, point, .. } => {
                assert_eq!(index, 1);
                assert_eq!(point, vec![0.5, 0.5, 0.01, 0.02]);
            }
            e => panic!("unexpected {e}"),
        }
    }
}
