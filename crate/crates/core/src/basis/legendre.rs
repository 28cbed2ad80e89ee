use serde::{Deserialize, Serialize};

use super::{MultiIndexSet, PolynomialBasis};
use crate::error::{Error, Result};

/// Tensor-product Legendre polynomials, orthonormal under the uniform
/// probability density on a box.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "LegendreRepr", into = "LegendreRepr")]
pub struct LegendreBasis {
    bounds: Vec<(f64, f64)>,
    indices: MultiIndexSet,
    // phi_{k+1} = a_k t phi_k - b_k phi_{k-1}
    recurrence: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LegendreRepr {
    bounds: Vec<(f64, f64)>,
    order: usize,
}

impl TryFrom<LegendreRepr> for LegendreBasis {
    type Error = Error;
    fn try_from(r: LegendreRepr) -> Result<Self> {
        LegendreBasis::new(&r.bounds, r.order)
    }
}

impl From<LegendreBasis> for LegendreRepr {
    fn from(b: LegendreBasis) -> Self {
        LegendreRepr {
            order: b.indices.order(),
            bounds: b.bounds,
        }
    }
}

impl LegendreBasis {
    pub fn new(bounds: &[(f64, f64)], order: usize) -> Result<Self> {
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid(format!(
                    "design interval {i} must satisfy lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        let indices = MultiIndexSet::total_order(bounds.len(), order)?;
        let recurrence = (0..order.max(1))
            .map(|k| {
                let k = k as f64;
                let a = ((2.0 * k + 1.0) * (2.0 * k + 3.0)).sqrt() / (k + 1.0);
                let b = if k == 0.0 {
                    0.0
                } else {
                    k / (k + 1.0) * ((2.0 * k + 3.0) / (2.0 * k - 1.0)).sqrt()
                };
                (a, b)
            })
            .collect();
        Ok(Self {
            bounds: bounds.to_vec(),
            indices,
            recurrence,
        })
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn order(&self) -> usize {
        self.indices.order()
    }

    /// Same box, different order.
    pub fn with_order(&self, order: usize) -> Self {
        Self::new(&self.bounds, order).expect("bounds already validated")
    }

    /// Maps a design point into `[-1, 1]^d`.
    pub fn to_reference(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.bounds)
            .map(|(&v, &(lo, hi))| (2.0 * v - lo - hi) / (hi - lo))
            .collect()
    }

    /// Orthonormal 1-D values `phi_0..phi_order` at reference coordinate `t`.
    pub fn univariate(&self, t: f64, values: &mut [f64], derivs: Option<&mut [f64]>) {
        let p = self.order();
        values[0] = 1.0;
        if p >= 1 {
            values[1] = 3f64.sqrt() * t;
        }
        for k in 1..p {
            let (a, b) = self.recurrence[k];
            values[k + 1] = a * t * values[k] - b * values[k - 1];
        }
        if let Some(d) = derivs {
            d[0] = 0.0;
            if p >= 1 {
                d[1] = 3f64.sqrt();
            }
            for k in 1..p {
                let (a, b) = self.recurrence[k];
                d[k + 1] = a * (values[k] + t * d[k]) - b * d[k - 1];
            }
        }
    }

    fn tables(&self, x: &[f64], with_derivs: bool) -> (Vec<f64>, Vec<f64>) {
        let p1 = self.order() + 1;
        let d = self.dim();
        let mut vals = vec![0.0; d * p1];
        let mut ders = vec![0.0; if with_derivs { d * p1 } else { 0 }];
        for i in 0..d {
            let (lo, hi) = self.bounds[i];
            let t = (2.0 * x[i] - lo - hi) / (hi - lo);
            if with_derivs {
                let scale = 2.0 / (hi - lo);
                let (v, dv) = (&mut vals[i * p1..(i + 1) * p1], &mut ders[i * p1..(i + 1) * p1]);
                self.univariate(t, v, Some(dv));
                dv.iter_mut().for_each(|g| *g *= scale);
            } else {
                self.univariate(t, &mut vals[i * p1..(i + 1) * p1], None);
            }
        }
        (vals, ders)
    }
}

impl PolynomialBasis for LegendreBasis {
    fn indices(&self) -> &MultiIndexSet {
        &self.indices
    }

    fn evaluate_into(&self, point: &[f64], out: &mut [f64]) {
        let p1 = self.order() + 1;
        let (vals, _) = self.tables(point, false);
        for (k, alpha) in self.indices.iter().enumerate() {
            out[k] = alpha
                .iter()
                .enumerate()
                .map(|(i, &a)| vals[i * p1 + a as usize])
                .product();
        }
    }

    fn gradient_into(&self, point: &[f64], values: &mut [f64], grad: &mut [f64]) {
        let p1 = self.order() + 1;
        let d = self.dim();
        let (vals, ders) = self.tables(point, true);
        for (k, alpha) in self.indices.iter().enumerate() {
            values[k] = alpha
                .iter()
                .enumerate()
                .map(|(i, &a)| vals[i * p1 + a as usize])
                .product();
            for i in 0..d {
                let mut g = ders[i * p1 + alpha[i] as usize];
                for (l, &a) in alpha.iter().enumerate() {
                    if l != i {
                        g *= vals[l * p1 + a as usize];
                    }
                }
                grad[k * d + i] = g;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn first_order_on_reference_interval() {
        let b = LegendreBasis::new(&[(-1.0, 1.0)], 1).unwrap();
        let v = b.evaluate(&[0.4]).unwrap();
        assert_eq!(v[0], 1.0);
        assert_abs_diff_eq!(v[1], 3f64.sqrt() * 0.4, epsilon = 1e-15);
        let z = LegendreBasis::new(&[(-1.0, 1.0)], 0).unwrap();
        assert_eq!(z.evaluate(&[0.3]).unwrap(), vec![1.0]);
    }

    #[test]
    fn endpoint_and_odd_symmetry() {
        let b = LegendreBasis::new(&[(-1.0, 1.0)], 6).unwrap();
        let at_one = b.evaluate(&[1.0]).unwrap();
        for (k, v) in at_one.iter().enumerate() {
            assert_abs_diff_eq!(*v, ((2 * k + 1) as f64).sqrt(), epsilon = 1e-12);
        }
        let at_zero = b.evaluate(&[0.0]).unwrap();
        assert_eq!(at_zero[0], 1.0);
        for k in (1..=5).step_by(2) {
            assert_eq!(at_zero[k], 0.0);
        }
        assert_abs_diff_eq!(at_zero[2], -5f64.sqrt() / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn orthonormal_under_gauss_quadrature() {
        // 8-point Gauss-Legendre integrates degree <= 15 exactly
        let (nodes, weights) = crate::quadrature::gauss_legendre(8);
        let b = LegendreBasis::new(&[(0.3, 0.6)], 6).unwrap();
        let mut gram = vec![vec![0.0; 7]; 7];
        for (t, w) in nodes.iter().zip(&weights) {
            let x = 0.45 + 0.15 * t;
            let v = b.evaluate(&[x]).unwrap();
            for i in 0..7 {
                for j in 0..7 {
                    gram[i][j] += 0.5 * w * v[i] * v[j];
                }
            }
        }
        for i in 0..7 {
            for j in 0..7 {
                assert_abs_diff_eq!(gram[i][j], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn monte_carlo_orthonormality_microring_box() {
        let b = LegendreBasis::new(&[(0.3, 0.6); 4], 2).unwrap();
        let n = b.len();
        let mut rng = crate::gaussmix::seeded_rng(7);
        let samples = 1_000_000;
        let mut gram = vec![0.0; n * n];
        let mut v = vec![0.0; n];
        for _ in 0..samples {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.3..0.6)).collect();
            b.evaluate_into(&x, &mut v);
            for i in 0..n {
                for j in 0..n {
                    gram[i * n + j] += v[i] * v[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let g = gram[i * n + j] / samples as f64;
                let target = if i == j { 1.0 } else { 0.0 };
                // 1e-3 is about 1.4 standard errors for the heaviest diagonal terms; use 5e-3
                assert!((g - target).abs() < 5e-3, "({i},{j}) = {g}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let b = LegendreBasis::new(&[(0.3, 0.6), (-2.0, 5.0), (100.0, 300.0)], 4).unwrap();
        let x = [0.41, 1.3, 222.0];
        let n = b.len();
        let mut vals = vec![0.0; n];
        let mut grad = vec![0.0; n * 3];
        b.gradient_into(&x, &mut vals, &mut grad);
        for i in 0..3 {
            let h = 1e-6 * (b.bounds()[i].1 - b.bounds()[i].0);
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let (vp, vm) = (b.evaluate(&xp).unwrap(), b.evaluate(&xm).unwrap());
            for k in 0..n {
                let fd = (vp[k] - vm[k]) / (2.0 * h);
                assert!((fd - grad[k * 3 + i]).abs() < 1e-5 * (1.0 + fd.abs()), "k={k} i={i}");
            }
        }
    }

    #[test]
    fn rejects_degenerate_interval_and_wrong_dim() {
        assert!(LegendreBasis::new(&[(1.0, 1.0)], 2).is_err());
        let b = LegendreBasis::new(&[(0.0, 1.0)], 2).unwrap();
        assert!(b.evaluate(&[0.1, 0.2]).is_err());
    }
}
