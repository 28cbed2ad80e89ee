//! Block coordinate descent for moment-matching quadrature.
//!
//! The residual is `r_j = sum_k w_k f_j(z_k) - t_j` over a set of test
//! functions `f_j`. Each outer iteration first re-solves the weights by NNLS
//! at fixed points, then moves the points by a damped Gauss-Newton step with
//! the weights fixed, projecting back into the admissible box.

use log::debug;
use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nnls::nnls;
use crate::basis::{PolynomialBasis, ProductBasis};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcdOptions {
    pub max_outer: usize,
    /// Stop when `(f_prev - f) <= rel_decrease * f_prev`.
    pub rel_decrease: f64,
    /// Stop once the squared residual falls below this.
    pub absolute_floor: f64,
    pub initial_damping: f64,
    pub max_damping_tries: usize,
    /// Stop when the squared residual has not fallen below `stall_ratio`
    /// times its value `stall_window` iterations earlier.
    pub stall_window: usize,
    pub stall_ratio: f64,
}

impl Default for BcdOptions {
    fn default() -> Self {
        Self {
            max_outer: 500,
            rel_decrease: 1e-10,
            absolute_floor: 1e-30,
            initial_damping: 1e-3,
            max_damping_tries: 30,
            stall_window: 50,
            stall_ratio: 0.5,
        }
    }
}

/// Moment-matching targets plus the admissible region for the points.
///
/// Points are optimized in normalized coordinates `z = (x - offset) / scale`.
/// The design block is confined to its box; the noise block to the mixture's
/// mean +/- 6 sigma bounding box.
#[derive(Debug, Clone)]
pub struct MomentProblem {
    basis: ProductBasis,
    targets: Vec<f64>,
    offset: Vec<f64>,
    scale: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

pub const NOISE_BOX_SIGMAS: f64 = 6.0;

impl MomentProblem {
    /// Test functions are every function of `basis`; targets are `E[f_j] = delta_{0j}`.
    pub fn new(basis: ProductBasis) -> Self {
        let mut offset = Vec::new();
        let mut scale = Vec::new();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        if let Some(d) = basis.design() {
            for &(lo, hi) in d.bounds() {
                offset.push(0.5 * (lo + hi));
                scale.push(0.5 * (hi - lo));
                lower.push(-1.0);
                upper.push(1.0);
            }
        }
        if let Some(n) = basis.noise() {
            let m = n.mixture();
            let mean = m.mean();
            let cov = m.covariance();
            for (i, (lo, hi)) in m.bounding_box(NOISE_BOX_SIGMAS).into_iter().enumerate() {
                let s = cov[i][i].sqrt();
                offset.push(mean[i]);
                scale.push(s);
                lower.push((lo - mean[i]) / s);
                upper.push((hi - mean[i]) / s);
            }
        }
        let mut targets = vec![0.0; basis.len()];
        targets[0] = 1.0;
        Self {
            basis,
            targets,
            offset,
            scale,
            lower,
            upper,
        }
    }

    pub fn basis(&self) -> &ProductBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn equations(&self) -> usize {
        self.targets.len()
    }

    /// Admissible raw-coordinate box for every coordinate.
    pub fn raw_bounds(&self) -> Vec<(f64, f64)> {
        (0..self.dim())
            .map(|i| {
                (
                    self.offset[i] + self.scale[i] * self.lower[i],
                    self.offset[i] + self.scale[i] * self.upper[i],
                )
            })
            .collect()
    }

    fn to_raw(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, v)| self.offset[i] + self.scale[i] * v)
            .collect()
    }

    fn to_normalized(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| ((v - self.offset[i]) / self.scale[i]).clamp(self.lower[i], self.upper[i]))
            .collect()
    }

    /// `M x N` matrix of test-function values at raw points.
    pub fn values(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let n = self.equations();
        let rows: Vec<Vec<f64>> = points
            .par_iter()
            .map(|p| {
                let mut v = vec![0.0; n];
                self.basis.evaluate_into(p, &mut v);
                v
            })
            .collect();
        DMatrix::from_fn(points.len(), n, |k, j| rows[k][j])
    }

    /// Moment defect `sum_k w_k f(x_k) - t`.
    pub fn residual(&self, points: &[Vec<f64>], weights: &[f64]) -> DVector<f64> {
        let f = self.values(points);
        residual_from(&f, weights, &self.targets)
    }

    pub fn residual_l1(&self, points: &[Vec<f64>], weights: &[f64]) -> f64 {
        self.residual(points, weights).iter().map(|v| v.abs()).sum()
    }
}

fn residual_from(values: &DMatrix<f64>, weights: &[f64], targets: &[f64]) -> DVector<f64> {
    let w = DVector::from_column_slice(weights);
    values.tr_mul(&w) - DVector::from_column_slice(targets)
}

#[derive(Debug, Clone)]
pub struct BcdOutcome {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub residual_sq: f64,
    pub residual_l1: f64,
    pub iterations: usize,
    /// Squared residual after each outer iteration.
    pub history: Vec<f64>,
}

/// Runs block coordinate descent from `points` (raw coordinates) and nonnegative `weights`.
pub fn bcd_solve(
    problem: &MomentProblem,
    points: &[Vec<f64>],
    weights: &[f64],
    opts: &BcdOptions,
) -> Result<BcdOutcome> {
    if points.len() != weights.len() {
        return Err(Error::invalid("points and weights differ in length"));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::invalid("initial weights must be nonnegative"));
    }
    let d = problem.dim();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: points.iter().map(|p| p.len()).find(|&l| l != d).unwrap_or(0),
        });
    }
    let targets = DVector::from_column_slice(&problem.targets);
    let mut z: Vec<Vec<f64>> = points.iter().map(|p| problem.to_normalized(p)).collect();
    let mut raw: Vec<Vec<f64>> = z.iter().map(|p| problem.to_raw(p)).collect();
    let mut w = weights.to_vec();
    let mut values = problem.values(&raw);
    let mut r = residual_from(&values, &w, &problem.targets);
    let mut f = r.norm_squared();
    check_finite(f)?;
    let mut damping = opts.initial_damping;
    let mut history = Vec::new();
    let mut iterations = 0;

    while iterations < opts.max_outer && f > opts.absolute_floor {
        iterations += 1;
        let f_prev = f;

        // weight step
        let w_new = nnls(&values.transpose(), &targets, Some(&w));
        let r_new = values.tr_mul(&w_new) - &targets;
        let f_new = r_new.norm_squared();
        if f_new <= f {
            w = w_new.iter().copied().collect();
            r = r_new;
            f = f_new;
        }

        // point step
        if f > opts.absolute_floor {
            let active: Vec<usize> = (0..w.len()).filter(|&k| w[k] > 0.0).collect();
            let jac = jacobian(problem, &raw, &w, &active);
            let step = DampedStep::new(&jac, &r);
            let mut improved = false;
            for _ in 0..opts.max_damping_tries {
                let delta = step.solve(damping);
                let Some(delta) = delta else {
                    damping *= 4.0;
                    continue;
                };
                let mut z_try = z.clone();
                for (a, &k) in active.iter().enumerate() {
                    for i in 0..d {
                        z_try[k][i] =
                            (z[k][i] + delta[a * d + i]).clamp(problem.lower[i], problem.upper[i]);
                    }
                }
                let raw_try: Vec<Vec<f64>> = z_try.iter().map(|p| problem.to_raw(p)).collect();
                let values_try = problem.values(&raw_try);
                let r_try = residual_from(&values_try, &w, &problem.targets);
                let f_try = r_try.norm_squared();
                if f_try.is_finite() && f_try < f {
                    z = z_try;
                    raw = raw_try;
                    values = values_try;
                    r = r_try;
                    f = f_try;
                    damping = (damping / 3.0).max(1e-15);
                    improved = true;
                    break;
                }
                damping *= 4.0;
            }
            if !improved {
                damping = opts.initial_damping;
            }
        }
        check_finite(f)?;
        history.push(f);
        if f_prev - f <= opts.rel_decrease * f_prev {
            break;
        }
        let n = history.len();
        if opts.stall_window > 0 && n > opts.stall_window && f > opts.stall_ratio * history[n - 1 - opts.stall_window] {
            break;
        }
    }
    debug!("bcd: {} points, {iterations} iterations, residual^2 {f:e}", w.len());
    let residual_l1 = r.iter().map(|v| v.abs()).sum();
    Ok(BcdOutcome {
        points: raw,
        weights: w,
        residual_sq: f,
        residual_l1,
        iterations,
        history,
    })
}

fn check_finite(f: f64) -> Result<()> {
    if f.is_finite() {
        Ok(())
    } else {
        Err(Error::Quadrature(format!("non-finite moment residual ({f})")))
    }
}

// N x (|active| * d): d r_j / d z_{k,i} = w_k * scale_i * d f_j / d x_i
fn jacobian(problem: &MomentProblem, raw: &[Vec<f64>], w: &[f64], active: &[usize]) -> DMatrix<f64> {
    let n = problem.equations();
    let d = problem.dim();
    let blocks: Vec<Vec<f64>> = active
        .par_iter()
        .map(|&k| {
            let mut vals = vec![0.0; n];
            let mut grad = vec![0.0; n * d];
            problem.basis.gradient_into(&raw[k], &mut vals, &mut grad);
            for j in 0..n {
                for i in 0..d {
                    grad[j * d + i] *= w[k] * problem.scale[i];
                }
            }
            grad
        })
        .collect();
    DMatrix::from_fn(n, active.len() * d, |j, c| {
        let (a, i) = (c / d, c % d);
        blocks[a][j * d + i]
    })
}

// Levenberg-Marquardt step; uses the N x N dual system when there are more
// unknowns than equations (minimum-norm step).
struct DampedStep {
    jac: DMatrix<f64>,
    normal: DMatrix<f64>,
    rhs: DVector<f64>,
    dual: bool,
    mean_diag: f64,
}

impl DampedStep {
    fn new(jac: &DMatrix<f64>, r: &DVector<f64>) -> Self {
        let dual = jac.ncols() >= jac.nrows();
        let (normal, rhs) = if dual {
            (jac * jac.transpose(), -r.clone())
        } else {
            (jac.tr_mul(jac), -jac.tr_mul(r))
        };
        let mean_diag = (normal.trace() / normal.nrows().max(1) as f64).max(f64::MIN_POSITIVE);
        Self {
            jac: jac.clone(),
            normal,
            rhs,
            dual,
            mean_diag,
        }
    }

    fn solve(&self, damping: f64) -> Option<DVector<f64>> {
        let mut m = self.normal.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += damping * self.mean_diag;
        }
        let chol = Cholesky::new(m)?;
        let y = chol.solve(&self.rhs);
        let step = if self.dual { self.jac.tr_mul(&y) } else { y };
        step.iter().all(|v| v.is_finite()).then_some(step)
    }
}
