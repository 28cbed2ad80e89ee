//! Optimization-based quadrature: a rule for the design box, a rule for the
//! noise mixture, and a joint rule co-optimized from their tensor product.

mod bcd;
mod init;
mod nnls;

pub use bcd::{bcd_solve, BcdOptions, BcdOutcome, MomentProblem, NOISE_BOX_SIGMAS};
pub use init::{gauss_legendre, smolyak_gauss, tensor_gauss};
pub use nnls::nnls;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::basis::{basis_size, GramSchmidtBasis, LegendreBasis, PolynomialBasis, ProductBasis};
use crate::error::{Error, Result};

/// Points and nonnegative weights in design x noise space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureRule {
    pub design_dim: usize,
    pub noise_dim: usize,
    pub order: usize,
    /// Each point is the design block followed by the noise block.
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// l1 norm of the moment defect over all test functions of degree <= 2p.
    pub residual_l1: f64,
    /// Set when the rule could not be pruned below the theoretical upper bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.design_dim + self.noise_dim
    }

    pub fn design_part(&self, k: usize) -> &[f64] {
        &self.points[k][..self.design_dim]
    }

    pub fn noise_part(&self, k: usize) -> &[f64] {
        &self.points[k][self.design_dim..]
    }

    /// Recomputes the l1 moment defect against `problem`.
    pub fn recompute_residual(&self, problem: &MomentProblem) -> f64 {
        problem.residual_l1(&self.points, &self.weights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureOptions {
    /// Acceptance threshold on the l1 residual for every stage.
    pub tolerance_l1: f64,
    /// Squared-residual threshold for the design-box rule.
    pub design_residual_sq: f64,
    /// Squared-residual threshold for the noise rule.
    pub noise_residual_sq: f64,
    /// Points below `eager_ratio * max(w)` are dropped before greedy pruning.
    pub eager_ratio: f64,
    /// Noise candidates drawn per test function.
    pub candidate_factor: usize,
    /// Largest tensor Gauss grid before switching to a sparse grid.
    pub tensor_limit: usize,
    pub seed: u64,
    pub bcd: BcdOptions,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            tolerance_l1: 1e-6,
            design_residual_sq: 1e-16,
            noise_residual_sq: 1e-14,
            eager_ratio: 1e-6,
            candidate_factor: 10,
            tensor_limit: 10_000,
            seed: 2021,
            bcd: BcdOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Acceptance {
    l1: f64,
    squared: f64,
}

impl Acceptance {
    fn accepts(&self, outcome: &BcdOutcome) -> bool {
        outcome.residual_l1 <= self.l1 && outcome.residual_sq <= self.squared
    }

    /// Descent options that stop once the residual is a hundredth of both
    /// tolerances, since `l1 <= sqrt(n) * l2`.
    fn early_stop(&self, equations: usize, base: &BcdOptions) -> BcdOptions {
        let from_l1 = (0.01 * self.l1).powi(2) / equations.max(1) as f64;
        let floor = from_l1.min(1e-4 * self.squared).max(base.absolute_floor);
        BcdOptions {
            absolute_floor: floor,
            ..*base
        }
    }
}

/// Rule for the independent uniform design variables, exact up to degree `2p`.
pub fn design_rule(basis: &LegendreBasis, order: usize, opts: &QuadratureOptions) -> Result<QuadratureRule> {
    let d1 = basis.dim();
    let problem = MomentProblem::new(ProductBasis::new(Some(basis), None, 2 * order)?);
    let (ref_points, weights) = if (order + 1).checked_pow(d1 as u32).is_some_and(|n| n <= opts.tensor_limit) {
        tensor_gauss(d1, order + 1)
    } else {
        let (p, w) = smolyak_gauss(d1, order);
        (p, w.into_iter().map(|v| v.max(0.0)).collect())
    };
    let points: Vec<Vec<f64>> = ref_points
        .iter()
        .map(|t| {
            t.iter()
                .zip(basis.bounds())
                .map(|(t, &(lo, hi))| 0.5 * (lo + hi) + 0.5 * (hi - lo) * t)
                .collect()
        })
        .collect();
    let accept = Acceptance {
        l1: opts.tolerance_l1,
        squared: opts.design_residual_sq,
    };
    let rule = optimize_and_prune(&problem, &points, &weights, order, accept, opts, "design")?;
    info!("design rule: {} points, residual {:e}", rule.len(), rule.residual_l1);
    Ok(QuadratureRule {
        design_dim: d1,
        noise_dim: 0,
        ..rule
    })
}

/// Rule for the correlated noise measure, exact up to degree `2p`.
pub fn noise_rule(basis: &GramSchmidtBasis, order: usize, opts: &QuadratureOptions) -> Result<QuadratureRule> {
    let d2 = basis.dim();
    let problem = MomentProblem::new(ProductBasis::new(None, Some(basis), 2 * order)?);
    let count = opts.candidate_factor.max(1) * problem.equations();
    let points = basis.mixture().sample(count, opts.seed);
    let weights = vec![1.0 / count as f64; count];
    let accept = Acceptance {
        l1: opts.tolerance_l1,
        squared: opts.noise_residual_sq,
    };
    let rule = optimize_and_prune(&problem, &points, &weights, order, accept, opts, "noise")?;
    info!("noise rule: {} points, residual {:e}", rule.len(), rule.residual_l1);
    Ok(QuadratureRule {
        design_dim: 0,
        noise_dim: d2,
        ..rule
    })
}

/// Joint rule initialized from the tensor product of a design rule and a noise rule.
pub fn joint_rule(
    design: &QuadratureRule,
    noise: &QuadratureRule,
    design_basis: &LegendreBasis,
    noise_basis: &GramSchmidtBasis,
    order: usize,
    opts: &QuadratureOptions,
) -> Result<QuadratureRule> {
    if design.noise_dim != 0 || noise.design_dim != 0 {
        return Err(Error::invalid("joint rule expects a pure design rule and a pure noise rule"));
    }
    if design.design_dim != design_basis.dim() || noise.noise_dim != noise_basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: design_basis.dim() + noise_basis.dim(),
            got: design.design_dim + noise.noise_dim,
        });
    }
    let problem = joint_problem(design_basis, noise_basis, order)?;
    let mut points = Vec::with_capacity(design.len() * noise.len());
    let mut weights = Vec::with_capacity(design.len() * noise.len());
    for (xp, xw) in design.points.iter().zip(&design.weights) {
        for (np, nw) in noise.points.iter().zip(&noise.weights) {
            points.push(xp.iter().chain(np).copied().collect());
            weights.push(xw * nw);
        }
    }
    let accept = Acceptance {
        l1: opts.tolerance_l1,
        squared: f64::INFINITY,
    };
    let rule = optimize_and_prune(&problem, &points, &weights, order, accept, opts, "joint")?;
    info!(
        "joint rule: {} points (from {}), residual {:e}",
        rule.len(),
        points.len(),
        rule.residual_l1
    );
    Ok(QuadratureRule {
        design_dim: design.design_dim,
        noise_dim: noise.noise_dim,
        ..rule
    })
}

/// The degree-`2p` moment problem in the joint design x noise space.
pub fn joint_problem(design_basis: &LegendreBasis, noise_basis: &GramSchmidtBasis, order: usize) -> Result<MomentProblem> {
    Ok(MomentProblem::new(ProductBasis::new(
        Some(design_basis),
        Some(noise_basis),
        2 * order,
    )?))
}

/// Runs the full stage 1-3 pipeline.
pub fn build_joint_rule(
    design_basis: &LegendreBasis,
    noise_basis: &GramSchmidtBasis,
    order: usize,
    opts: &QuadratureOptions,
) -> Result<(QuadratureRule, QuadratureRule, QuadratureRule)> {
    let d = design_rule(design_basis, order, opts)?;
    let n = noise_rule(noise_basis, order, opts)?;
    let j = joint_rule(&d, &n, design_basis, noise_basis, order, opts)?;
    Ok((d, n, j))
}

fn optimize_and_prune(
    problem: &MomentProblem,
    points: &[Vec<f64>],
    weights: &[f64],
    order: usize,
    accept: Acceptance,
    opts: &QuadratureOptions,
    stage: &str,
) -> Result<QuadratureRule> {
    let first = bcd_solve(problem, points, weights, &opts.bcd)?;
    if !accept.accepts(&first) {
        return Err(Error::Quadrature(format!(
            "{stage} rule: residual l1 {:e} (squared {:e}) with {} points does not meet tolerance",
            first.residual_l1,
            first.residual_sq,
            points.len()
        )));
    }
    let rule = QuadratureRule {
        design_dim: 0,
        noise_dim: 0,
        order,
        points: first.points,
        weights: first.weights,
        residual_l1: first.residual_l1,
        warning: None,
    };
    prune_with(problem, rule, accept, opts)
}

/// Greedy point reduction at the default joint tolerance.
pub fn prune(problem: &MomentProblem, rule: QuadratureRule, opts: &QuadratureOptions) -> Result<QuadratureRule> {
    let accept = Acceptance {
        l1: opts.tolerance_l1,
        squared: f64::INFINITY,
    };
    prune_with(problem, rule, accept, opts)
}

fn prune_with(
    problem: &MomentProblem,
    mut rule: QuadratureRule,
    accept: Acceptance,
    opts: &QuadratureOptions,
) -> Result<QuadratureRule> {
    let dim = problem.dim();
    let order = rule.order;
    let lower = basis_size(dim, order);
    let upper = basis_size(dim, 2 * order);
    let bcd = accept.early_stop(problem.equations(), &opts.bcd);

    // eager removal of negligible weights
    let w_max = rule.weights.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..rule.len())
        .filter(|&k| rule.weights[k] >= opts.eager_ratio * w_max && rule.weights[k] > 0.0)
        .collect();
    if keep.len() < rule.len() && keep.len() >= lower {
        let pts: Vec<Vec<f64>> = keep.iter().map(|&k| rule.points[k].clone()).collect();
        let ws: Vec<f64> = keep.iter().map(|&k| rule.weights[k]).collect();
        let out = bcd_solve(problem, &pts, &ws, &bcd)?;
        if accept.accepts(&out) {
            rule.points = out.points;
            rule.weights = out.weights;
            rule.residual_l1 = out.residual_l1;
        }
    }

    // smallest weights go first, in batches that halve on failure
    let mut batch = ((rule.len().saturating_sub(lower)) / 2).max(1);
    while rule.len() > lower {
        batch = batch.min(rule.len() - lower);
        let mut order_by_weight: Vec<usize> = (0..rule.len()).collect();
        order_by_weight.sort_by(|&a, &b| rule.weights[a].total_cmp(&rule.weights[b]).then(a.cmp(&b)));
        let mut drop = vec![false; rule.len()];
        for &k in &order_by_weight[..batch] {
            drop[k] = true;
        }
        let pts: Vec<Vec<f64>> = (0..rule.len()).filter(|&k| !drop[k]).map(|k| rule.points[k].clone()).collect();
        let ws: Vec<f64> = (0..rule.len()).filter(|&k| !drop[k]).map(|k| rule.weights[k]).collect();
        let out = bcd_solve(problem, &pts, &ws, &bcd)?;
        if !accept.accepts(&out) {
            if batch == 1 {
                break;
            }
            batch /= 2;
            continue;
        }
        // zero-weight points left by NNLS go as well
        let keep: Vec<usize> = (0..out.weights.len()).filter(|&k| out.weights[k] > 0.0).collect();
        let keep = if keep.len() >= lower { keep } else { (0..out.weights.len()).collect() };
        rule.points = keep.iter().map(|&k| out.points[k].clone()).collect();
        rule.weights = keep.iter().map(|&k| out.weights[k]).collect();
        rule.residual_l1 = problem.residual_l1(&rule.points, &rule.weights);
    }

    if rule.len() > upper {
        let msg = format!(
            "pruning stopped at {} points, above the upper bound {upper}",
            rule.len()
        );
        warn!("{msg}");
        rule.warning = Some(msg);
    }
    Ok(rule)
}
