//! Multi-start augmented-Lagrangian solver for the box-constrained
//! polynomial program, plus an exhaustive grid oracle.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chance::ChanceProblem;
use crate::error::{Error, Result};
use crate::gaussmix::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub starts: usize,
    pub seed: u64,
    pub penalty: f64,
    pub penalty_growth: f64,
    pub inner_tolerance: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub feasibility: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            starts: 64,
            seed: 7,
            penalty: 10.0,
            penalty_growth: 5.0,
            inner_tolerance: 1e-8,
            max_outer: 50,
            max_inner: 5000,
            feasibility: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    /// Feasible, and the best value was reached from more than one start.
    Optimal,
    FeasibleLocal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub x_star: Vec<f64>,
    /// In the user's sense (a maximized objective is reported as its maximum).
    pub objective_value: f64,
    /// Largest scaled constraint value; `<= 0` is feasible.
    pub feasibility_residual: f64,
    pub status: SolveStatus,
    pub starts_used: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_agreement: Option<f64>,
}

impl SolveResult {
    pub fn is_feasible(&self) -> bool {
        self.status != SolveStatus::Infeasible
    }
}

// minimization-form candidate from one start
#[derive(Debug, Clone)]
struct Candidate {
    t: Vec<f64>,
    objective: f64,
    violation: f64,
}

/// Affine map between the design box and `[-1, 1]^d`.
struct Scaling {
    mid: Vec<f64>,
    half: Vec<f64>,
}

impl Scaling {
    fn new(bounds: &[(f64, f64)]) -> Self {
        Self {
            mid: bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect(),
            half: bounds.iter().map(|(a, b)| 0.5 * (b - a)).collect(),
        }
    }

    fn to_x(&self, t: &[f64]) -> Vec<f64> {
        t.iter()
            .zip(self.mid.iter().zip(&self.half))
            .map(|(t, (m, h))| m + h * t)
            .collect()
    }
}

fn project(t: &mut [f64]) {
    t.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
}

/// Augmented Lagrangian value and gradient in reference coordinates.
fn lagrangian(problem: &ChanceProblem, scaling: &Scaling, t: &[f64], lambda: &[f64], rho: f64) -> (f64, Vec<f64>) {
    let x = scaling.to_x(t);
    let e = problem.evaluate(&x);
    let mut value = e.objective;
    let mut grad = e.objective_grad;
    for ((g, row), &l) in e.constraints.iter().zip(&e.jacobian).zip(lambda) {
        let shifted = (l + rho * g).max(0.0);
        value += (shifted * shifted - l * l) / (2.0 * rho);
        if shifted > 0.0 {
            for (gi, ri) in grad.iter_mut().zip(row) {
                *gi += shifted * ri;
            }
        }
    }
    for (gi, h) in grad.iter_mut().zip(&scaling.half) {
        *gi *= h;
    }
    (value, grad)
}

fn projected_gradient_norm(t: &[f64], grad: &[f64]) -> f64 {
    t.iter()
        .zip(grad)
        .map(|(&ti, &gi)| ((ti - gi).clamp(-1.0, 1.0) - ti).abs())
        .fold(0.0, f64::max)
}

/// Nonmonotone spectral projected gradient on the box.
fn minimize_box(
    problem: &ChanceProblem,
    scaling: &Scaling,
    t: &mut Vec<f64>,
    lambda: &[f64],
    rho: f64,
    opts: &SolverOptions,
) {
    const MEMORY: usize = 10;
    const ALPHA_MIN: f64 = 1e-12;
    const ALPHA_MAX: f64 = 1e12;
    let (mut f, mut g) = lagrangian(problem, scaling, t, lambda, rho);
    let mut recent = vec![f];
    let mut alpha = {
        let pg = projected_gradient_norm(t, &g);
        if pg > 0.0 {
            (1.0 / pg).clamp(ALPHA_MIN, ALPHA_MAX)
        } else {
            1.0
        }
    };
    for _ in 0..opts.max_inner {
        if projected_gradient_norm(t, &g) <= opts.inner_tolerance {
            break;
        }
        let mut trial: Vec<f64> = t.iter().zip(&g).map(|(ti, gi)| ti - alpha * gi).collect();
        project(&mut trial);
        let dir: Vec<f64> = trial.iter().zip(t.iter()).map(|(a, b)| a - b).collect();
        let slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        let reference = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut step = 1.0;
        let (next_t, next_f, next_g) = loop {
            let cand: Vec<f64> = t.iter().zip(&dir).map(|(ti, di)| ti + step * di).collect();
            let (fc, gc) = lagrangian(problem, scaling, &cand, lambda, rho);
            if fc <= reference + 1e-4 * step * slope || step < 1e-12 {
                break (cand, fc, gc);
            }
            step *= 0.5;
        };
        let s: Vec<f64> = next_t.iter().zip(t.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        if ss == 0.0 {
            break;
        }
        alpha = if sy > 0.0 { (ss / sy).clamp(ALPHA_MIN, ALPHA_MAX) } else { ALPHA_MAX.min(1e4) };
        *t = next_t;
        f = next_f;
        g = next_g;
        recent.push(f);
        if recent.len() > MEMORY {
            recent.remove(0);
        }
    }
}

const STALL_LIMIT: usize = 5;
const MAX_PENALTY: f64 = 1e12;

fn solve_from(problem: &ChanceProblem, scaling: &Scaling, start: Vec<f64>, opts: &SolverOptions) -> Candidate {
    let m = problem.constraint_count();
    let mut t = start;
    let mut lambda = vec![0.0; m];
    let mut rho = opts.penalty;
    let mut last_violation = f64::INFINITY;
    let mut best_violation = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..opts.max_outer {
        minimize_box(problem, scaling, &mut t, &lambda, rho, opts);
        let g = problem.evaluate(&scaling.to_x(&t)).constraints;
        let violation = g.iter().cloned().fold(0.0, f64::max);
        // complementarity in the shifted sense: how far lambda is from its update
        let comp = g
            .iter()
            .zip(&lambda)
            .map(|(&gj, &lj)| gj.max(-lj / rho).abs())
            .fold(0.0, f64::max);
        for (l, gj) in lambda.iter_mut().zip(&g) {
            *l = (*l + rho * gj).max(0.0);
        }
        if violation <= opts.feasibility && comp <= opts.feasibility {
            break;
        }
        // a start whose violation stops shrinking is locally infeasible
        if violation < 0.99 * best_violation {
            best_violation = violation;
            stalled = 0;
        } else if violation > opts.feasibility {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                break;
            }
        }
        if violation > 0.25 * last_violation {
            rho = (rho * opts.penalty_growth).min(MAX_PENALTY);
        }
        last_violation = violation;
    }
    let x = scaling.to_x(&t);
    let e = problem.evaluate(&x);
    Candidate {
        objective: e.objective,
        violation: e.constraints.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        t,
    }
}

/// First `count` points of a randomly shifted Halton sequence in `[-1, 1]^dim`.
pub fn start_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    let mut rng = seeded_rng(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (0..count)
        .map(|k| {
            (0..dim)
                .map(|i| {
                    let base = PRIMES[i % PRIMES.len()];
                    let mut n = k as u64 + 1;
                    let mut f = 1.0;
                    let mut r = 0.0;
                    while n > 0 {
                        f /= base as f64;
                        r += f * (n % base) as f64;
                        n /= base;
                    }
                    2.0 * ((r + shift[i]) % 1.0) - 1.0
                })
                .collect()
        })
        .collect()
}

fn better(a: &Candidate, b: &Candidate, tol: f64) -> bool {
    let fa = a.violation <= tol;
    let fb = b.violation <= tol;
    match (fa, fb) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => a.objective < b.objective,
        (false, false) => a.violation < b.violation,
    }
}

/// Best feasible local optimum over `opts.starts` scattered starts.
pub fn solve(problem: &ChanceProblem, opts: &SolverOptions) -> Result<SolveResult> {
    if opts.starts == 0 {
        return Err(Error::invalid("at least one start is required"));
    }
    let scaling = Scaling::new(problem.bounds());
    let starts = start_points(problem.dim(), opts.starts, opts.seed);
    let candidates: Vec<Candidate> = starts
        .into_par_iter()
        .map(|s| solve_from(problem, &scaling, s, opts))
        .collect();
    let mut best = 0;
    for k in 1..candidates.len() {
        if better(&candidates[k], &candidates[best], opts.feasibility) {
            best = k;
        }
    }
    let b = &candidates[best];
    let feasible = b.violation <= opts.feasibility;
    let agreeing = candidates
        .iter()
        .filter(|c| c.violation <= opts.feasibility && (c.objective - b.objective).abs() <= 1e-6 * b.objective.abs().max(1.0))
        .count();
    let status = match (feasible, agreeing) {
        (false, _) => SolveStatus::Infeasible,
        (true, n) if n >= 2 => SolveStatus::Optimal,
        _ => SolveStatus::FeasibleLocal,
    };
    let x_star = scaling.to_x(&b.t);
    Ok(SolveResult {
        objective_value: problem.objective_value(&x_star)?,
        feasibility_residual: b.violation,
        x_star,
        status,
        starts_used: opts.starts,
        oracle_agreement: None,
    })
}

/// Exhaustive search over a uniform grid with `points_per_dim` nodes per axis.
pub fn grid_oracle(problem: &ChanceProblem, points_per_dim: usize, feasibility: f64) -> Result<SolveResult> {
    const BUDGET: f64 = 5e6;
    let d = problem.dim();
    if d > 4 {
        return Err(Error::invalid(format!("grid oracle supports at most 4 design variables, got {d}")));
    }
    if points_per_dim < 2 || (points_per_dim as f64).powi(d as i32) > BUDGET {
        return Err(Error::invalid(format!(
            "grid of {points_per_dim}^{d} points outside the budget of {BUDGET}"
        )));
    }
    let total = points_per_dim.pow(d as u32);
    let axes: Vec<Vec<f64>> = problem
        .bounds()
        .iter()
        .map(|&(a, b)| {
            (0..points_per_dim)
                .map(|k| a + (b - a) * k as f64 / (points_per_dim - 1) as f64)
                .collect()
        })
        .collect();
    let point = |mut k: usize| -> Vec<f64> {
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            x[i] = axes[i][k % points_per_dim];
            k /= points_per_dim;
        }
        x
    };
    let best = (0..total)
        .into_par_iter()
        .map(|k| {
            let x = point(k);
            let e = problem.evaluate(&x);
            let violation = e.constraints.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (k, e.objective, violation)
        })
        .reduce_with(|a, b| {
            let fa = a.2 <= feasibility;
            let fb = b.2 <= feasibility;
            let a_wins = match (fa, fb) {
                (true, false) => true,
                (false, true) => false,
                (true, true) => a.1 < b.1 || (a.1 == b.1 && a.0 < b.0),
                (false, false) => a.2 < b.2 || (a.2 == b.2 && a.0 < b.0),
            };
            if a_wins {
                a
            } else {
                b
            }
        })
        .expect("grid is nonempty");
    let x_star = point(best.0);
    Ok(SolveResult {
        objective_value: problem.objective_value(&x_star)?,
        feasibility_residual: best.2,
        x_star,
        status: if best.2 <= feasibility {
            SolveStatus::Optimal
        } else {
            SolveStatus::Infeasible
        },
        starts_used: 0,
        oracle_agreement: None,
    })
}

/// Per-coordinate bound on `|d objective / d x_i|` over the box, from the
/// extremal values of the univariate Legendre factors.
pub fn objective_lipschitz(problem: &ChanceProblem) -> Vec<f64> {
    use crate::basis::PolynomialBasis;
    let bounds = problem.bounds();
    let d = bounds.len();
    let mut out = vec![0.0; d];
    for (alpha, c) in problem.basis.indices().iter().zip(&problem.objective) {
        for i in 0..d {
            if alpha[i] == 0 {
                continue;
            }
            let k = alpha[i] as f64;
            // |phi_k'| peaks at the endpoints: sqrt(2k+1) k(k+1)/2, times the chain factor
            let mut bound = (2.0 * k + 1.0).sqrt() * k * (k + 1.0) / 2.0 * 2.0 / (bounds[i].1 - bounds[i].0);
            for (l, &a) in alpha.iter().enumerate() {
                if l != i {
                    bound *= (2.0 * a as f64 + 1.0).sqrt();
                }
            }
            out[i] += c.abs() * bound;
        }
    }
    out
}
