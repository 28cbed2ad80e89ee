//! Monte Carlo yield, empirical metric densities, and the kernel-density
//! Bayesian yield optimization baseline.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chance::{Bound, ChanceSpec, Goal};
use crate::error::{Error, Result};
use crate::gaussmix::{seeded_rng, GaussianMixture};
use crate::polyopt::start_points;
use crate::simulators::Simulator;

/// One pass/fail criterion on a simulator metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub metric: usize,
    pub sense: Bound,
    pub threshold: f64,
}

impl Criterion {
    /// Canonical `y <= u` value pair.
    fn canonical(&self, metrics: &[f64]) -> (f64, f64) {
        match self.sense {
            Bound::Upper => (metrics[self.metric], self.threshold),
            Bound::Lower => (-metrics[self.metric], -self.threshold),
        }
    }

    pub fn passes(&self, metrics: &[f64]) -> bool {
        let (y, u) = self.canonical(metrics);
        y <= u
    }
}

/// Resolves the constraint list of a spec against simulator metric names.
pub fn criteria(spec: &ChanceSpec, names: &[String]) -> Result<Vec<Criterion>> {
    spec.constraints
        .iter()
        .map(|c| {
            let metric = names
                .iter()
                .position(|n| *n == c.metric)
                .ok_or_else(|| Error::invalid(format!("unknown metric '{}'", c.metric)))?;
            Ok(Criterion {
                metric,
                sense: c.sense,
                threshold: c.threshold,
            })
        })
        .collect()
}

/// 1 iff every canonical metric is at or below its threshold.
pub fn indicator(metrics: &[f64], thresholds: &[f64]) -> bool {
    metrics.iter().zip(thresholds).all(|(y, u)| y <= u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldEstimate {
    pub x: Vec<f64>,
    pub samples: usize,
    #[serde(rename = "yield")]
    pub yield_fraction: f64,
    /// Fraction of samples violating each criterion.
    pub violation: Vec<f64>,
    pub seed: u64,
}

impl YieldEstimate {
    pub fn standard_error(&self) -> f64 {
        (self.yield_fraction * (1.0 - self.yield_fraction) / self.samples as f64).sqrt()
    }
}

/// Simulates `count` mixture draws at a fixed design.
pub fn sample_metrics(
    sim: &dyn Simulator,
    x: &[f64],
    mixture: &GaussianMixture,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<(Vec<f64>, Vec<f64>)> = mixture
        .sample(count, seed)
        .into_iter()
        .map(|xi| (x.to_vec(), xi))
        .collect();
    sim.simulate_batch(&rows)
}

pub fn yield_from_samples(x: &[f64], metrics: &[Vec<f64>], checks: &[Criterion], seed: u64) -> YieldEstimate {
    let m = metrics.len();
    let mut violation = vec![0usize; checks.len()];
    let mut pass = 0usize;
    for row in metrics {
        let mut ok = true;
        for (v, c) in violation.iter_mut().zip(checks) {
            if !c.passes(row) {
                *v += 1;
                ok = false;
            }
        }
        pass += ok as usize;
    }
    YieldEstimate {
        x: x.to_vec(),
        samples: m,
        yield_fraction: pass as f64 / m as f64,
        violation: violation.into_iter().map(|v| v as f64 / m as f64).collect(),
        seed,
    }
}

/// Fraction of `count` mixture draws for which every criterion holds.
pub fn mc_yield(
    sim: &dyn Simulator,
    x: &[f64],
    mixture: &GaussianMixture,
    checks: &[Criterion],
    count: usize,
    seed: u64,
) -> Result<YieldEstimate> {
    if count < 100 {
        return Err(Error::invalid(format!("Monte Carlo yield needs at least 100 samples, got {count}")));
    }
    let metrics = sample_metrics(sim, x, mixture, count, seed)?;
    Ok(yield_from_samples(x, &metrics, checks, seed))
}

/// Normalized histogram and Gaussian kernel density of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPdf {
    /// (bin center, density)
    pub histogram: Vec<(f64, f64)>,
    pub bin_width: f64,
    /// (value, density) on a uniform grid; empty for a constant metric.
    pub kde: Vec<(f64, f64)>,
}

pub fn metric_pdf(values: &[f64], bins: usize) -> Result<MetricPdf> {
    if values.is_empty() || bins == 0 {
        return Err(Error::invalid("metric density needs samples and at least one bin"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("metric samples must be finite"));
    }
    let n = values.len() as f64;
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(MetricPdf {
            histogram: vec![(lo, 1.0)],
            bin_width: 1.0,
            kde: Vec::new(),
        });
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| (lo + (k as f64 + 0.5) * width, c as f64 / (n * width)))
        .collect();
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    // Silverman's rule of thumb
    let h = (1.06 * sd * n.powf(-0.2)).max(1e-12 * (hi - lo));
    let grid = 200;
    let (a, b) = (lo - 3.0 * h, hi + 3.0 * h);
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    let kde = (0..grid)
        .map(|k| {
            let t = a + (b - a) * k as f64 / (grid - 1) as f64;
            let d: f64 = values.iter().map(|v| (-0.5 * ((t - v) / h).powi(2)).exp()).sum();
            (t, d * norm)
        })
        .collect();
    Ok(MetricPdf {
        histogram,
        bin_width: width,
        kde,
    })
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ByoOptions {
    /// Joint samples per expectation step.
    pub samples: usize,
    pub bandwidth: f64,
    pub max_iterations: usize,
    pub residue: f64,
    pub ascent_starts: usize,
    pub seed: u64,
}

impl Default for ByoOptions {
    fn default() -> Self {
        Self {
            samples: 100,
            bandwidth: 0.3,
            max_iterations: 20,
            residue: 1e-6,
            ascent_starts: 32,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ByoIteration {
    pub iteration: usize,
    pub samples_drawn: usize,
    pub pass_samples: usize,
    /// Absent when the iteration had no pass samples to fit.
    pub x: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub passed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ByoResult {
    /// Best passing design visited, or the last iterate if none passed.
    pub x: Vec<f64>,
    pub objective: f64,
    pub passed: bool,
    pub simulation_count: usize,
    pub history: Vec<ByoIteration>,
}

/// Sum of Gaussian kernels `exp(-|x - mu|^2 / (2h)) / (sqrt(2 pi) h)`, averaged.
/// The exponent uses `h` rather than `h^2` and the one-dimensional normalizer
/// is applied in every dimension.
pub fn byo_kde(x: &[f64], centers: &[Vec<f64>], h: f64) -> f64 {
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h);
    centers
        .iter()
        .map(|mu| {
            let d2: f64 = x.iter().zip(mu).map(|(a, b)| (a - b).powi(2)).sum();
            norm * (-d2 / (2.0 * h)).exp()
        })
        .sum::<f64>()
        / centers.len() as f64
}

fn kde_gradient(x: &[f64], centers: &[Vec<f64>], h: f64) -> Vec<f64> {
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h * centers.len() as f64);
    let mut g = vec![0.0; x.len()];
    for mu in centers {
        let d2: f64 = x.iter().zip(mu).map(|(a, b)| (a - b).powi(2)).sum();
        let w = norm * (-d2 / (2.0 * h)).exp();
        for ((gi, a), b) in g.iter_mut().zip(x).zip(mu) {
            *gi -= w * (a - b) / h;
        }
    }
    g
}

/// Projected gradient ascent with backtracking from one start.
fn ascend(start: Vec<f64>, centers: &[Vec<f64>], h: f64, bounds: &[(f64, f64)]) -> (Vec<f64>, f64) {
    let clamp = |v: &mut Vec<f64>| {
        for (vi, (a, b)) in v.iter_mut().zip(bounds) {
            *vi = vi.clamp(*a, *b);
        }
    };
    let mut x = start;
    clamp(&mut x);
    let mut f = byo_kde(&x, centers, h);
    let mut step = h;
    for _ in 0..500 {
        let g = kde_gradient(&x, centers, h);
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn == 0.0 {
            break;
        }
        let mut improved = false;
        while step > 1e-14 {
            let mut cand: Vec<f64> = x.iter().zip(&g).map(|(a, gi)| a + step * gi / gn).collect();
            clamp(&mut cand);
            let fc = byo_kde(&cand, centers, h);
            if fc > f {
                let moved: f64 = cand.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                x = cand;
                f = fc;
                improved = moved > 1e-12;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (x, f)
}

fn maximize_kde(centers: &[Vec<f64>], h: f64, bounds: &[(f64, f64)], starts: usize, seed: u64) -> Vec<f64> {
    // half the starts at pass samples (evenly spread over the list), the rest scattered
    let from_samples = (starts / 2).min(centers.len());
    let mut inits: Vec<Vec<f64>> = (0..from_samples)
        .map(|k| centers[k * centers.len() / from_samples].clone())
        .collect();
    for t in start_points(bounds.len(), starts - from_samples, seed) {
        inits.push(
            t.iter()
                .zip(bounds)
                .map(|(t, (a, b))| 0.5 * (a + b) + 0.5 * (b - a) * t)
                .collect(),
        );
    }
    let results: Vec<(Vec<f64>, f64)> = inits.into_par_iter().map(|s| ascend(s, centers, h, bounds)).collect();
    let mut best = 0;
    for k in 1..results.len() {
        if results[k].1 > results[best].1 {
            best = k;
        }
    }
    results[best].0.clone()
}

fn to_unit(x: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter().zip(bounds).map(|(v, (a, b))| (v - a) / (b - a)).collect()
}

/// Kernel-density expectation-maximization search for a high-yield design.
///
/// Each iteration draws `samples` designs uniformly over the box with
/// mixture noise, keeps the passing designs, maximizes their kernel density
/// in box-normalized coordinates, and simulates the maximizer once at the
/// mixture mean.
pub fn byo_optimize(
    sim: &dyn Simulator,
    mixture: &GaussianMixture,
    checks: &[Criterion],
    objective: (usize, Goal),
    opts: &ByoOptions,
) -> Result<ByoResult> {
    let bounds = sim.design_bounds();
    if bounds.is_empty() {
        return Err(Error::invalid("design box is empty"));
    }
    if !(opts.bandwidth > 0.0) || opts.samples == 0 {
        return Err(Error::invalid("kernel bandwidth and sample count must be positive"));
    }
    let nominal = mixture.mean();
    let unit = vec![(0.0, 1.0); bounds.len()];
    let mut rng = seeded_rng(opts.seed);
    let mut n = opts.samples;
    let mut doubled = false;
    let mut centers: Vec<Vec<f64>> = Vec::new();
    let mut history = Vec::new();
    let mut count = 0usize;
    let mut previous: Option<Vec<f64>> = None;
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let better = |goal: Goal, a: f64, b: f64| match goal {
        Goal::Min => a < b,
        Goal::Max => a > b,
    };
    for iteration in 1..=opts.max_iterations {
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .map(|_| {
                let x = bounds.iter().map(|&(a, b)| rng.random_range(a..=b)).collect();
                (x, mixture.draw(&mut rng))
            })
            .collect();
        let metrics = sim.simulate_batch(&rows)?;
        count += n;
        let passing: Vec<Vec<f64>> = rows
            .iter()
            .zip(&metrics)
            .filter(|(_, y)| checks.iter().all(|c| c.passes(y)))
            .map(|((x, _), _)| x.clone())
            .collect();
        let drawn = n;
        let new_passes = passing.len();
        centers.extend(passing.iter().map(|x| to_unit(x, &bounds)));
        if centers.is_empty() {
            history.push(ByoIteration {
                iteration,
                samples_drawn: drawn,
                pass_samples: 0,
                x: None,
                objective: None,
                passed: None,
            });
            if doubled {
                return Err(Error::Solver("no passing samples found after enlarging the sample size".into()));
            }
            n *= 2;
            doubled = true;
            continue;
        }
        let seed = opts.seed.wrapping_add(iteration as u64);
        let t = maximize_kde(&centers, opts.bandwidth, &unit, opts.ascent_starts, seed);
        let x: Vec<f64> = t.iter().zip(&bounds).map(|(t, (a, b))| a + (b - a) * t).collect();
        let y = sim.simulate(&x, &nominal)?;
        count += 1;
        let pass = checks.iter().all(|c| c.passes(&y));
        let value = y[objective.0];
        history.push(ByoIteration {
            iteration,
            samples_drawn: drawn,
            pass_samples: new_passes,
            x: Some(x.clone()),
            objective: Some(value),
            passed: Some(pass),
        });
        let replace = match &best {
            None => true,
            Some((_, v, p)) => (pass && !p) || (pass == *p && better(objective.1, value, *v)),
        };
        if replace {
            best = Some((x.clone(), value, pass));
        }
        let residue = previous
            .as_ref()
            .map(|p| p.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
        previous = Some(x);
        if residue.is_some_and(|r| r < opts.residue) {
            break;
        }
    }
    let (x, objective, passed) = best.ok_or_else(|| Error::Solver("no design was evaluated".into()))?;
    Ok(ByoResult {
        x,
        objective,
        passed,
        simulation_count: count,
        history,
    })
}
