//! Initial rules: Gauss-Legendre tensor grids and Smolyak sparse grids on
//! `[-1, 1]^d`, weights normalized to the uniform probability measure.

use std::collections::BTreeMap;

use crate::basis::MultiIndexSet;

/// `n`-point Gauss-Legendre nodes and weights on `[-1, 1]` (weights sum to 2).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let k = k as f64;
        let p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Full tensor grid with `n` points per dimension.
pub fn tensor_gauss(dim: usize, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (nodes, w) = gauss_legendre(n);
    let total = n.pow(dim as u32);
    let mut points = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut digits = vec![0usize; dim];
    for _ in 0..total {
        points.push(digits.iter().map(|&k| nodes[k]).collect());
        weights.push(digits.iter().map(|&k| 0.5 * w[k]).product());
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < n {
                break;
            }
            *d = 0;
        }
    }
    (points, weights)
}

/// Smolyak combination of Gauss-Legendre rules (level `i` uses `i` points),
/// exact for total degree `2 * exactness_half + 1`. Weights may be negative.
pub fn smolyak_gauss(dim: usize, exactness_half: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let q = dim + exactness_half;
    let mut acc: BTreeMap<Vec<i64>, (Vec<f64>, f64)> = BTreeMap::new();
    let levels = MultiIndexSet::total_order(dim, exactness_half).expect("dim >= 1");
    for extra in levels.iter() {
        // level vector i = 1 + extra, |i| = dim + |extra|
        let sum_i = dim + extra.iter().sum::<u32>() as usize;
        if sum_i + dim < q + 1 {
            continue;
        }
        let k = q - sum_i;
        if k > dim - 1 {
            continue;
        }
        let coef = if k % 2 == 0 { 1.0 } else { -1.0 } * binomial(dim - 1, k);
        let rules: Vec<(Vec<f64>, Vec<f64>)> =
            extra.iter().map(|&e| gauss_legendre(e as usize + 1)).collect();
        let total: usize = rules.iter().map(|r| r.0.len()).product();
        let mut digits = vec![0usize; dim];
        for _ in 0..total {
            let point: Vec<f64> = digits.iter().zip(&rules).map(|(&d, r)| r.0[d]).collect();
            let w: f64 = digits.iter().zip(&rules).map(|(&d, r)| 0.5 * r.1[d]).product();
            let key: Vec<i64> = point.iter().map(|v| (v * 1e12).round() as i64).collect();
            acc.entry(key).or_insert((point, 0.0)).1 += coef * w;
            for (d, r) in digits.iter_mut().zip(&rules).rev() {
                *d += 1;
                if *d < r.0.len() {
                    break;
                }
                *d = 0;
            }
        }
    }
    acc.into_values().filter(|(_, w)| w.abs() > 1e-15).unzip()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
