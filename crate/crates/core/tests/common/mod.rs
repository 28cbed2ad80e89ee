#![allow(dead_code)]

use ccyield_core::gaussmix::GaussianMixture;

/// Noise of the two-variable synthetic problem: means ±0.01, variance 1e-4, correlation 0.75.
pub fn synthetic_mixture() -> GaussianMixture {
    let s = 1e-4;
    GaussianMixture::symmetric_pair(&[0.01, 0.01], vec![vec![s, 0.75 * s], vec![0.75 * s, s]]).unwrap()
}

pub fn ring_mixture() -> GaussianMixture {
    let s = 0.006f64.powi(2);
    let c = [
        [1.0, 0.4, 0.1, 0.4],
        [0.4, 1.0, 0.4, 0.1],
        [0.1, 0.4, 1.0, 0.4],
        [0.4, 0.1, 0.4, 1.0],
    ];
    let cov = c.iter().map(|r| r.iter().map(|v| v * s).collect()).collect();
    GaussianMixture::symmetric_pair(&[0.006; 4], cov).unwrap()
}

pub fn mzi_mixture() -> GaussianMixture {
    let cov = vec![vec![1.0, 0.4, 0.1], vec![0.4, 1.0, 0.4], vec![0.1, 0.4, 1.0]];
    GaussianMixture::symmetric_pair(&[1.0; 3], cov).unwrap()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}
