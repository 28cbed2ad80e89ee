mod common;

use ccyield_core::basis::{GramSchmidtBasis, LegendreBasis, PolynomialBasis};
use ccyield_core::gaussmix::{seeded_rng, GaussianMixture};
use ccyield_core::pipeline::{bases, build_surrogate, quadrature_rules};
use ccyield_core::quadrature::{joint_problem, QuadratureOptions};
use ccyield_core::simulators::{Simulator, Synthetic};
use ccyield_core::surrogate::SurrogateModel;
use ccyield_core::Result;
use common::*;
use rand::Rng;

/// Random quadratic form `a + b.z + z'Cz` in the joint variable `z = (x, xi)`.
struct Quadratic {
    bounds: Vec<(f64, f64)>,
    noise_dim: usize,
    terms: Vec<(f64, Vec<f64>, Vec<Vec<f64>>)>,
}

impl Quadratic {
    fn random(bounds: Vec<(f64, f64)>, noise_dim: usize, metrics: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let n = bounds.len() + noise_dim;
        let terms = (0..metrics)
            .map(|_| {
                let a = rng.random_range(-1.0..1.0);
                let b = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let c = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
                (a, b, c)
            })
            .collect();
        Self { bounds, noise_dim, terms }
    }
}

impl Simulator for Quadratic {
    fn design_bounds(&self) -> Vec<(f64, f64)> {
        self.bounds.clone()
    }

    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn metric_names(&self) -> Vec<String> {
        (0..self.terms.len()).map(|k| format!("m{k}")).collect()
    }

    fn simulate(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        let z: Vec<f64> = x.iter().chain(xi).copied().collect();
        Ok(self
            .terms
            .iter()
            .map(|(a, b, c)| {
                let lin: f64 = b.iter().zip(&z).map(|(u, v)| u * v).sum();
                let quad: f64 = (0..z.len()).map(|i| (0..z.len()).map(|j| c[i][j] * z[i] * z[j]).sum::<f64>()).sum();
                a + lin + quad
            })
            .collect())
    }
}

struct ModelSimulator(SurrogateModel);

impl Simulator for ModelSimulator {
    fn design_bounds(&self) -> Vec<(f64, f64)> {
        self.0.design_basis().bounds().to_vec()
    }

    fn noise_dim(&self) -> usize {
        self.0.noise_basis().dim()
    }

    fn metric_names(&self) -> Vec<String> {
        self.0.names().to_vec()
    }

    fn simulate(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        Ok(self.0.evaluate_all(x, xi))
    }
}

fn random_point(rng: &mut impl Rng, bounds: &[(f64, f64)], mix: &GaussianMixture) -> (Vec<f64>, Vec<f64>) {
    let x = bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect();
    (x, mix.draw(rng))
}

#[test]
fn degree_two_coefficients_recovered() {
    let mix = synthetic_mixture();
    let design = LegendreBasis::new(&[(-1.0, 1.0); 2], 2).unwrap();
    let noise = GramSchmidtBasis::new(&mix, 2).unwrap();
    let mut rng = seeded_rng(31);
    let n = 15;
    let coeffs: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let truth = SurrogateModel::from_coefficients(&design, &noise, 2, vec!["a".into(), "b".into(), "c".into()], coeffs.clone()).unwrap();
    let build = build_surrogate(&ModelSimulator(truth), &mix, 2, &QuadratureOptions::default()).unwrap();
    for (m, c) in coeffs.iter().enumerate() {
        for (got, want) in build.model.coefficients(m).iter().zip(c) {
            assert!((got - want).abs() <= 1e-6, "metric {m}: {got} vs {want}");
        }
    }
}

#[test]
fn quadratic_simulator_reproduced_pointwise() {
    let mix = synthetic_mixture();
    let sim = Quadratic::random(vec![(-1.0, 1.0), (0.0, 2.0)], 2, 2, 32);
    let build = build_surrogate(&sim, &mix, 2, &QuadratureOptions::default()).unwrap();
    let mut rng = seeded_rng(33);
    for _ in 0..1000 {
        let (x, xi) = random_point(&mut rng, &sim.bounds, &mix);
        let truth = sim.simulate(&x, &xi).unwrap();
        let fit = build.model.evaluate_all(&x, &xi);
        for (a, b) in truth.iter().zip(&fit) {
            assert!((a - b).abs() <= 1e-5, "{x:?} {xi:?}: {a} vs {b}");
        }
    }
}

#[test]
fn synthetic_surrogate_matches_simulator() {
    let mix = synthetic_mixture();
    let build = build_surrogate(&Synthetic, &mix, 2, &QuadratureOptions::default()).unwrap();
    assert!((15..=25).contains(&build.simulations), "{} points", build.simulations);
    assert!(build.joint_rule.residual_l1 <= 1e-6);
    let mut rng = seeded_rng(34);
    for _ in 0..1000 {
        let (x, xi) = random_point(&mut rng, &Synthetic.design_bounds(), &mix);
        let truth = Synthetic.simulate(&x, &xi).unwrap();
        for (a, b) in truth.iter().zip(build.model.evaluate_all(&x, &xi)) {
            assert!((a - b).abs() <= 1e-5);
        }
    }
}

#[test]
fn mean_and_variance_formulas_match_monte_carlo() {
    let mix = synthetic_mixture();
    let model = build_surrogate(&Synthetic, &mix, 2, &QuadratureOptions::default()).unwrap().model;
    let x = [0.9379, -0.0522];
    let draws = mix.sample(100_000, 35);
    for metric in 0..3 {
        let ys: Vec<f64> = draws.iter().map(|xi| Synthetic.simulate(&x, xi).unwrap()[metric]).collect();
        let (m, v) = (mean(&ys), variance(&ys));
        let se = (v / ys.len() as f64).sqrt();
        let mean_model = model.mean_at(metric, &x).unwrap();
        let var_model = model.variance_at(metric, &x).unwrap();
        assert!((mean_model - m).abs() <= 3.0 * se, "metric {metric}: mean {mean_model} vs {m} (se {se})");
        assert!((var_model - v).abs() <= 0.02 * v, "metric {metric}: variance {var_model} vs {v}");
    }
}

#[test]
fn mean_and_variance_exact_for_linear_metric() {
    // objective 3(x1+xi1) + (x2+xi2): mean 3x1 + x2, variance from the mixture covariance
    let mix = synthetic_mixture();
    let model = build_surrogate(&Synthetic, &mix, 2, &QuadratureOptions::default()).unwrap().model;
    let c = mix.covariance();
    let var = 9.0 * c[0][0] + 6.0 * c[0][1] + c[1][1];
    let mut rng = seeded_rng(36);
    for _ in 0..100 {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        assert!((model.mean_at(0, &x).unwrap() - (3.0 * x[0] + x[1])).abs() <= 1e-6);
        assert!((model.variance_at(0, &x).unwrap() - var).abs() <= 1e-6 * var);
    }
}

#[test]
fn parseval_second_moment() {
    let mix = synthetic_mixture();
    let model = build_surrogate(&Synthetic, &mix, 2, &QuadratureOptions::default()).unwrap().model;
    let mut rng = seeded_rng(37);
    let n = 400_000;
    for metric in 0..3 {
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                let (x, xi) = random_point(&mut rng, &Synthetic.design_bounds(), &mix);
                Synthetic.simulate(&x, &xi).unwrap()[metric].powi(2)
            })
            .collect();
        let se = (variance(&vals) / n as f64).sqrt();
        let got = model.second_moment(metric);
        assert!((got - mean(&vals)).abs() <= 4.0 * se, "metric {metric}: {got} vs {}", mean(&vals));
    }
}

#[test]
fn joint_rule_integrates_degree_2p_products() {
    let mix = synthetic_mixture();
    let (design, noise) = bases(&Synthetic, &mix, 2).unwrap();
    let (_, _, rule) = quadrature_rules(&Synthetic, &mix, 2, &QuadratureOptions::default()).unwrap();
    let problem = joint_problem(&design, &noise, 2).unwrap();
    assert!(rule.recompute_residual(&problem) <= 1e-6);
    // every product of two order-2 basis functions is integrated to the Kronecker delta
    let product = ccyield_core::basis::ProductBasis::new(Some(&design), Some(&noise), 2).unwrap();
    let n = product.len();
    let mut gram = vec![vec![0.0; n]; n];
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let phi = product.evaluate(p).unwrap();
        for i in 0..n {
            for j in 0..n {
                gram[i][j] += w * phi[i] * phi[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((gram[i][j] - want).abs() <= 1e-6, "({i},{j}) {}", gram[i][j]);
        }
    }
}

#[test]
fn serialized_model_round_trips() {
    let mix = synthetic_mixture();
    let model = build_surrogate(&Synthetic, &mix, 2, &QuadratureOptions::default()).unwrap().model;
    let text = serde_json::to_string(&model).unwrap();
    let back: SurrogateModel = serde_json::from_str(&text).unwrap();
    for m in 0..3 {
        assert_eq!(back.coefficients(m), model.coefficients(m));
    }
    assert_eq!(back.simulation_count(), model.simulation_count());
}
