mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use ccyield_core::chance::{assemble, Bound, ChanceSpec, Goal};
use ccyield_core::evaluation::*;
use ccyield_core::pipeline::build_surrogate;
use ccyield_core::polyopt::{solve, SolverOptions};
use ccyield_core::quadrature::QuadratureOptions;
use ccyield_core::simulators::{Simulator, Synthetic};
use ccyield_core::Result;
use common::{mean, synthetic_mixture};

fn synthetic_checks() -> Vec<Criterion> {
    vec![
        Criterion { metric: 1, sense: Bound::Upper, threshold: 1.0 },
        Criterion { metric: 2, sense: Bound::Upper, threshold: 1.0 },
    ]
}

fn synthetic_spec(eps: f64) -> ChanceSpec {
    serde_json::from_value(serde_json::json!({
        "objective": {"metric": "objective", "sense": "max"},
        "constraints": [
            {"metric": "g1", "sense": "upper", "threshold": 1.0},
            {"metric": "g2", "sense": "upper", "threshold": 1.0}
        ],
        "epsilon": eps
    }))
    .unwrap()
}

/// Counts every simulator invocation.
struct Counting<S> {
    inner: S,
    calls: AtomicUsize,
}

impl<S: Simulator> Simulator for Counting<S> {
    fn design_bounds(&self) -> Vec<(f64, f64)> {
        self.inner.design_bounds()
    }
    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }
    fn metric_names(&self) -> Vec<String> {
        self.inner.metric_names()
    }
    fn simulate(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.simulate(x, xi)
    }
}

#[test]
fn infinite_thresholds_always_pass() {
    let checks: Vec<Criterion> = (1..3)
        .map(|metric| Criterion { metric, sense: Bound::Upper, threshold: f64::INFINITY })
        .collect();
    let y = mc_yield(&Synthetic, &[0.9, 0.9], &synthetic_mixture(), &checks, 1000, 1).unwrap();
    assert_eq!(y.yield_fraction, 1.0);
}

#[test]
fn synthetic_yields_at_tabulated_designs() {
    let mix = synthetic_mixture();
    let robust = mc_yield(&Synthetic, &[0.9379, -0.0522], &mix, &synthetic_checks(), 10_000, 2).unwrap();
    assert!(robust.yield_fraction >= 0.99, "{}", robust.yield_fraction);
    let nominal = mc_yield(&Synthetic, &[0.9999, 0.0], &mix, &synthetic_checks(), 10_000, 2).unwrap();
    assert!((nominal.yield_fraction - 0.4166).abs() <= 0.03, "{}", nominal.yield_fraction);
}

#[test]
fn yield_bounded_by_each_constraint() {
    let y = mc_yield(&Synthetic, &[0.9999, 0.0], &synthetic_mixture(), &synthetic_checks(), 2000, 9).unwrap();
    let bound = y.violation.iter().map(|v| 1.0 - v).fold(1.0, f64::min);
    assert!(y.yield_fraction <= bound);
}

#[test]
fn mc_yield_is_deterministic_and_rejects_small_samples() {
    let mix = synthetic_mixture();
    let a = mc_yield(&Synthetic, &[0.99, 0.0], &mix, &synthetic_checks(), 500, 4).unwrap();
    let b = mc_yield(&Synthetic, &[0.99, 0.0], &mix, &synthetic_checks(), 500, 4).unwrap();
    assert_eq!(a, b);
    assert!(mc_yield(&Synthetic, &[0.99, 0.0], &mix, &synthetic_checks(), 99, 4).is_err());
}

#[test]
fn independent_runs_scatter_within_standard_error() {
    let mix = synthetic_mixture();
    let m = 2000;
    let runs: Vec<f64> = (0..20)
        .map(|seed| {
            mc_yield(&Synthetic, &[0.9999, 0.0], &mix, &synthetic_checks(), m, 1000 + seed)
                .unwrap()
                .yield_fraction
        })
        .collect();
    let y = mean(&runs);
    let se = (y * (1.0 - y) / m as f64).sqrt();
    let spread = runs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - runs.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread <= 4.0 * se * 2.0_f64.sqrt(), "spread {spread} se {se}");
    for r in &runs {
        assert!((r - y).abs() <= 4.0 * se, "{r} vs {y}");
    }
}

#[test]
fn histogram_is_normalized() {
    let mix = synthetic_mixture();
    let values: Vec<f64> = sample_metrics(&Synthetic, &[0.5, 0.2], &mix, 1000, 5)
        .unwrap()
        .into_iter()
        .map(|r| r[0])
        .collect();
    let pdf = metric_pdf(&values, 40).unwrap();
    let total: f64 = pdf.histogram.iter().map(|(_, d)| d * pdf.bin_width).sum();
    assert!((total - 1.0).abs() <= 1e-6);
    assert!(pdf.kde.iter().all(|(_, d)| *d >= 0.0));
}

#[test]
fn constant_metric_gives_single_bin() {
    let pdf = metric_pdf(&[2.5; 600], 30).unwrap();
    assert_eq!(pdf.histogram.len(), 1);
    assert_eq!(pdf.histogram[0].0, 2.5);
}

#[test]
fn surrogate_distribution_matches_simulator() {
    let mix = synthetic_mixture();
    let build = build_surrogate(&Synthetic, &mix, 2, &QuadratureOptions::default()).unwrap();
    let problem = assemble(&build.model, &synthetic_spec(0.05)).unwrap();
    let x = solve(&problem, &SolverOptions::default()).unwrap().x_star;
    let draws = mix.sample(1000, 21);
    for metric in 0..3 {
        let truth: Vec<f64> = draws.iter().map(|xi| Synthetic.simulate(&x, xi).unwrap()[metric]).collect();
        let fit: Vec<f64> = draws.iter().map(|xi| build.model.evaluate(metric, &x, xi)).collect();
        let d = ks_distance(&truth, &fit);
        assert!(d <= 0.05, "metric {metric}: KS {d}");
    }
}

#[test]
fn kde_at_single_center() {
    let mu = vec![0.3, -0.7];
    let v = byo_kde(&mu, &[mu.clone()], 0.3);
    assert!((v - 1.3298).abs() <= 1e-4, "{v}");
    assert!(byo_kde(&[5.0, 5.0], &[mu], 0.3) > 0.0);
}

#[test]
fn full_byo_run_spends_2020_simulations() {
    let sim = Counting { inner: Synthetic, calls: AtomicUsize::new(0) };
    let opts = ByoOptions { residue: 0.0, ..ByoOptions::default() };
    let r = byo_optimize(&sim, &synthetic_mixture(), &synthetic_checks(), (0, Goal::Max), &opts).unwrap();
    assert_eq!(r.history.len(), 20);
    assert_eq!(r.simulation_count, 2020);
    assert_eq!(sim.calls.load(Ordering::Relaxed), 2020);
}

#[test]
fn byo_accounting_is_exact_with_early_stop() {
    let sim = Counting { inner: Synthetic, calls: AtomicUsize::new(0) };
    let opts = ByoOptions { residue: 10.0, ..ByoOptions::default() };
    let r = byo_optimize(&sim, &synthetic_mixture(), &synthetic_checks(), (0, Goal::Max), &opts).unwrap();
    assert!(r.simulation_count < 2020);
    assert_eq!(r.simulation_count, sim.calls.load(Ordering::Relaxed));
    let per_iteration: usize = r.history.iter().map(|h| h.samples_drawn + h.x.is_some() as usize).sum();
    assert_eq!(per_iteration, r.simulation_count);
}

#[test]
fn byo_is_deterministic() {
    let mix = synthetic_mixture();
    let opts = ByoOptions { max_iterations: 3, ..ByoOptions::default() };
    let a = byo_optimize(&Synthetic, &mix, &synthetic_checks(), (0, Goal::Max), &opts).unwrap();
    let b = byo_optimize(&Synthetic, &mix, &synthetic_checks(), (0, Goal::Max), &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn byo_does_not_beat_proposed_method_on_synthetic() {
    let mix = synthetic_mixture();
    let build = build_surrogate(&Synthetic, &mix, 2, &QuadratureOptions::default()).unwrap();
    let problem = assemble(&build.model, &synthetic_spec(0.05)).unwrap();
    let proposed = solve(&problem, &SolverOptions::default()).unwrap();
    let byo = byo_optimize(&Synthetic, &mix, &synthetic_checks(), (0, Goal::Max), &ByoOptions::default()).unwrap();
    assert!(byo.passed);
    let y = mc_yield(&Synthetic, &byo.x, &mix, &synthetic_checks(), 10_000, 8).unwrap();
    assert!(y.yield_fraction >= 0.95, "BYO yield {}", y.yield_fraction);
    assert!(
        byo.objective <= proposed.objective_value + 0.05,
        "BYO {} vs proposed {}",
        byo.objective,
        proposed.objective_value
    );
}
