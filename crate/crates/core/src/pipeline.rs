//! Surrogate construction from a simulator: bases, quadrature, simulation at
//! the joint rule, projection.

use log::info;

use crate::basis::{GramSchmidtBasis, LegendreBasis};
use crate::error::Result;
use crate::gaussmix::GaussianMixture;
use crate::quadrature::{build_joint_rule, QuadratureOptions, QuadratureRule};
use crate::simulators::Simulator;
use crate::surrogate::SurrogateModel;

#[derive(Debug, Clone)]
pub struct SurrogateBuild {
    pub design_rule: QuadratureRule,
    pub noise_rule: QuadratureRule,
    pub joint_rule: QuadratureRule,
    pub model: SurrogateModel,
    /// Simulator calls spent on the surrogate, one per joint-rule point.
    pub simulations: usize,
}

/// Bases of order `p` for the simulator's design box and the noise mixture.
pub fn bases(sim: &dyn Simulator, mixture: &GaussianMixture, order: usize) -> Result<(LegendreBasis, GramSchmidtBasis)> {
    Ok((
        LegendreBasis::new(&sim.design_bounds(), order)?,
        GramSchmidtBasis::new(mixture, order)?,
    ))
}

/// Quadrature rules only, without simulation.
pub fn quadrature_rules(
    sim: &dyn Simulator,
    mixture: &GaussianMixture,
    order: usize,
    opts: &QuadratureOptions,
) -> Result<(QuadratureRule, QuadratureRule, QuadratureRule)> {
    let (design, noise) = bases(sim, mixture, order)?;
    build_joint_rule(&design, &noise, order, opts)
}

/// Fits a surrogate from simulations at an existing joint rule.
pub fn fit_at_rule(sim: &dyn Simulator, mixture: &GaussianMixture, rule: &QuadratureRule) -> Result<SurrogateModel> {
    let (design, noise) = bases(sim, mixture, rule.order)?;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..rule.len())
        .map(|k| (rule.design_part(k).to_vec(), rule.noise_part(k).to_vec()))
        .collect();
    let outputs = sim.simulate_batch(&rows)?;
    SurrogateModel::fit(rule, &design, &noise, &sim.metric_names(), &outputs)
}

pub fn build_surrogate(
    sim: &dyn Simulator,
    mixture: &GaussianMixture,
    order: usize,
    opts: &QuadratureOptions,
) -> Result<SurrogateBuild> {
    let (design_rule, noise_rule, joint_rule) = quadrature_rules(sim, mixture, order, opts)?;
    let model = fit_at_rule(sim, mixture, &joint_rule)?;
    info!("surrogate fitted from {} simulations", joint_rule.len());
    Ok(SurrogateBuild {
        simulations: joint_rule.len(),
        design_rule,
        noise_rule,
        joint_rule,
        model,
    })
}
