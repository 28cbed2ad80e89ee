//! Run configuration: parsing and fail-fast validation.

use std::path::{Path, PathBuf};

use ccyield_core::chance::{kappa, ChanceSpec, ConstraintSpec, ObjectiveSpec};
use ccyield_core::evaluation::ByoOptions;
use ccyield_core::gaussmix::GaussianMixture;
use ccyield_core::quadrature::QuadratureOptions;
use ccyield_core::simulators::{ExternalCommand, ExternalSimulator, Microring, Mzi, Simulator, Synthetic};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub byo: ByoOptions,
    /// Output directory, overridden by `--out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Builtin {
    Synthetic,
    Microring,
    Mzi,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalConfig {
    pub external: ExternalCommand,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SimulatorConfig {
    Builtin(Builtin),
    External(ExternalConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub simulator: SimulatorConfig,
    /// Replaces the simulator's own design box when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_bounds: Option<Vec<(f64, f64)>>,
    pub mixture: GaussianMixture,
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    pub epsilon: f64,
    #[serde(default)]
    pub bonferroni: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub order: usize,
    pub quadrature: QuadratureOptions,
    /// Abort when the joint rule needs more simulations than this.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_points: Option<usize>,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            order: 2,
            quadrature: QuadratureOptions::default(),
            max_points: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Cantelli,
    MeanOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub starts: usize,
    pub seed: u64,
    pub formulation: Formulation,
    /// Cross-check the solution against a dense grid (at most 4 design variables).
    pub grid_check: bool,
    pub grid_points: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            starts: 64,
            seed: 7,
            formulation: Formulation::Cantelli,
            grid_check: false,
            grid_points: 101,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub samples: usize,
    pub seed: u64,
    pub bins: usize,
    pub spectrum_draws: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 3,
            bins: 40,
            spectrum_draws: 50,
        }
    }
}

/// Simulator with the configured design box.
pub struct Problem {
    inner: Box<dyn Simulator>,
    bounds: Vec<(f64, f64)>,
    pub name: String,
}

impl Simulator for Problem {
    fn design_bounds(&self) -> Vec<(f64, f64)> {
        self.bounds.clone()
    }
    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }
    fn metric_names(&self) -> Vec<String> {
        self.inner.metric_names()
    }
    fn metric_units(&self) -> Vec<String> {
        self.inner.metric_units()
    }
    fn simulate(&self, x: &[f64], xi: &[f64]) -> ccyield_core::Result<Vec<f64>> {
        self.inner.simulate(x, xi)
    }
    fn simulate_batch(&self, rows: &[(Vec<f64>, Vec<f64>)]) -> ccyield_core::Result<Vec<Vec<f64>>> {
        self.inner.simulate_batch(rows)
    }
    fn spectrum(
        &self,
        x: &[f64],
        xi: &[f64],
    ) -> Option<ccyield_core::Result<ccyield_core::simulators::SpectralResponse>> {
        self.inner.spectrum(x, xi)
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    pub fn chance_spec(&self) -> ChanceSpec {
        ChanceSpec {
            objective: self.problem.objective.clone(),
            constraints: self.problem.constraints.clone(),
            epsilon: self.problem.epsilon,
            bonferroni: self.problem.bonferroni,
        }
    }

    /// Sets every seed in the configuration.
    pub fn override_seed(&mut self, seed: u64) {
        self.surrogate.quadrature.seed = seed;
        self.solver.seed = seed;
        self.validation.seed = seed;
        self.byo.seed = seed;
    }

    /// Checks everything that can be checked without simulating.
    ///
    /// `cached` selects whether an external simulator memoizes results.
    pub fn build_problem(&self, cached: bool) -> Result<Problem, CliError> {
        let (inner, name): (Box<dyn Simulator>, String) = match &self.problem.simulator {
            SimulatorConfig::Builtin(Builtin::Synthetic) => (Box::new(Synthetic), "synthetic".into()),
            SimulatorConfig::Builtin(Builtin::Microring) => (Box::new(Microring::default()), "microring".into()),
            SimulatorConfig::Builtin(Builtin::Mzi) => (Box::new(Mzi::default()), "mzi".into()),
            SimulatorConfig::External(e) => {
                let sim = ExternalSimulator::new(e.external.clone()).map_err(|e| invalid(e.to_string()))?;
                let sim = if cached { sim } else { sim.without_cache() };
                (Box::new(sim), format!("external:{}", e.external.program))
            }
        };
        let bounds = self.problem.design_bounds.clone().unwrap_or_else(|| inner.design_bounds());
        let native = inner.design_bounds().len();
        if bounds.len() != native {
            return Err(invalid(format!("design_bounds has {} entries, simulator takes {native}", bounds.len())));
        }
        if bounds.is_empty() {
            return Err(invalid("design box is empty"));
        }
        if let Some((i, _)) = bounds.iter().enumerate().find(|(_, (a, b))| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(invalid(format!("design bound {i} is not an ordered finite interval")));
        }
        if self.problem.mixture.dim() != inner.noise_dim() {
            return Err(invalid(format!(
                "mixture has dimension {}, simulator expects {}",
                self.problem.mixture.dim(),
                inner.noise_dim()
            )));
        }
        let spec = self.chance_spec();
        spec.validate().map_err(|e| invalid(e.to_string()))?;
        for i in 0..spec.constraints.len() {
            kappa(spec.risk(i)).map_err(|e| invalid(e.to_string()))?;
        }
        let names = inner.metric_names();
        for metric in std::iter::once(&spec.objective.metric).chain(spec.constraints.iter().map(|c| &c.metric)) {
            if !names.contains(metric) {
                return Err(invalid(format!("unknown metric '{metric}' (available: {})", names.join(", "))));
            }
        }
        if self.surrogate.order == 0 {
            return Err(invalid("surrogate order must be at least 1"));
        }
        if self.solver.starts == 0 {
            return Err(invalid("solver needs at least one start"));
        }
        if self.validation.samples < 500 {
            return Err(invalid("validation needs at least 500 Monte Carlo samples"));
        }
        if self.validation.bins == 0 {
            return Err(invalid("histogram needs at least one bin"));
        }
        if !(self.byo.bandwidth > 0.0) || self.byo.samples == 0 {
            return Err(invalid("BYO bandwidth and sample count must be positive"));
        }
        Ok(Problem { inner, bounds, name })
    }
}
