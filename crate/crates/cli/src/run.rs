//! Pipeline drivers behind each subcommand and the artifacts they write.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ccyield_core::chance::{assemble, mean_only_assemble, Bound, ChanceProblem, Goal, ObjectiveSpec};
use ccyield_core::evaluation::{byo_optimize, criteria, metric_pdf, sample_metrics, yield_from_samples, ByoResult, YieldEstimate};
use ccyield_core::pipeline::{fit_at_rule, quadrature_rules};
use ccyield_core::polyopt::{grid_oracle, solve, SolveStatus, SolverOptions};
use ccyield_core::quadrature::QuadratureRule;
use ccyield_core::simulators::Simulator;
use ccyield_core::surrogate::SurrogateModel;
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{Formulation, Problem, RunConfig};
use crate::error::{CliError, StageExt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSummary {
    pub metric: String,
    pub sense: Bound,
    pub threshold: f64,
}

/// What a result is about; results are comparable only when these agree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSummary {
    pub simulator: String,
    pub objective: ObjectiveSpec,
    pub constraints: Vec<ConstraintSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationCounts {
    /// Simulations spent to produce the design.
    pub optimization: usize,
    /// Monte Carlo simulations spent checking it.
    pub validation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub quadrature: u64,
    pub solver: u64,
    pub validation: u64,
    pub byo: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    /// `proposed`, `mean-only` or `byo`.
    pub method: String,
    pub problem: ProblemSummary,
    pub epsilon: f64,
    pub x_star: Vec<f64>,
    /// Surrogate expectation for the polynomial methods, Monte Carlo mean for BYO.
    pub objective: f64,
    pub expected_objective_mc: f64,
    pub status: String,
    pub validation: YieldEstimate,
    pub simulations: SimulationCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature_residual_l1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_agreement: Option<f64>,
    pub seeds: Seeds,
    /// Seconds since the Unix epoch; the only field that varies between identical runs.
    pub timestamp: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleSet {
    pub design: QuadratureRule,
    pub noise: QuadratureRule,
    pub joint: QuadratureRule,
}

pub struct Run {
    pub config: RunConfig,
    pub out: PathBuf,
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact types serialize");
    text.push('\n');
    write_file(path, &text)
}

pub fn read_results(path: &Path) -> Result<Results, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Compare(format!("{}: {e}", path.display())))
}

fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn status_name(status: SolveStatus) -> String {
    serde_json::to_value(status).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

impl Run {
    pub fn new(config: RunConfig, out: Option<PathBuf>) -> Result<Self, CliError> {
        let out = out.or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out).map_err(|source| CliError::Io {
            path: out.display().to_string(),
            source,
        })?;
        Ok(Self { config, out })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn summary(&self, problem: &Problem) -> ProblemSummary {
        ProblemSummary {
            simulator: problem.name.clone(),
            objective: self.config.problem.objective.clone(),
            constraints: self
                .config
                .problem
                .constraints
                .iter()
                .map(|c| ConstraintSummary {
                    metric: c.metric.clone(),
                    sense: c.sense,
                    threshold: c.threshold,
                })
                .collect(),
        }
    }

    fn seeds(&self) -> Seeds {
        Seeds {
            quadrature: self.config.surrogate.quadrature.seed,
            solver: self.config.solver.seed,
            validation: self.config.validation.seed,
            byo: self.config.byo.seed,
        }
    }

    /// Builds the three quadrature rules and writes `rule.json`.
    pub fn quadrature(&self) -> Result<RuleSet, CliError> {
        let problem = self.config.build_problem(true)?;
        self.rules(&problem)
    }

    fn rules(&self, problem: &Problem) -> Result<RuleSet, CliError> {
        let s = &self.config.surrogate;
        let (design, noise, joint) =
            quadrature_rules(problem, &self.config.problem.mixture, s.order, &s.quadrature).stage("quadrature")?;
        info!("joint rule: {} points, residual {:e}", joint.len(), joint.residual_l1);
        let rules = RuleSet { design, noise, joint };
        write_json(&self.path("rule.json"), &rules)?;
        if let Some(limit) = s.max_points {
            if rules.joint.len() > limit {
                return Err(CliError::Config(format!(
                    "joint rule needs {} simulations, above max_points = {limit}",
                    rules.joint.len()
                )));
            }
        }
        Ok(rules)
    }

    /// Rules plus simulations at the joint points; writes `surrogate.json`.
    pub fn surrogate(&self) -> Result<(RuleSet, SurrogateModel), CliError> {
        let problem = self.config.build_problem(true)?;
        self.fit(&problem)
    }

    fn fit(&self, problem: &Problem) -> Result<(RuleSet, SurrogateModel), CliError> {
        let rules = self.rules(problem)?;
        let model = fit_at_rule(problem, &self.config.problem.mixture, &rules.joint).stage("simulation")?;
        write_json(&self.path("surrogate.json"), &model)?;
        Ok((rules, model))
    }

    fn validate(&self, problem: &Problem, x: &[f64]) -> Result<(YieldEstimate, f64), CliError> {
        let v = &self.config.validation;
        let mixture = &self.config.problem.mixture;
        let names = problem.metric_names();
        let checks = criteria(&self.config.chance_spec(), &names).stage("validation")?;
        let metrics = sample_metrics(problem, x, mixture, v.samples, v.seed).stage("validation")?;
        let estimate = yield_from_samples(x, &metrics, &checks, v.seed);
        let objective = names
            .iter()
            .position(|n| *n == self.config.problem.objective.metric)
            .expect("objective metric checked during validation");
        let expected = metrics.iter().map(|r| r[objective]).sum::<f64>() / metrics.len() as f64;
        for (k, name) in names.iter().enumerate() {
            let values: Vec<f64> = metrics.iter().map(|r| r[k]).collect();
            let pdf = metric_pdf(&values, v.bins).stage("validation")?;
            let mut hist = String::from("value,density\n");
            for (c, d) in &pdf.histogram {
                let _ = writeln!(hist, "{c},{d}");
            }
            write_file(&self.path(&format!("pdf_{name}.csv")), &hist)?;
            let mut kde = String::from("value,density\n");
            for (c, d) in &pdf.kde {
                let _ = writeln!(kde, "{c},{d}");
            }
            write_file(&self.path(&format!("kde_{name}.csv")), &kde)?;
        }
        self.spectra(problem, x)?;
        Ok((estimate, expected))
    }

    /// Port spectra at the nominal point and at noise draws, for photonic problems.
    fn spectra(&self, problem: &Problem, x: &[f64]) -> Result<(), CliError> {
        let mixture = &self.config.problem.mixture;
        let mut draws = vec![vec![0.0; mixture.dim()]];
        draws.extend(mixture.sample(self.config.validation.spectrum_draws, self.config.validation.seed.wrapping_add(1)));
        let mut csv = String::from("draw,frequency,through,drop\n");
        for (k, xi) in draws.iter().enumerate() {
            let Some(response) = problem.spectrum(x, xi) else {
                return Ok(());
            };
            let r = response.stage("spectrum")?;
            for ((f, t), d) in r.frequencies.iter().zip(&r.through).zip(&r.drop) {
                let _ = writeln!(csv, "{k},{f},{t},{d}");
            }
        }
        write_file(&self.path("spectrum.csv"), &csv)
    }

    fn assemble(&self, model: &SurrogateModel) -> Result<ChanceProblem, CliError> {
        let spec = self.config.chance_spec();
        match self.config.solver.formulation {
            Formulation::Cantelli => assemble(model, &spec),
            Formulation::MeanOnly => mean_only_assemble(model, &spec),
        }
        .stage("assembly")
    }

    /// Surrogate, chance-constrained solve and Monte Carlo validation.
    pub fn optimize(&self) -> Result<Results, CliError> {
        let problem = self.config.build_problem(true)?;
        let (rules, model) = self.fit(&problem)?;
        let program = self.assemble(&model)?;
        let s = &self.config.solver;
        let opts = SolverOptions {
            starts: s.starts,
            seed: s.seed,
            ..SolverOptions::default()
        };
        let mut solution = solve(&program, &opts).stage("optimization")?;
        if s.grid_check {
            let oracle = grid_oracle(&program, s.grid_points, opts.feasibility).stage("grid check")?;
            solution.oracle_agreement = Some((solution.objective_value - oracle.objective_value).abs());
        }
        info!("x* = {:?}, objective {}", solution.x_star, solution.objective_value);
        let (validation, expected) = self.validate(&problem, &solution.x_star)?;
        let method = match s.formulation {
            Formulation::Cantelli => "proposed",
            Formulation::MeanOnly => "mean-only",
        };
        let results = Results {
            method: method.into(),
            problem: self.summary(&problem),
            epsilon: self.config.problem.epsilon,
            x_star: solution.x_star.clone(),
            objective: solution.objective_value,
            expected_objective_mc: expected,
            status: status_name(solution.status),
            simulations: SimulationCounts {
                optimization: rules.joint.len(),
                validation: validation.samples,
            },
            validation,
            quadrature_residual_l1: Some(rules.joint.residual_l1),
            oracle_agreement: solution.oracle_agreement,
            seeds: self.seeds(),
            timestamp: timestamp(),
        };
        write_json(&self.path("results.json"), &results)?;
        if !solution.is_feasible() {
            return Err(CliError::Infeasible(format!(
                "largest scaled constraint value {:e}",
                solution.feasibility_residual
            )));
        }
        Ok(results)
    }

    /// Monte Carlo yield at a fixed design; writes `yield.json`.
    pub fn yield_at(&self, x: &[f64]) -> Result<YieldEstimate, CliError> {
        let problem = self.config.build_problem(true)?;
        if x.len() != problem.design_bounds().len() {
            return Err(CliError::Config(format!(
                "design has {} entries, problem takes {}",
                x.len(),
                problem.design_bounds().len()
            )));
        }
        let (estimate, _) = self.validate(&problem, x)?;
        write_json(&self.path("yield.json"), &estimate)?;
        Ok(estimate)
    }

    /// Kernel-density baseline; writes `results.json` and `byo.json`.
    pub fn byo(&self) -> Result<Results, CliError> {
        let problem = self.config.build_problem(false)?;
        let names = problem.metric_names();
        let checks = criteria(&self.config.chance_spec(), &names).stage("byo")?;
        let objective = names
            .iter()
            .position(|n| *n == self.config.problem.objective.metric)
            .expect("objective metric checked during validation");
        let goal: Goal = self.config.problem.objective.sense;
        let byo: ByoResult =
            byo_optimize(&problem, &self.config.problem.mixture, &checks, (objective, goal), &self.config.byo)
                .stage("byo")?;
        write_json(&self.path("byo.json"), &byo)?;
        let (validation, expected) = self.validate(&problem, &byo.x)?;
        let results = Results {
            method: "byo".into(),
            problem: self.summary(&problem),
            epsilon: self.config.problem.epsilon,
            x_star: byo.x.clone(),
            objective: expected,
            expected_objective_mc: expected,
            status: if byo.passed { "passed" } else { "failed" }.into(),
            simulations: SimulationCounts {
                optimization: byo.simulation_count,
                validation: validation.samples,
            },
            validation,
            quadrature_residual_l1: None,
            oracle_agreement: None,
            seeds: self.seeds(),
            timestamp: timestamp(),
        };
        write_json(&self.path("results.json"), &results)?;
        Ok(results)
    }
}

/// Comparison table over result files of one problem, as CSV.
pub fn compare(results: &[Results]) -> Result<String, CliError> {
    if results.len() < 2 {
        return Err(CliError::Compare("need at least two results to compare".into()));
    }
    if let Some(r) = results.iter().find(|r| r.problem != results[0].problem) {
        return Err(CliError::Compare(format!(
            "results describe different problems ({} vs {})",
            results[0].problem.simulator, r.problem.simulator
        )));
    }
    let mut table = String::from("method,simulations,objective,yield_percent\n");
    for r in results {
        let label = match r.method.as_str() {
            "proposed" => format!("eps={}", r.epsilon),
            other => other.to_owned(),
        };
        let _ = writeln!(
            table,
            "{label},{},{:.4},{:.2}",
            r.simulations.optimization,
            r.objective,
            100.0 * r.validation.yield_fraction
        );
    }
    Ok(table)
}
