//! Chance-constrained problem assembly with the Cantelli mean/variance bound.

use serde::{Deserialize, Serialize};

use crate::basis::{LegendreBasis, PolynomialBasis};
use crate::error::{Error, Result};
use crate::surrogate::SurrogateModel;

/// `sqrt((1 - eps) / eps)`, the one-sided Cantelli multiplier.
pub fn kappa(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::invalid(format!("risk level {epsilon} outside (0, 0.5]")));
    }
    Ok(((1.0 - epsilon) / epsilon).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    /// metric <= threshold
    Upper,
    /// metric >= threshold
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Goal {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub metric: String,
    pub sense: Bound,
    pub threshold: f64,
    /// Overrides the spec-wide risk level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub metric: String,
    pub sense: Goal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChanceSpec {
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    /// Risk level applied to every constraint without its own.
    pub epsilon: f64,
    /// Split `epsilon` evenly across the constraints.
    #[serde(default)]
    pub bonferroni: bool,
}

impl ChanceSpec {
    pub fn validate(&self) -> Result<()> {
        for eps in std::iter::once(self.epsilon).chain(self.constraints.iter().filter_map(|c| c.epsilon)) {
            kappa(eps)?;
        }
        if let Some(c) = self.constraints.iter().find(|c| !c.threshold.is_finite()) {
            return Err(Error::invalid(format!("threshold of '{}' is not finite", c.metric)));
        }
        Ok(())
    }

    /// Risk level used for constraint `i`.
    pub fn risk(&self, i: usize) -> f64 {
        let c = &self.constraints[i];
        match (c.epsilon, self.bonferroni) {
            (Some(e), _) => e,
            (None, true) => self.epsilon / self.constraints.len() as f64,
            (None, false) => self.epsilon,
        }
    }
}

/// One chance constraint in canonical `y <= u` form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CantelliConstraint {
    pub metric: String,
    /// Mean polynomial over the design basis, already sign-flipped for lower bounds.
    pub mean: Vec<f64>,
    /// Inner polynomials whose squares sum to the variance.
    pub inner: Vec<Vec<f64>>,
    pub threshold: f64,
    /// `None` keeps only the mean condition.
    pub kappa: Option<f64>,
    pub epsilon: f64,
    pub scale: f64,
}

/// Box-constrained polynomial program over a shared design basis:
/// minimize the objective subject to, per chance constraint,
/// `kappa^2 sum v^2 <= (u - m)^2` and `m <= u`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChanceProblem {
    pub basis: LegendreBasis,
    pub objective_metric: String,
    /// Objective coefficients in minimization form.
    pub objective: Vec<f64>,
    pub goal: Goal,
    pub constraints: Vec<CantelliConstraint>,
}

/// Values and gradients at one design point; constraints are scaled so
/// that `g <= 0` means feasible.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub objective_grad: Vec<f64>,
    pub constraints: Vec<f64>,
    /// Row per constraint.
    pub jacobian: Vec<Vec<f64>>,
}

impl ChanceProblem {
    /// Objective-only problem (used for plain box-constrained minimization).
    pub fn unconstrained(basis: LegendreBasis, objective: Vec<f64>, goal: Goal) -> Result<Self> {
        if objective.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: objective.len(),
            });
        }
        let objective = match goal {
            Goal::Min => objective,
            Goal::Max => objective.into_iter().map(|c| -c).collect(),
        };
        Ok(Self {
            basis,
            objective_metric: "objective".into(),
            objective,
            goal,
            constraints: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        self.basis.bounds()
    }

    /// Number of scalar constraints `g_j <= 0`.
    pub fn constraint_count(&self) -> usize {
        self.constraints.iter().map(|c| if c.kappa.is_some() { 2 } else { 1 }).sum()
    }

    /// Objective in the user's sense (maximized values stay positive).
    pub fn objective_value(&self, x: &[f64]) -> Result<f64> {
        let phi = self.basis.evaluate(x)?;
        let v = dot(&self.objective, &phi);
        Ok(match self.goal {
            Goal::Min => v,
            Goal::Max => -v,
        })
    }

    /// Mean and standard deviation of each constrained metric in canonical form.
    pub fn moments(&self, x: &[f64]) -> Result<Vec<(f64, f64)>> {
        let phi = self.basis.evaluate(x)?;
        Ok(self
            .constraints
            .iter()
            .map(|c| {
                let var: f64 = c.inner.iter().map(|v| dot(v, &phi).powi(2)).sum();
                (dot(&c.mean, &phi), var.sqrt())
            })
            .collect())
    }

    /// Scaled constraint values only.
    pub fn constraint_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        let phi = self.basis.evaluate(x)?;
        let mut out = Vec::with_capacity(self.constraint_count());
        for c in &self.constraints {
            let m = dot(&c.mean, &phi);
            if let Some(k) = c.kappa {
                let var: f64 = c.inner.iter().map(|v| dot(v, &phi).powi(2)).sum();
                out.push((k * k * var - (c.threshold - m).powi(2)) / c.scale);
            }
            out.push((m - c.threshold) / c.scale);
        }
        Ok(out)
    }

    /// Largest scaled constraint value, or `-inf` without constraints.
    pub fn max_violation(&self, x: &[f64]) -> Result<f64> {
        Ok(self.constraint_values(x)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn evaluate(&self, x: &[f64]) -> Evaluation {
        let d = self.dim();
        let n = self.basis.len();
        let mut phi = vec![0.0; n];
        let mut grad = vec![0.0; n * d];
        self.basis.gradient_into(x, &mut phi, &mut grad);
        let poly = |c: &[f64]| -> (f64, Vec<f64>) {
            let mut g = vec![0.0; d];
            for (k, &ck) in c.iter().enumerate() {
                if ck != 0.0 {
                    for i in 0..d {
                        g[i] += ck * grad[k * d + i];
                    }
                }
            }
            (dot(c, &phi), g)
        };
        let (objective, objective_grad) = poly(&self.objective);
        let mut constraints = Vec::with_capacity(self.constraint_count());
        let mut jacobian = Vec::with_capacity(self.constraint_count());
        for c in &self.constraints {
            let (m, dm) = poly(&c.mean);
            if let Some(k) = c.kappa {
                let mut var = 0.0;
                let mut dvar = vec![0.0; d];
                for v in &c.inner {
                    let (vv, dv) = poly(v);
                    var += vv * vv;
                    for i in 0..d {
                        dvar[i] += 2.0 * vv * dv[i];
                    }
                }
                let gap = c.threshold - m;
                constraints.push((k * k * var - gap * gap) / c.scale);
                jacobian.push((0..d).map(|i| (k * k * dvar[i] + 2.0 * gap * dm[i]) / c.scale).collect());
            }
            constraints.push((m - c.threshold) / c.scale);
            jacobian.push(dm.iter().map(|g| g / c.scale).collect());
        }
        Evaluation {
            objective,
            objective_grad,
            constraints,
            jacobian,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn build(model: &SurrogateModel, spec: &ChanceSpec, cantelli: bool) -> Result<ChanceProblem> {
    spec.validate()?;
    let lookup = |name: &str| {
        model
            .metric_index(name)
            .ok_or_else(|| Error::invalid(format!("metric '{name}' is not in the surrogate model")))
    };
    let obj = lookup(&spec.objective.metric)?;
    let mut problem = ChanceProblem::unconstrained(model.design_basis().clone(), model.mean_in_x(obj), spec.objective.sense)?;
    problem.objective_metric = spec.objective.metric.clone();
    for (i, c) in spec.constraints.iter().enumerate() {
        let idx = lookup(&c.metric)?;
        let sign = match c.sense {
            Bound::Upper => 1.0,
            Bound::Lower => -1.0,
        };
        let flip = |v: Vec<f64>| v.into_iter().map(|x| sign * x).collect::<Vec<_>>();
        let epsilon = spec.risk(i);
        problem.constraints.push(CantelliConstraint {
            metric: c.metric.clone(),
            mean: flip(model.mean_in_x(idx)),
            inner: model.variance_in_x(idx).into_iter().map(flip).collect(),
            threshold: sign * c.threshold,
            kappa: if cantelli { Some(kappa(epsilon)?) } else { None },
            epsilon,
            scale: c.threshold.abs().max(1.0),
        });
    }
    Ok(problem)
}

/// Objective `E[h](x)` with each chance constraint replaced by its Cantelli pair.
pub fn assemble(model: &SurrogateModel, spec: &ChanceSpec) -> Result<ChanceProblem> {
    build(model, spec, true)
}

/// Same objective with constraints on the mean only.
pub fn mean_only_assemble(model: &SurrogateModel, spec: &ChanceSpec) -> Result<ChanceProblem> {
    build(model, spec, false)
}
