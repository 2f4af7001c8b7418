//! Natural-gradient descent with the derived metric.

use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::jets::{self, FnScalar, Jet3, JetError, SmoothFn};
use crate::models::Model;
use crate::reduction::{self, ReductionError, DEFAULT_RANK_TOL};

pub const MAX_HALVINGS: usize = 20;

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("step size must be positive and finite, got {0}")]
    StepSize(f64),
    #[error("objective takes {got} arguments, base has dimension {expected}")]
    Arity { expected: usize, got: usize },
    #[error("target has {got} coordinates, base has dimension {expected}")]
    Target { expected: usize, got: usize },
    #[error("{0:?} is outside the model domain")]
    OutsideDomain(Vec<f64>),
    #[error("no admissible step after {MAX_HALVINGS} halvings at {0:?}")]
    Halving(Vec<f64>),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
}

pub type Result<T> = std::result::Result<T, OptimizeError>;

#[derive(Clone)]
pub struct OptimizeProblem {
    pub model: Model,
    pub objective: Arc<dyn SmoothFn>,
    pub eta: f64,
    pub max_steps: usize,
    /// Stop once the Euclidean norm of the objective gradient is below this.
    pub grad_tol: f64,
    pub rank_tol: f64,
    /// Threshold on the Koszul residual for the diagnostics flag.
    pub koszul_tol: f64,
}

impl OptimizeProblem {
    pub fn new(model: Model, objective: Arc<dyn SmoothFn>, eta: f64, max_steps: usize, grad_tol: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(OptimizeError::StepSize(eta));
        }
        if objective.arity() != model.base_dim() {
            return Err(OptimizeError::Arity { expected: model.base_dim(), got: objective.arity() });
        }
        Ok(Self { model, objective, eta, max_steps, grad_tol, rank_tol: DEFAULT_RANK_TOL, koszul_tol: 1e-8 })
    }

    /// Objective `θ ↦ F(θ, θ*)`.
    pub fn towards(model: Model, target: &[f64], eta: f64, max_steps: usize, grad_tol: f64) -> Result<Self> {
        let n = model.base_dim();
        if target.len() != n {
            return Err(OptimizeError::Target { expected: n, got: target.len() });
        }
        let f = model.contrast.clone();
        let star: Vec<Jet3> = target.iter().map(|&v| Jet3::constant(v)).collect();
        let objective = FnScalar::new(n, move |x| {
            let args: Vec<Jet3> = x.iter().chain(&star).copied().collect();
            f.eval(&args)
        });
        Self::new(model, Arc::new(objective), eta, max_steps, grad_tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub theta: Vec<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub condition: f64,
    pub kernel_rank: usize,
    /// Halvings needed to stay in the domain on the step that produced `theta`.
    pub halvings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    MaxSteps,
    Failed(String),
}

/// Outcome of checking the Koszul condition at the starting point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KoszulFlag {
    pub kernel_rank: usize,
    pub residual: f64,
    pub tol: f64,
    /// The kernel is non-trivial and the Koszul condition fails, so the
    /// update has no quotient interpretation.
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub stop: StopReason,
    pub koszul: KoszulFlag,
}

impl Trajectory {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }

    pub fn steps_taken(&self) -> usize {
        self.records.len() - 1
    }

    pub fn final_theta(&self) -> &[f64] {
        &self.records.last().expect("trajectory has an initial record").theta
    }
}

struct Local {
    objective: f64,
    gradient: DVector<f64>,
    direction: DVector<f64>,
    condition: f64,
    kernel_rank: usize,
}

fn local(problem: &OptimizeProblem, theta: &[f64]) -> Result<Local> {
    let objective = problem.objective.eval_f64(theta)?;
    let gradient = DVector::from_vec(jets::gradient(problem.objective.as_ref(), theta)?);
    let frame = reduction::kernel_at(&problem.model.contrast, theta, problem.rank_tol)?;
    let direction = &frame.pseudo_inverse * &gradient;
    Ok(Local {
        objective,
        gradient,
        direction,
        condition: frame.condition(),
        kernel_rank: frame.rank,
    })
}

fn admissible(problem: &OptimizeProblem, theta: &[f64]) -> bool {
    problem.model.domain.contains(theta) && problem.objective.eval_f64(theta).is_ok_and(f64::is_finite)
}

/// One update `θ − η g⁺ ∇L`, halving the step while it leaves the domain.
/// Returns the new point and the number of halvings.
pub fn natural_step(problem: &OptimizeProblem, theta: &[f64]) -> Result<(Vec<f64>, usize)> {
    let l = local(problem, theta)?;
    step_from(problem, theta, &l.direction)
}

fn step_from(problem: &OptimizeProblem, theta: &[f64], direction: &DVector<f64>) -> Result<(Vec<f64>, usize)> {
    let mut eta = problem.eta;
    for halvings in 0..=MAX_HALVINGS {
        let next: Vec<f64> = theta.iter().zip(direction.iter()).map(|(t, d)| t - eta * d).collect();
        if admissible(problem, &next) {
            return Ok((next, halvings));
        }
        eta *= 0.5;
    }
    Err(OptimizeError::Halving(theta.to_vec()))
}

pub fn koszul_flag(problem: &OptimizeProblem, theta: &[f64]) -> Result<KoszulFlag> {
    let frame = reduction::kernel_at(&problem.model.contrast, theta, problem.rank_tol)?;
    let residual = if frame.rank == 0 {
        0.0
    } else {
        reduction::koszul_residual(&problem.model.contrast, theta, &frame)?
    };
    Ok(KoszulFlag {
        kernel_rank: frame.rank,
        residual,
        tol: problem.koszul_tol,
        violated: frame.rank > 0 && residual > problem.koszul_tol,
    })
}

/// Iterate [`natural_step`] from `theta0`. Failures after the start are
/// reported in the trajectory, not returned as errors.
pub fn run(problem: &OptimizeProblem, theta0: &[f64]) -> Result<Trajectory> {
    if theta0.len() != problem.model.base_dim() || !admissible(problem, theta0) {
        return Err(OptimizeError::OutsideDomain(theta0.to_vec()));
    }
    let koszul = koszul_flag(problem, theta0)?;
    let mut theta = theta0.to_vec();
    let mut halvings = 0;
    let mut records = Vec::new();
    let mut step = 0;
    let stop = loop {
        let l = match local(problem, &theta) {
            Ok(l) => l,
            Err(e) if step > 0 => break StopReason::Failed(e.to_string()),
            Err(e) => return Err(e),
        };
        let grad_norm = l.gradient.norm();
        records.push(StepRecord {
            step,
            theta: theta.clone(),
            objective: l.objective,
            grad_norm,
            condition: l.condition,
            kernel_rank: l.kernel_rank,
            halvings,
        });
        if grad_norm < problem.grad_tol {
            break StopReason::Converged;
        }
        if step == problem.max_steps {
            break StopReason::MaxSteps;
        }
        match step_from(problem, &theta, &l.direction) {
            Ok((next, h)) => {
                theta = next;
                halvings = h;
            }
            Err(e) => break StopReason::Failed(e.to_string()),
        }
        step += 1;
    };
    Ok(Trajectory { records, stop, koszul })
}

/// Largest `η / 2^k` (`k ≤ MAX_HALVINGS`) for which `probe_steps` steps from
/// `theta0` never increase the objective.
pub fn probe_monotone_eta(problem: &OptimizeProblem, theta0: &[f64], probe_steps: usize) -> Result<f64> {
    let mut trial = problem.clone();
    trial.max_steps = probe_steps;
    for _ in 0..=MAX_HALVINGS {
        let t = run(&trial, theta0)?;
        if t.records.windows(2).all(|w| w[1].objective <= w[0].objective) {
            return Ok(trial.eta);
        }
        trial.eta *= 0.5;
    }
    Err(OptimizeError::Halving(theta0.to_vec()))
}

/// Independent runs from several starting points, one thread each; results
/// keep the order of `starts`.
pub fn run_many(problem: &OptimizeProblem, starts: &[Vec<f64>]) -> Vec<Result<Trajectory>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = starts.iter().map(|t| s.spawn(move || run(problem, t))).collect();
        handles.into_iter().map(|h| h.join().expect("optimizer thread panicked")).collect()
    })
}
