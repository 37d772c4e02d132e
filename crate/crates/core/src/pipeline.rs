//! End-to-end runs: sample features, sample collocation points, train, evaluate.

use std::time::{Duration, Instant};

use crate::assembly::{self, CollocationSet, Model};
use crate::error::{Error, Result};
use crate::evaluation::{self, ErrorReport, TestScheme};
use crate::features::{sample_features, FeatureDistribution, FeatureSet};
use crate::problems::ProblemSpec;
use crate::solvers::{self, FitReport, SolverConfig, SolverMethod, StopReason};

/// Everything needed for one reproducible run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub problem: ProblemSpec,
    pub features: FeatureDistribution,
    pub n_features: usize,
    pub m_interior: usize,
    /// One count per boundary group.
    pub m_boundary: Vec<usize>,
    pub solver: SolverConfig,
    pub test_scheme: TestScheme,
    /// Points per axis for the grid scheme, total points for the random scheme.
    pub n_test: usize,
    pub seed: u64,
}

impl RunSpec {
    /// Problem defaults for the collocation counts and a 100-per-axis test grid in 2D
    /// (10 000 random test points otherwise).
    pub fn new(problem: ProblemSpec, features: FeatureDistribution, n_features: usize, solver: SolverConfig) -> Self {
        let (test_scheme, n_test) =
            if problem.dim() == 2 { (TestScheme::Grid, 100) } else { (TestScheme::UniformRandom, 10_000) };
        Self {
            m_interior: problem.default_interior_points,
            m_boundary: problem.default_boundary_counts(),
            problem,
            features,
            n_features,
            solver,
            test_scheme,
            n_test,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        Error::check_dim(self.problem.dim(), self.features.dim)?;
        Error::check_dim(self.problem.boundary_groups.len(), self.m_boundary.len())?;
        if self.n_features == 0 {
            return Err(Error::param("number of features must be positive"));
        }
        if self.solver.method.is_linear_path() && !self.problem.is_linear() {
            return Err(Error::LinearityRequired(self.problem.name.clone()));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: Model,
    pub collocation: CollocationSet,
    pub report: FitReport,
    /// `None` when the problem has no known solution.
    pub error: Option<ErrorReport>,
    /// Time spent sampling and training, excluding evaluation.
    pub wall_time: Duration,
}

/// Solves the assembled linear system of an affine problem.
pub fn solve_linear(
    problem: &ProblemSpec,
    fs: &FeatureSet,
    pts: &CollocationSet,
    cfg: &SolverConfig,
) -> Result<(Model, FitReport)> {
    cfg.validate()?;
    let sys = assembly::assemble_linear_system(problem, fs, pts)?.weighted(&cfg.group_weights(problem))?;
    let (sol, penalty) = match cfg.method {
        SolverMethod::LinearLs => (solvers::solve_least_squares(sys.matrix.as_ref(), &sys.rhs)?, 0.0),
        SolverMethod::LinearMinNorm => (solvers::solve_min_norm(sys.matrix.as_ref(), &sys.rhs)?, 0.0),
        SolverMethod::Ridge(l) => (solvers::solve_ridge(sys.matrix.as_ref(), &sys.rhs, l)?, l),
        m => return Err(Error::Unsupported(format!("{m} on an assembled linear system"))),
    };
    let model = Model::new(fs.clone(), sol.coefficients)?;
    let objective = sol.residual_norm.powi(2) + penalty * solvers::norm(&model.coefficients).powi(2);
    let residuals = assembly::residual_vector(&model, problem, pts)?;
    let report = FitReport {
        final_objective: objective,
        iterations_used: 1,
        converged: sol.converged,
        stop_reason: StopReason::Direct,
        residual_norms: residuals.groups().map(solvers::norm).collect(),
        objective_history: vec![objective],
    };
    Ok((model, report))
}

/// Trains with the configured method.
pub fn train(problem: &ProblemSpec, fs: &FeatureSet, pts: &CollocationSet, cfg: &SolverConfig) -> Result<(Model, FitReport)> {
    match cfg.method {
        SolverMethod::GaussNewton => solvers::solve_gauss_newton(problem, fs, pts, cfg),
        SolverMethod::GradientDescent => solvers::solve_gradient_descent(problem, fs, pts, cfg),
        _ => solve_linear(problem, fs, pts, cfg),
    }
}

/// Samples features and collocation points from `spec.seed`, trains, and evaluates
/// against the manufactured solution when there is one.
pub fn run(spec: &RunSpec) -> Result<RunOutcome> {
    spec.validate()?;
    let start = Instant::now();
    let fs = sample_features(&spec.features, spec.n_features, spec.seed)?;
    let pts = assembly::sample_collocation(&spec.problem, spec.m_interior, &spec.m_boundary, spec.seed)?;
    let (model, report) = train(&spec.problem, &fs, &pts, &spec.solver)?;
    let wall_time = start.elapsed();
    let error = match spec.problem.true_solution {
        Some(_) => Some(evaluation::test_error(&model, &spec.problem, spec.test_scheme, spec.n_test, spec.seed)?),
        None => None,
    };
    Ok(RunOutcome { model, collocation: pts, report, error, wall_time })
}
