//! Dense linear solvers and trainers for the regularized collocation objective
//!
//! `F(c) = mu |c|^2 + sum_g lambda_g |r_g(c)|^2`.

use std::fmt;
use std::str::FromStr;

use faer::linalg::solvers::SolveLstsq;
use faer::{Mat, MatRef};

use crate::assembly::{self, CollocationSet, Model};
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::points::Points;
use crate::problems::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverMethod {
    LinearLs,
    LinearMinNorm,
    /// Ridge on the assembled linear system with the given penalty.
    Ridge(f64),
    GaussNewton,
    GradientDescent,
}

impl SolverMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SolverMethod::LinearLs => "linear-ls",
            SolverMethod::LinearMinNorm => "linear-minnorm",
            SolverMethod::Ridge(_) => "ridge",
            SolverMethod::GaussNewton => "gauss-newton",
            SolverMethod::GradientDescent => "gd",
        }
    }

    pub fn is_linear_path(&self) -> bool {
        matches!(self, SolverMethod::LinearLs | SolverMethod::LinearMinNorm | SolverMethod::Ridge(_))
    }
}

impl fmt::Display for SolverMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverMethod::Ridge(l) => write!(f, "ridge({l})"),
            m => f.write_str(m.name()),
        }
    }
}

impl FromStr for SolverMethod {
    type Err = Error;

    /// Accepts `ridge` (penalty 1e-8), `ridge(1e-6)` and the other method names.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "linear-ls" | "ls" => SolverMethod::LinearLs,
            "linear-minnorm" | "minnorm" => SolverMethod::LinearMinNorm,
            "ridge" => SolverMethod::Ridge(1e-8),
            "gauss-newton" | "gn" | "lm" => SolverMethod::GaussNewton,
            "gd" | "gradient-descent" => SolverMethod::GradientDescent,
            _ => {
                let lambda = s
                    .strip_prefix("ridge(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::Unknown { kind: "solver", name: s.to_string() })?;
                SolverMethod::Ridge(lambda)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: SolverMethod,
    /// Weight `mu` of the coefficient penalty.
    pub reg_weight: f64,
    /// Weight of the interior residuals.
    pub interior_weight: f64,
    /// Multiplies every boundary group's own weight.
    pub boundary_weight: f64,
    pub max_iterations: usize,
    /// Gradient-descent learning rate.
    pub step_size: f64,
    pub tol_residual: f64,
    pub tol_step: f64,
    /// Initial Levenberg-Marquardt damping, relative to the largest squared singular value.
    pub lm_damping_init: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::GaussNewton,
            reg_weight: 1e-8,
            interior_weight: 1.0,
            boundary_weight: 1.0,
            max_iterations: 50,
            step_size: 1e-3,
            tol_residual: 1e-10,
            tol_step: 1e-8,
            lm_damping_init: 1e-3,
        }
    }
}

impl SolverConfig {
    pub fn with_method(method: SolverMethod) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("interior weight", self.interior_weight),
            ("boundary weight", self.boundary_weight),
            ("step size", self.step_size),
            ("residual tolerance", self.tol_residual),
            ("step tolerance", self.tol_step),
            ("damping", self.lm_damping_init),
        ];
        for (what, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{what} must be positive and finite, got {v}")));
            }
        }
        if !(self.reg_weight >= 0.0 && self.reg_weight.is_finite()) {
            return Err(Error::param(format!("regularization weight must be nonnegative, got {}", self.reg_weight)));
        }
        if let SolverMethod::Ridge(l) = self.method {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::param(format!("ridge penalty must be positive, got {l}")));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations must be at least 1"));
        }
        Ok(())
    }

    /// `lambda_g` for the interior followed by each boundary group.
    pub fn group_weights(&self, problem: &ProblemSpec) -> Vec<f64> {
        std::iter::once(self.interior_weight)
            .chain(problem.boundary_groups.iter().map(|g| self.boundary_weight * g.weight))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Single direct solve.
    Direct,
    ResidualTolerance,
    StepTolerance,
    /// No damped step decreased the objective.
    Stalled,
    MaxIterations,
    /// Objective increased for 50 consecutive epochs.
    Increasing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub final_objective: f64,
    pub iterations_used: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Unweighted residual norms, interior first then boundary groups.
    pub residual_norms: Vec<f64>,
    /// Objective after every iteration, starting with the initial value.
    pub objective_history: Vec<f64>,
}

/// Output of a dense linear solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    pub coefficients: Vec<f64>,
    /// Numerical rank, or the column count for ridge.
    pub rank: usize,
    /// `|M c - y|_2`.
    pub residual_norm: f64,
    /// False when the matrix is numerically zero.
    pub converged: bool,
}

fn check_system(m: MatRef<'_, f64>, y: &[f64]) -> Result<()> {
    Error::check_dim(m.nrows(), y.len())?;
    if m.ncols() == 0 {
        return Err(Error::Empty("system has no unknowns".into()));
    }
    Ok(())
}

fn residual_norm(m: MatRef<'_, f64>, c: &[f64], y: &[f64]) -> f64 {
    let mut r: Vec<f64> = y.iter().map(|v| -v).collect();
    for (k, &ck) in c.iter().enumerate() {
        if ck != 0.0 {
            for (ri, mi) in r.iter_mut().zip(m.col(k).iter()) {
                *ri += mi * ck;
            }
        }
    }
    norm(&r)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Singular values treated as zero: below `max(rows, cols) * eps * s_max`.
pub fn rank_threshold(rows: usize, cols: usize, s_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * s_max
}

fn pinv_solve(m: MatRef<'_, f64>, y: &[f64]) -> Result<LinearSolution> {
    check_system(m, y)?;
    let n = m.ncols();
    if m.nrows() == 0 {
        return Ok(LinearSolution { coefficients: vec![0.0; n], rank: 0, residual_norm: 0.0, converged: false });
    }
    let svd = m.thin_svd().map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let s_max = if s.nrows() > 0 { s[0] } else { 0.0 };
    let tol = rank_threshold(m.nrows(), n, s_max);
    let mut c = vec![0.0; n];
    let mut rank = 0;
    for i in 0..s.nrows() {
        if !(s[i] > tol) || s_max == 0.0 {
            continue;
        }
        rank += 1;
        let zi: f64 = u.col(i).iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / s[i];
        for (ck, vk) in c.iter_mut().zip(v.col(i).iter()) {
            *ck += zi * vk;
        }
    }
    let residual_norm = residual_norm(m, &c, y);
    Ok(LinearSolution { coefficients: c, rank, residual_norm, converged: rank > 0 })
}

/// Least-squares solution of `M c = y` by a truncated SVD.
///
/// Rank-deficient systems get the minimum-norm minimizer; an all-zero matrix yields
/// `c = 0` with `converged = false`.
pub fn solve_least_squares(m: MatRef<'_, f64>, y: &[f64]) -> Result<LinearSolution> {
    pinv_solve(m, y)
}

/// Minimum-norm solution of `M c = y` (the pseudo-inverse solution).
///
/// Inconsistent systems get the minimum-norm least-squares solution; check
/// `residual_norm`.
pub fn solve_min_norm(m: MatRef<'_, f64>, y: &[f64]) -> Result<LinearSolution> {
    pinv_solve(m, y)
}

/// Minimizes `|M c - y|^2 + lambda |c|^2` through a QR factorization of `[M; sqrt(lambda) I]`.
pub fn solve_ridge(m: MatRef<'_, f64>, y: &[f64], lambda: f64) -> Result<LinearSolution> {
    check_system(m, y)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param(format!("ridge penalty must be positive, got {lambda}")));
    }
    let (rows, n) = (m.nrows(), m.ncols());
    let sl = lambda.sqrt();
    let aug = Mat::from_fn(rows + n, n, |i, j| {
        if i < rows {
            m[(i, j)]
        } else if i - rows == j {
            sl
        } else {
            0.0
        }
    });
    let rhs = Mat::from_fn(rows + n, 1, |i, _| if i < rows { y[i] } else { 0.0 });
    let sol = aug.qr().solve_lstsq(&rhs);
    let c: Vec<f64> = (0..n).map(|k| sol[(k, 0)]).collect();
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::LinearAlgebra("ridge solve produced non-finite coefficients".into()));
    }
    let residual_norm = residual_norm(m, &c, y);
    Ok(LinearSolution { coefficients: c, rank: n, residual_norm, converged: true })
}

fn check_nonlinear(problem: &ProblemSpec, fs: &FeatureSet, pts: &CollocationSet, cfg: &SolverConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    Error::check_dim(problem.dim(), fs.dim())?;
    if fs.is_empty() {
        return Err(Error::Empty("feature set has no features".into()));
    }
    if pts.is_empty() {
        return Err(Error::Empty("collocation set has no points".into()));
    }
    Ok(cfg.group_weights(problem))
}

fn objective_from(residual: &[f64], c: &[f64], mu: f64) -> f64 {
    let r2: f64 = residual.iter().map(|r| r * r).sum();
    let c2: f64 = c.iter().map(|v| v * v).sum();
    r2 + mu * c2
}

/// `F(c)` for the given coefficients.
pub fn objective(problem: &ProblemSpec, model: &Model, pts: &CollocationSet, cfg: &SolverConfig) -> Result<f64> {
    let weights = check_nonlinear(problem, &model.features, pts, cfg)?;
    let r = assembly::stacked_residual(model, problem, pts, &weights)?;
    Ok(objective_from(&r, &model.coefficients, cfg.reg_weight))
}

/// `F(c)` and `grad F(c) = 2 mu c + sum_g 2 lambda_g J_g^T r_g`.
pub fn objective_gradient(
    problem: &ProblemSpec,
    model: &Model,
    pts: &CollocationSet,
    cfg: &SolverConfig,
) -> Result<(f64, Vec<f64>)> {
    let weights = check_nonlinear(problem, &model.features, pts, cfg)?;
    let lin = assembly::stacked_linearization(model, problem, pts, &weights)?;
    let value = objective_from(&lin.residual, &model.coefficients, cfg.reg_weight);
    let grad = model
        .coefficients
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let jr: f64 = lin.jacobian.col(k).iter().zip(&lin.residual).map(|(j, r)| j * r).sum();
            2.0 * cfg.reg_weight * c + 2.0 * jr
        })
        .collect();
    Ok((value, grad))
}

fn group_norms(model: &Model, problem: &ProblemSpec, pts: &CollocationSet) -> Result<Vec<f64>> {
    let r = assembly::residual_vector(model, problem, pts)?;
    Ok(r.groups().map(norm).collect())
}

/// Thin SVD `J = U S V^T` with the pieces the damped steps need.
struct StepBasis {
    s: Vec<f64>,
    v: Mat<f64>,
    /// `U^T r`.
    z: Vec<f64>,
    threshold: f64,
}

impl StepBasis {
    fn new(jacobian: &Mat<f64>, residual: &[f64]) -> Result<Self> {
        let svd = jacobian.thin_svd().map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
        let sv = svd.S().column_vector();
        let s: Vec<f64> = (0..sv.nrows()).map(|i| sv[i]).collect();
        let u = svd.U();
        let z = (0..s.len()).map(|i| u.col(i).iter().zip(residual).map(|(a, b)| a * b).sum()).collect();
        let s_max = s.first().copied().unwrap_or(0.0);
        let threshold = rank_threshold(jacobian.nrows(), jacobian.ncols(), s_max);
        Ok(Self { s, v: svd.V().to_owned(), z, threshold })
    }

    fn s_max_sq(&self) -> f64 {
        self.s.first().map_or(0.0, |s| s * s)
    }

    /// Minimizer of `|r + J d|^2 + mu |c + d|^2 + damping |d|^2`.
    fn step(&self, c: &[f64], mu: f64, damping: f64) -> Vec<f64> {
        let n = c.len();
        let shift = mu + damping;
        // p = V^T c
        let p: Vec<f64> = (0..self.s.len()).map(|i| self.v.col(i).iter().zip(c).map(|(a, b)| a * b).sum()).collect();
        let mut step = vec![0.0; n];
        if shift > 0.0 {
            // orthogonal complement of range(V): -mu/(mu+damping) (c - V p)
            let keep = mu / shift;
            for (dk, ck) in step.iter_mut().zip(c) {
                *dk = -keep * ck;
            }
            for i in 0..self.s.len() {
                let di = -(self.s[i] * self.z[i] + mu * p[i]) / (self.s[i] * self.s[i] + shift);
                let coef = di + keep * p[i];
                for (dk, vk) in step.iter_mut().zip(self.v.col(i).iter()) {
                    *dk += coef * vk;
                }
            }
        } else {
            for i in 0..self.s.len() {
                if self.s[i] > self.threshold && self.s[i] > 0.0 {
                    let di = -self.z[i] / self.s[i];
                    for (dk, vk) in step.iter_mut().zip(self.v.col(i).iter()) {
                        *dk += di * vk;
                    }
                }
            }
        }
        step
    }
}

const MAX_REJECTIONS: usize = 20;

/// Levenberg-Marquardt on `F(c)` starting from `c = 0`.
///
/// Every iteration first tries the undamped Gauss-Newton step and falls back to
/// damped steps (damping relative to the largest squared singular value of the
/// weighted Jacobian, halved on acceptance and quadrupled on rejection) only if it
/// fails to decrease `F`. Affine problems therefore finish in at most two iterations.
pub fn solve_gauss_newton(
    problem: &ProblemSpec,
    fs: &FeatureSet,
    pts: &CollocationSet,
    cfg: &SolverConfig,
) -> Result<(Model, FitReport)> {
    let weights = check_nonlinear(problem, fs, pts, cfg)?;
    let mu = cfg.reg_weight;
    let mut model = Model::zeros(fs.clone());
    let mut lin = assembly::stacked_linearization(&model, problem, pts, &weights)?;
    let mut f = objective_from(&lin.residual, &model.coefficients, mu);
    let mut history = vec![f];
    let mut damping = cfg.lm_damping_init;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        if norm(&lin.residual) <= cfg.tol_residual {
            stop = StopReason::ResidualTolerance;
            break;
        }
        iterations += 1;
        let basis = StepBasis::new(&lin.jacobian, &lin.residual)?;
        let c = &model.coefficients;
        let c_norm = norm(c);

        let gn = basis.step(c, mu, 0.0);
        if norm(&gn) <= cfg.tol_step * (1.0 + c_norm) {
            stop = StopReason::StepTolerance;
            break;
        }

        let trial = |step: &[f64]| -> Result<(Vec<f64>, f64)> {
            let cand: Vec<f64> = c.iter().zip(step).map(|(a, b)| a + b).collect();
            let m = Model { features: fs.clone(), coefficients: cand };
            let r = assembly::stacked_residual(&m, problem, pts, &weights)?;
            let value = objective_from(&r, &m.coefficients, mu);
            Ok((m.coefficients, value))
        };

        let mut accepted = None;
        let (cand, value) = trial(&gn)?;
        if value < f {
            accepted = Some((cand, value));
        } else {
            let mut any_finite = value.is_finite();
            for _ in 0..MAX_REJECTIONS {
                let step = basis.step(c, mu, damping * basis.s_max_sq());
                let (cand, value) = trial(&step)?;
                any_finite |= value.is_finite();
                if value < f {
                    damping = (damping / 2.0).max(f64::MIN_POSITIVE);
                    accepted = Some((cand, value));
                    break;
                }
                damping *= 4.0;
            }
            if accepted.is_none() && !any_finite {
                return Err(Error::Divergence {
                    iterations,
                    last_objective: f,
                    last_coefficients: model.coefficients,
                });
            }
        }

        match accepted {
            Some((cand, value)) => {
                model.coefficients = cand;
                f = value;
                history.push(f);
                lin = assembly::stacked_linearization(&model, problem, pts, &weights)?;
            }
            None => {
                stop = StopReason::Stalled;
                break;
            }
        }
    }

    let converged = stop != StopReason::MaxIterations;
    let residual_norms = group_norms(&model, problem, pts)?;
    let report = FitReport {
        final_objective: f,
        iterations_used: iterations,
        converged,
        stop_reason: stop,
        residual_norms,
        objective_history: history,
    };
    Ok((model, report))
}

const MAX_INCREASES: usize = 50;

/// Full-batch gradient descent on `F(c)` from `c = 0` for `max_iterations` epochs.
///
/// Stops early when the weighted residual or the step falls below its tolerance, or
/// after 50 consecutive objective increases (reported as not converged).
pub fn solve_gradient_descent(
    problem: &ProblemSpec,
    fs: &FeatureSet,
    pts: &CollocationSet,
    cfg: &SolverConfig,
) -> Result<(Model, FitReport)> {
    check_nonlinear(problem, fs, pts, cfg)?;
    let mut model = Model::zeros(fs.clone());
    let mut last_finite = (model.coefficients.clone(), f64::NAN);
    let mut history = Vec::new();
    let mut increases = 0;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    loop {
        let (value, grad) = objective_gradient(problem, &model, pts, cfg)?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                iterations,
                last_objective: last_finite.1,
                last_coefficients: last_finite.0,
            });
        }
        if let Some(&prev) = history.last() {
            increases = if value > prev { increases + 1 } else { 0 };
        }
        history.push(value);
        last_finite = (model.coefficients.clone(), value);
        if increases >= MAX_INCREASES {
            stop = StopReason::Increasing;
            break;
        }
        let weighted_residual = (value - cfg.reg_weight * norm(&model.coefficients).powi(2)).max(0.0).sqrt();
        if weighted_residual <= cfg.tol_residual {
            stop = StopReason::ResidualTolerance;
            break;
        }
        if iterations == cfg.max_iterations {
            break;
        }
        let step_norm = cfg.step_size * norm(&grad);
        if iterations > 0 && step_norm <= cfg.tol_step * (1.0 + norm(&model.coefficients)) {
            stop = StopReason::StepTolerance;
            break;
        }
        for (c, g) in model.coefficients.iter_mut().zip(&grad) {
            *c -= cfg.step_size * g;
        }
        iterations += 1;
    }

    let report = FitReport {
        final_objective: *history.last().expect("at least one evaluation"),
        iterations_used: iterations,
        converged: matches!(stop, StopReason::ResidualTolerance | StopReason::StepTolerance),
        stop_reason: stop,
        residual_norms: group_norms(&model, problem, pts)?,
        objective_history: history,
    };
    Ok((model, report))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegressionMode {
    Ridge(f64),
    MinNorm,
}

/// Feature matrix `A_{jk} = cos(<w_k, x_j> + b_k)`.
pub fn feature_matrix(fs: &FeatureSet, pts: &Points) -> Result<Mat<f64>> {
    Error::check_dim(fs.dim(), pts.dim())?;
    Ok(Mat::from_fn(pts.len(), fs.len(), |j, k| fs.phase(k, pts.row(j)).cos()))
}

/// Fits `A c ~ y` for samples of a function.
pub fn fit_regression(pts: &Points, targets: &[f64], fs: &FeatureSet, mode: RegressionMode) -> Result<Model> {
    if pts.is_empty() {
        return Err(Error::Empty("regression needs at least one sample".into()));
    }
    Error::check_dim(pts.len(), targets.len())?;
    let a = feature_matrix(fs, pts)?;
    let sol = match mode {
        RegressionMode::Ridge(l) => solve_ridge(a.as_ref(), targets, l)?,
        RegressionMode::MinNorm => solve_min_norm(a.as_ref(), targets)?,
    };
    Model::new(fs.clone(), sol.coefficients)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_linear_system, sample_collocation};
    use crate::features::{sample_features, FeatureDistribution};
    use crate::problems::{builtin_advection_diffusion, builtin_linear_elliptic, builtin_nonlinear_elliptic};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> Mat<f64> {
        Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
    }

    fn random_mat(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat<f64> {
        Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn matvec(m: &Mat<f64>, c: &[f64]) -> Vec<f64> {
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|k| m[(i, k)] * c[k]).sum()).collect()
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    #[test]
    fn least_squares_examples() {
        let id = Mat::<f64>::identity(3, 3);
        let y = [1.0, -2.0, 3.5];
        assert!(dist(&solve_least_squares(id.as_ref(), &y).unwrap().coefficients, &y) < 1e-15);

        let m = mat(2, 1, &[1.0, 1.0]);
        let sol = solve_least_squares(m.as_ref(), &[0.0, 2.0]).unwrap();
        assert!((sol.coefficients[0] - 1.0).abs() < 1e-14);
        assert!((sol.residual_norm - 2f64.sqrt()).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_mat(30, 10, &mut rng);
        let c: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = matvec(&m, &c);
        let sol = solve_least_squares(m.as_ref(), &y).unwrap();
        assert!(sol.residual_norm <= 1e-10 * norm(&y));
        assert_eq!(sol.rank, 10);
    }

    #[test]
    fn zero_matrix_is_flagged() {
        let z = Mat::<f64>::zeros(4, 3);
        let sol = solve_least_squares(z.as_ref(), &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(sol.coefficients, vec![0.0; 3]);
        assert!(!sol.converged);
        assert_eq!(sol.rank, 0);
        assert!(solve_least_squares(z.as_ref(), &[1.0]).is_err());
    }

    #[test]
    fn min_norm_examples() {
        let m = mat(1, 2, &[1.0, 1.0]);
        let sol = solve_min_norm(m.as_ref(), &[2.0]).unwrap();
        assert!(dist(&sol.coefficients, &[1.0, 1.0]) < 1e-14);

        let m = mat(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let sol = solve_min_norm(m.as_ref(), &[3.0, 5.0]).unwrap();
        assert!(dist(&sol.coefficients, &[0.8, 1.4]) < 1e-14);

        // inconsistent: x = 1 and x = 3
        let m = mat(2, 1, &[1.0, 1.0]);
        let sol = solve_min_norm(m.as_ref(), &[1.0, 3.0]).unwrap();
        assert!((sol.coefficients[0] - 2.0).abs() < 1e-14);
        assert!((sol.residual_norm - 2f64.sqrt()).abs() < 1e-14);
    }

    /// Null-space basis of a wide matrix from the trailing right singular vectors.
    fn null_space(m: &Mat<f64>) -> Vec<Vec<f64>> {
        let svd = m.svd().unwrap();
        let v = svd.V();
        (m.nrows()..m.ncols()).map(|i| v.col(i).iter().copied().collect()).collect()
    }

    #[test]
    fn min_norm_beats_every_null_space_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_mat(8, 20, &mut rng);
        let y: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = solve_min_norm(m.as_ref(), &y).unwrap().coefficients;
        let basis = null_space(&m);
        for _ in 0..50 {
            let mut v = vec![0.0; 20];
            for b in &basis {
                let a = rng.random_range(-1.0..1.0);
                v.iter_mut().zip(b).for_each(|(vi, bi)| *vi += a * bi);
            }
            assert!(norm(&matvec(&m, &v)) < 1e-12);
            let perturbed: Vec<f64> = c.iter().zip(&v).map(|(a, b)| a + b).collect();
            assert!(norm(&perturbed) > norm(&c));
        }
    }

    #[test]
    fn ridge_examples() {
        let id = Mat::<f64>::identity(3, 3);
        let y = [1.0, -2.0, 4.0];
        let sol = solve_ridge(id.as_ref(), &y, 0.5).unwrap();
        let expected: Vec<f64> = y.iter().map(|v| v / 1.5).collect();
        assert!(dist(&sol.coefficients, &expected) < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_mat(10, 6, &mut rng);
        let y: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mty: Vec<f64> = (0..6).map(|k| (0..10).map(|i| m[(i, k)] * y[i]).sum()).collect();
        for lambda in [1e3, 1e6, 1e9] {
            let c = solve_ridge(m.as_ref(), &y, lambda).unwrap().coefficients;
            assert!(norm(&c) <= norm(&mty) / lambda * (1.0 + 1e-9));
        }
        assert!(solve_ridge(m.as_ref(), &y, 0.0).is_err());
        assert!(solve_ridge(m.as_ref(), &y, -1.0).is_err());
    }

    #[test]
    fn ridge_approaches_min_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let m = random_mat(15, 40, &mut rng);
            let y: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mn = solve_min_norm(m.as_ref(), &y).unwrap().coefficients;
            let gaps: Vec<f64> = [1e-4, 1e-8, 1e-12]
                .iter()
                .map(|&l| dist(&solve_ridge(m.as_ref(), &y, l).unwrap().coefficients, &mn))
                .collect();
            assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
            assert!(gaps[2] <= 1e-6);
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in [SolverMethod::LinearLs, SolverMethod::LinearMinNorm, SolverMethod::GaussNewton, SolverMethod::GradientDescent] {
            assert_eq!(m.name().parse::<SolverMethod>().unwrap(), m);
        }
        assert_eq!("ridge(0.5)".parse::<SolverMethod>().unwrap(), SolverMethod::Ridge(0.5));
        assert!("newton".parse::<SolverMethod>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = [
            SolverConfig { step_size: 0.0, ..Default::default() },
            SolverConfig { tol_step: 0.0, ..Default::default() },
            SolverConfig { reg_weight: -1.0, ..Default::default() },
            SolverConfig { max_iterations: 0, ..Default::default() },
            SolverConfig { interior_weight: f64::NAN, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Parameter(_))), "{cfg:?}");
        }
    }

    fn features(problem: &ProblemSpec, n: usize, variance: f64, seed: u64) -> FeatureSet {
        sample_features(&FeatureDistribution::gaussian(problem.dim(), variance).unwrap(), n, seed).unwrap()
    }

    fn small_set(problem: &ProblemSpec, m: usize, seed: u64) -> CollocationSet {
        let counts: Vec<usize> = problem.boundary_groups.iter().map(|_| m / 4).collect();
        sample_collocation(problem, m, &counts, seed).unwrap()
    }

    #[test]
    fn gauss_newton_is_exact_on_affine_problems() {
        for problem in [builtin_linear_elliptic(), builtin_advection_diffusion()] {
            let fs = features(&problem, 60, 4.0, 1);
            let pts = small_set(&problem, 200, 2);
            let cfg = SolverConfig { reg_weight: 1e-4, boundary_weight: 3.0, ..Default::default() };
            let (model, report) = solve_gauss_newton(&problem, &fs, &pts, &cfg).unwrap();
            assert!(report.iterations_used <= 2, "{}: {report:?}", problem.name);
            assert!(report.converged);

            let sys = assemble_linear_system(&problem, &fs, &pts).unwrap().weighted(&cfg.group_weights(&problem)).unwrap();
            let ridge = solve_ridge(sys.matrix.as_ref(), &sys.rhs, cfg.reg_weight).unwrap().coefficients;
            let gap = dist(&model.coefficients, &ridge);
            assert!(gap <= 1e-8 * norm(&ridge).max(1.0), "{}: gap {gap}", problem.name);
        }
    }

    #[test]
    fn gauss_newton_decreases_objective_monotonically() {
        let problem = builtin_nonlinear_elliptic();
        let fs = features(&problem, 200, 100.0, 3);
        let pts = small_set(&problem, 250, 4);
        let cfg = SolverConfig { max_iterations: 15, ..Default::default() };
        let (_, report) = solve_gauss_newton(&problem, &fs, &pts, &cfg).unwrap();
        assert!(report.objective_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(report.final_objective < 1e-4 * report.objective_history[0]);
        assert!(report.iterations_used <= cfg.max_iterations);
        assert_eq!(report.residual_norms.len(), 2);
    }

    #[test]
    fn heavy_penalty_drives_coefficients_to_zero() {
        let mut problem = builtin_linear_elliptic();
        problem.interior = std::sync::Arc::new(crate::problems::ScreenedPoisson { source: std::sync::Arc::new(|_| 0.0) });
        let fs = features(&problem, 30, 4.0, 5);
        let pts = small_set(&problem, 80, 6);
        let cfg = SolverConfig { reg_weight: 1e6, ..Default::default() };
        let (model, _) = solve_gauss_newton(&problem, &fs, &pts, &cfg).unwrap();
        assert!(norm(&model.coefficients) < 1e-12);
    }

    #[test]
    fn one_gradient_step_from_zero() {
        let problem = builtin_advection_diffusion();
        let fs = features(&problem, 20, 1.0, 7);
        let pts = small_set(&problem, 40, 8);
        let step = 1e-3;
        let cfg = SolverConfig {
            method: SolverMethod::GradientDescent,
            reg_weight: 0.0,
            max_iterations: 1,
            step_size: step,
            boundary_weight: 2.0,
            ..Default::default()
        };
        let (model, report) = solve_gradient_descent(&problem, &fs, &pts, &cfg).unwrap();
        assert_eq!(report.iterations_used, 1);
        assert_eq!(report.objective_history.len(), 2);

        // grad F(0) = -sum_g 2 lambda_g A_g^T y_g on the assembled system
        let sys = assemble_linear_system(&problem, &fs, &pts).unwrap();
        let w = cfg.group_weights(&problem);
        let mut expected = vec![0.0; fs.len()];
        for (b, wg) in sys.blocks.iter().zip(&w) {
            for j in b.start..b.start + b.len {
                for (k, e) in expected.iter_mut().enumerate() {
                    *e += step * 2.0 * wg * sys.matrix[(j, k)] * sys.rhs[j];
                }
            }
        }
        assert!(dist(&model.coefficients, &expected) <= 1e-12 * norm(&expected));
    }

    #[test]
    fn gradient_descent_decreases_convex_objective() {
        let problem = builtin_linear_elliptic();
        let fs = features(&problem, 30, 2.0, 9);
        let pts = small_set(&problem, 100, 10);
        let sys = assemble_linear_system(&problem, &fs, &pts).unwrap();
        let s_max = sys.matrix.thin_svd().unwrap().S().column_vector()[0];
        // Lipschitz constant of grad F is 2 (s_max^2 + mu)
        let cfg = SolverConfig {
            method: SolverMethod::GradientDescent,
            step_size: 0.9 / (2.0 * (s_max * s_max + 1e-8)),
            max_iterations: 200,
            ..Default::default()
        };
        let (_, report) = solve_gradient_descent(&problem, &fs, &pts, &cfg).unwrap();
        assert!(report.objective_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(report.final_objective < report.objective_history[0]);
        let zero_step = SolverConfig { step_size: 0.0, ..cfg };
        assert!(matches!(solve_gradient_descent(&problem, &fs, &pts, &zero_step), Err(Error::Parameter(_))));
    }

    #[test]
    fn huge_steps_flag_non_convergence() {
        let problem = builtin_linear_elliptic();
        let fs = features(&problem, 10, 2.0, 11);
        let pts = small_set(&problem, 40, 12);
        let cfg = SolverConfig { method: SolverMethod::GradientDescent, step_size: 5.0, max_iterations: 10_000, ..Default::default() };
        match solve_gradient_descent(&problem, &fs, &pts, &cfg) {
            Ok((_, report)) => {
                assert!(!report.converged);
                assert_eq!(report.stop_reason, StopReason::Increasing);
            }
            Err(Error::Divergence { last_objective, last_coefficients, .. }) => {
                assert!(last_objective.is_finite());
                assert!(last_coefficients.iter().all(|c| c.is_finite()));
            }
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn regression_examples() {
        let dist_ = FeatureDistribution::gaussian(1, 4.0).unwrap();
        let fs = sample_features(&dist_, 12, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pts = Points::from_rows(1, (0..6).map(|_| [rng.random_range(-1.0..1.0)]));

        // noiseless single feature
        let y: Vec<f64> = pts.iter().map(|x| 2.5 * fs.phase(3, x).cos()).collect();
        let model = fit_regression(&pts, &y, &fs, RegressionMode::MinNorm).unwrap();
        let pred: Vec<f64> = pts.iter().map(|x| model.value(x).unwrap()).collect();
        assert!(dist(&pred, &y) < 1e-8);

        // planted coefficients, overdetermined
        let fs = sample_features(&dist_, 5, 2).unwrap();
        let pts = Points::from_rows(1, (0..40).map(|_| [rng.random_range(-1.0..1.0)]));
        let planted = [0.3, -1.2, 0.7, 2.0, -0.4];
        let y: Vec<f64> = pts.iter().map(|x| (0..5).map(|k| planted[k] * fs.phase(k, x).cos()).sum()).collect();
        let model = fit_regression(&pts, &y, &fs, RegressionMode::Ridge(1e-14)).unwrap();
        assert!(dist(&model.coefficients, &planted) < 1e-6);
        assert!(fit_regression(&Points::new(1), &[], &fs, RegressionMode::MinNorm).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn interpolation_when_full_row_rank(seed in 0u64..10_000, m in 1usize..12) {
            let fs = sample_features(&FeatureDistribution::gaussian(2, 9.0).unwrap(), 40, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = Points::from_rows(2, (0..m).map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]));
            let y: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let model = fit_regression(&pts, &y, &fs, RegressionMode::MinNorm).unwrap();
            for (x, t) in pts.iter().zip(&y) {
                prop_assert!((model.value(x).unwrap() - t).abs() < 1e-8);
            }
        }

        #[test]
        fn objective_gradient_matches_finite_differences(seed in 0u64..10_000) {
            let problem = builtin_nonlinear_elliptic();
            let fs = features(&problem, 15, 9.0, seed);
            let pts = small_set(&problem, 30, seed + 1);
            let cfg = SolverConfig { reg_weight: 0.1, boundary_weight: 2.0, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c: Vec<f64> = (0..15).map(|_| rng.random_range(-0.5..0.5)).collect();
            let model = Model::new(fs.clone(), c).unwrap();
            let (_, grad) = objective_gradient(&problem, &model, &pts, &cfg).unwrap();
            let h = 1e-5;
            for k in 0..15 {
                let mut p = model.clone();
                let mut q = model.clone();
                p.coefficients[k] += h;
                q.coefficients[k] -= h;
                let fd = (objective(&problem, &p, &pts, &cfg).unwrap() - objective(&problem, &q, &pts, &cfg).unwrap()) / (2.0 * h);
                prop_assert!((fd - grad[k]).abs() <= 1e-5 * grad[k].abs().max(1.0), "k={} fd={} exact={}", k, fd, grad[k]);
            }
        }
    }
}
