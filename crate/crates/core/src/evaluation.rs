//! Test errors, convergence studies and log-log rate fits.
//!
//! Errors are mean squared errors. A slope fitted to root-MSE would be half the MSE slope.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::assembly::{self, model_values, Model};
use crate::error::{Error, Result};
use crate::features::{approx_kernel, exact_kernel, sample_features, FeatureDistribution, FeatureKind};
use crate::pipeline::{self, RunSpec};
use crate::points::Points;
use crate::problems::ProblemSpec;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestScheme {
    /// `n` nodes per axis covering the closed box.
    Grid,
    /// `n` points i.i.d. uniform on the box.
    UniformRandom,
}

impl TestScheme {
    pub fn name(&self) -> &'static str {
        match self {
            TestScheme::Grid => "grid",
            TestScheme::UniformRandom => "random",
        }
    }
}

impl fmt::Display for TestScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(TestScheme::Grid),
            "random" | "uniform-random" | "uniform" => Ok(TestScheme::UniformRandom),
            _ => Err(Error::Unknown { kind: "test scheme", name: s.to_string() }),
        }
    }
}

const MAX_GRID_POINTS: usize = 10_000_000;

/// Test points for a problem's domain.
pub fn test_points(problem: &ProblemSpec, scheme: TestScheme, n_test: usize, seed: u64) -> Result<Points> {
    if n_test == 0 {
        return Err(Error::param("number of test points must be positive"));
    }
    match scheme {
        TestScheme::Grid => {
            let total = (n_test as f64).powi(problem.dim() as i32);
            if total > MAX_GRID_POINTS as f64 {
                return Err(Error::param(format!(
                    "a {n_test}-per-axis grid in {} dimensions is too large; use random test points",
                    problem.dim()
                )));
            }
            Ok(assembly::grid_points(&problem.domain, n_test))
        }
        TestScheme::UniformRandom => Ok(assembly::uniform_points(&problem.domain, n_test, seed)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub mse: f64,
    pub max_abs: f64,
    pub n_test: usize,
    pub test_scheme: TestScheme,
    pub seed: u64,
}

/// Mean squared and maximum absolute error of the model against the true solution.
pub fn test_error(model: &Model, problem: &ProblemSpec, scheme: TestScheme, n_test: usize, seed: u64) -> Result<ErrorReport> {
    let pts = test_points(problem, scheme, n_test, seed)?;
    let (mse, max_abs) = errors_at(model, problem, &pts)?;
    Ok(ErrorReport { mse, max_abs, n_test: pts.len(), test_scheme: scheme, seed })
}

/// `(mse, max_abs)` over the given points.
pub fn errors_at(model: &Model, problem: &ProblemSpec, pts: &Points) -> Result<(f64, f64)> {
    let sol = problem
        .true_solution
        .as_ref()
        .ok_or_else(|| Error::Unsupported(format!("test error for `{}` without a known solution", problem.name)))?;
    if pts.is_empty() {
        return Err(Error::Empty("no test points".into()));
    }
    let pred = model_values(model, pts)?;
    let (mut sq, mut max_abs) = (0.0, 0.0f64);
    for (x, p) in pts.iter().zip(pred) {
        let e = (sol.value(x) - p).abs();
        sq += e * e;
        max_abs = max_abs.max(e);
    }
    Ok((sq / pts.len() as f64, max_abs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares line through `(ln x, ln y)`, skipping non-positive or non-finite pairs.
///
/// `None` when fewer than two distinct `x` remain.
pub fn fit_log_log(xs: &[f64], ys: &[f64]) -> Option<LogLogFit> {
    let pairs: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if pairs.len() < 2 || !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some(LogLogFit { slope, intercept: my - slope * mx })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// Swept value is the interior count `M_Omega`.
    Collocation,
    Features,
    Variance,
}

impl SweepKind {
    pub fn name(&self) -> &'static str {
        match self {
            SweepKind::Collocation => "collocation",
            SweepKind::Features => "features",
            SweepKind::Variance => "variance",
        }
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "collocation" => Ok(SweepKind::Collocation),
            "features" => Ok(SweepKind::Features),
            "variance" => Ok(SweepKind::Variance),
            _ => Err(Error::Unknown { kind: "sweep", name: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub value: f64,
    pub repetition: usize,
    pub seed: u64,
    /// `None` when the cell failed; see `error`.
    pub mse: Option<f64>,
    pub error: Option<String>,
}

/// Aggregate of all repetitions at one swept value.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub value: f64,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub n_ok: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub kind: SweepKind,
    /// Ordered by swept value, then repetition.
    pub rows: Vec<StudyRow>,
    pub summary: Vec<CellSummary>,
    /// Fit of `ln(mean mse)` against `ln(value)`. `None` if fewer than two values
    /// succeeded. Variance sweeps fill it too, but it carries no rate meaning there.
    pub fit: Option<LogLogFit>,
}

impl StudyResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.mse.is_none()).count()
    }

    pub fn mean_at(&self, value: f64) -> Option<f64> {
        self.summary.iter().find(|s| s.value == value).and_then(|s| s.mean)
    }
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Builds the result from finished rows, which must be grouped by value.
pub fn summarize(kind: SweepKind, rows: Vec<StudyRow>) -> StudyResult {
    let mut summary: Vec<CellSummary> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let value = rows[i].value;
        let mut ok: Vec<f64> = rows[i..].iter().take_while(|r| r.value == value).filter_map(|r| r.mse).collect();
        let count = rows[i..].iter().take_while(|r| r.value == value).count();
        let mean = (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64);
        summary.push(CellSummary { value, mean, median: median(&mut ok), n_ok: ok.len() });
        i += count;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = summary.iter().filter_map(|s| s.mean.map(|m| (s.value, m))).unzip();
    StudyResult { kind, fit: fit_log_log(&xs, &ys), rows, summary }
}

/// Runs `values x repetitions` cells in parallel. Repetition `r` uses seed
/// `base.seed + r` for every value, so cells at different values share features and
/// points wherever the sizes agree.
fn run_study(kind: SweepKind, base: &RunSpec, values: &[f64], repetitions: usize, configure: impl Fn(&mut RunSpec, f64) + Sync) -> Result<StudyResult> {
    if values.is_empty() {
        return Err(Error::param("a study needs at least one swept value"));
    }
    if repetitions == 0 {
        return Err(Error::param("a study needs at least one repetition"));
    }
    if base.problem.true_solution.is_none() {
        return Err(Error::Unsupported(format!("study of `{}` without a known solution", base.problem.name)));
    }
    let cells: Vec<(f64, usize, RunSpec)> = values
        .iter()
        .flat_map(|&v| (0..repetitions).map(move |r| (v, r)))
        .map(|(v, r)| {
            let mut spec = base.clone();
            configure(&mut spec, v);
            spec.seed = base.seed.wrapping_add(r as u64);
            (v, r, spec)
        })
        .collect();
    for (_, _, spec) in &cells {
        spec.validate()?;
    }
    let rows = cells
        .par_iter()
        .map(|(value, repetition, spec)| {
            let (value, repetition) = (*value, *repetition);
            let (mse, error) = match pipeline::run(spec) {
                Ok(out) => match out.error {
                    Some(e) if e.mse.is_finite() => (Some(e.mse), None),
                    Some(e) => (None, Some(format!("non-finite mse {}", e.mse))),
                    None => (None, Some("no test error".into())),
                },
                Err(e) => (None, Some(e.to_string())),
            };
            StudyRow { value, repetition, seed: spec.seed, mse, error }
        })
        .collect();
    Ok(summarize(kind, rows))
}

/// Sweeps `(m_interior, boundary counts)` pairs; the swept value is `m_interior`.
pub fn study_collocation(base: &RunSpec, counts: &[(usize, Vec<usize>)], repetitions: usize) -> Result<StudyResult> {
    let values: Vec<f64> = counts.iter().map(|c| c.0 as f64).collect();
    run_study(SweepKind::Collocation, base, &values, repetitions, |spec, v| {
        let (m, b) = counts.iter().find(|c| c.0 as f64 == v).expect("value from counts");
        spec.m_interior = *m;
        spec.m_boundary = b.clone();
    })
}

pub fn study_features(base: &RunSpec, n_features: &[usize], repetitions: usize) -> Result<StudyResult> {
    let values: Vec<f64> = n_features.iter().map(|&n| n as f64).collect();
    run_study(SweepKind::Features, base, &values, repetitions, |spec, v| spec.n_features = v as usize)
}

/// Sweeps the per-coordinate variance of Gaussian features.
pub fn study_variance(base: &RunSpec, variances: &[f64], repetitions: usize) -> Result<StudyResult> {
    if !matches!(base.features.kind, FeatureKind::Gaussian { .. }) {
        return Err(Error::Unsupported("variance sweep of non-Gaussian features".into()));
    }
    if let Some(v) = variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::param(format!("variance must be positive, got {v}")));
    }
    run_study(SweepKind::Variance, base, variances, repetitions, |spec, v| {
        spec.features.kind = FeatureKind::Gaussian { variance: v };
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelCheck {
    /// `(N, rms error)` per requested `N`.
    pub rows: Vec<(usize, f64)>,
    pub fit: Option<LogLogFit>,
}

/// RMS of `approx_kernel - exact_kernel` over `n_pairs` random pairs in `[0,1]^d`,
/// for each feature count.
pub fn kernel_check(dist: &FeatureDistribution, n_features: &[usize], n_pairs: usize, seed: u64) -> Result<KernelCheck> {
    dist.validate()?;
    if matches!(dist.kind, FeatureKind::Uniform { .. }) {
        return Err(Error::Unsupported("kernel check for uniform features".into()));
    }
    if n_pairs == 0 {
        return Err(Error::param("number of pairs must be positive"));
    }
    if n_features.is_empty() || n_features.contains(&0) {
        return Err(Error::param("feature counts must be positive and nonempty"));
    }
    let d = dist.dim;
    let mut rng = rng::stream(seed, Stream::KernelPairs);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..n_pairs)
        .map(|_| {
            let x = (0..d).map(|_| rng.random::<f64>()).collect();
            let y = (0..d).map(|_| rng.random::<f64>()).collect();
            (x, y)
        })
        .collect();
    let rows = n_features
        .par_iter()
        .map(|&n| {
            let fs = sample_features(dist, n, seed)?;
            let mut sq = 0.0;
            for (x, y) in &pairs {
                let e = approx_kernel(&fs, x, y)? - exact_kernel(dist, x, y)?;
                sq += e * e;
            }
            Ok((n, (sq / n_pairs as f64).sqrt()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().map(|&(n, e)| (n as f64, e)).unzip();
    Ok(KernelCheck { fit: fit_log_log(&xs, &ys), rows })
}
