//! Command-line front end: `solve`, `study` and `kernel-check`.
//!
//! Every flag can also be set in a flat `key = value` file passed with `--config`,
//! where `key` is the flag name without leading dashes. Flags on the command line
//! override the file. After a successful run the effective configuration is written
//! next to the output as `<out>.config`.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rfpde::evaluation::{self, KernelCheck, StudyResult, SweepKind};
use rfpde::pipeline::{self, RunSpec};
use rfpde::problems::{builtin, BuiltinOptions, BUILTIN_NAMES};
use rfpde::{FeatureDistribution, FeatureKind, ProblemSpec, SolverConfig, SolverMethod, TestScheme};

#[derive(Debug, Parser)]
#[command(name = "rfpde", version, about = "Meshfree PDE solver with random cosine features")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem and write a summary row.
    Solve(SolveArgs),
    /// Sweep collocation counts, feature counts or variances.
    Study(StudyArgs),
    /// Measure the Monte-Carlo kernel approximation error.
    KernelCheck(KernelArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dist {
    Gaussian,
    Laplace,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Solver {
    LinearLs,
    LinearMinnorm,
    Ridge,
    GaussNewton,
    Gd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    Grid,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    Collocation,
    Features,
    Variance,
}

/// Feature distribution flags shared by every command.
#[derive(Debug, Clone, Args)]
pub struct FeatureArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    pub dist: Dist,
    /// Per-coordinate variance of Gaussian frequencies.
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    /// Scale of the Laplace kernel (Cauchy frequencies).
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Half-width of uniform frequencies.
    #[arg(long, default_value_t = 1.0)]
    pub uniform_r: f64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub with_bias: bool,
}

impl FeatureArgs {
    fn distribution(&self, dim: usize) -> Result<FeatureDistribution> {
        let kind = match self.dist {
            Dist::Gaussian => FeatureKind::Gaussian { variance: self.sigma2 },
            Dist::Laplace => FeatureKind::Laplace { scale: self.gamma },
            Dist::Uniform => FeatureKind::Uniform { half_width: self.uniform_r },
        };
        Ok(FeatureDistribution::new(kind, dim)?.with_bias(self.with_bias))
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("dist", self.dist.to_possible_value().expect("named").get_name().to_string()),
            ("sigma2", self.sigma2.to_string()),
            ("gamma", self.gamma.to_string()),
            ("uniform-r", self.uniform_r.to_string()),
            ("with-bias", self.with_bias.to_string()),
        ]
    }
}

/// Flags describing one run.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, default_value = "nonlinear-elliptic")]
    pub problem: String,
    /// Dimension (nonlinear-poisson only; checked against the others).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Frequency `a` of the Allen-Cahn solution.
    #[arg(long, default_value_t = 1.0)]
    pub frequency: f64,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long, default_value_t = 100)]
    pub n_features: usize,
    /// Interior collocation points (problem default when omitted).
    #[arg(long)]
    pub m_interior: Option<usize>,
    /// Boundary points per group, comma separated (problem default when omitted).
    #[arg(long, value_delimiter = ',')]
    pub m_boundary: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value = "gauss-newton")]
    pub solver: Solver,
    /// Coefficient penalty `mu` (also the ridge penalty).
    #[arg(long, default_value_t = 1e-8)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_interior: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_boundary: f64,
    /// Maximum Gauss-Newton iterations or gradient-descent epochs.
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// Gradient-descent learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    /// Relative step tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Absolute tolerance on the weighted residual norm.
    #[arg(long, default_value_t = 1e-10)]
    pub tol_residual: f64,
    /// Initial Levenberg-Marquardt damping relative to the largest squared singular value.
    #[arg(long, default_value_t = 1e-3)]
    pub lm_damping: f64,
    /// Test points: `grid` uses n-test nodes per axis, `random` n-test points.
    #[arg(long, value_enum)]
    pub test_scheme: Option<Scheme>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat `key = value` file with defaults for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl RunArgs {
    fn problem(&self) -> Result<ProblemSpec> {
        let opts = BuiltinOptions { dim: self.dim.unwrap_or(2), frequency: self.frequency };
        let problem = builtin(&self.problem, opts)
            .with_context(|| format!("known problems: {}", BUILTIN_NAMES.join(", ")))?;
        if let Some(d) = self.dim {
            if d != problem.dim() {
                bail!("problem `{}` is {}-dimensional, got --dim {d}", problem.name, problem.dim());
            }
        }
        Ok(problem)
    }

    fn method(&self) -> SolverMethod {
        match self.solver {
            Solver::LinearLs => SolverMethod::LinearLs,
            Solver::LinearMinnorm => SolverMethod::LinearMinNorm,
            Solver::Ridge => SolverMethod::Ridge(self.mu),
            Solver::GaussNewton => SolverMethod::GaussNewton,
            Solver::Gd => SolverMethod::GradientDescent,
        }
    }

    pub fn spec(&self) -> Result<RunSpec> {
        let problem = self.problem()?;
        let solver = SolverConfig {
            method: self.method(),
            reg_weight: self.mu,
            interior_weight: self.lambda_interior,
            boundary_weight: self.lambda_boundary,
            max_iterations: self.epochs,
            step_size: self.step,
            tol_residual: self.tol_residual,
            tol_step: self.tol,
            lm_damping_init: self.lm_damping,
        };
        let dist = self.features.distribution(problem.dim())?;
        let mut spec = RunSpec::new(problem, dist, self.n_features, solver);
        if let Some(m) = self.m_interior {
            spec.m_interior = m;
        }
        if let Some(b) = &self.m_boundary {
            let groups: Vec<&str> = spec.problem.boundary_groups.iter().map(|g| g.name.as_str()).collect();
            if b.len() != groups.len() {
                bail!("--m-boundary needs {} comma-separated counts (groups: {})", groups.len(), groups.join(", "));
            }
            spec.m_boundary = b.clone();
        }
        if let Some(s) = self.test_scheme {
            spec.test_scheme = match s {
                Scheme::Grid => TestScheme::Grid,
                Scheme::Random => TestScheme::UniformRandom,
            };
            if self.n_test.is_none() && s == Scheme::Random {
                spec.n_test = 10_000;
            }
        }
        if let Some(n) = self.n_test {
            spec.n_test = n;
        }
        spec.seed = self.seed;
        spec.validate()?;
        Ok(spec)
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        let list = |v: &Option<Vec<usize>>| v.as_ref().map(|v| join(v));
        let mut out = vec![("problem", self.problem.clone())];
        push_opt(&mut out, "dim", self.dim);
        out.push(("frequency", self.frequency.to_string()));
        out.extend(self.features.pairs());
        out.push(("n-features", self.n_features.to_string()));
        push_opt(&mut out, "m-interior", self.m_interior);
        push_opt(&mut out, "m-boundary", list(&self.m_boundary));
        out.push(("solver", self.solver.to_possible_value().expect("named").get_name().to_string()));
        out.push(("mu", self.mu.to_string()));
        out.push(("lambda-interior", self.lambda_interior.to_string()));
        out.push(("lambda-boundary", self.lambda_boundary.to_string()));
        out.push(("epochs", self.epochs.to_string()));
        out.push(("step", self.step.to_string()));
        out.push(("tol", self.tol.to_string()));
        out.push(("tol-residual", self.tol_residual.to_string()));
        out.push(("lm-damping", self.lm_damping.to_string()));
        push_opt(&mut out, "test-scheme", self.test_scheme.map(|s| s.to_possible_value().expect("named").get_name().to_string()));
        push_opt(&mut out, "n-test", self.n_test);
        out.push(("seed", self.seed.to_string()));
        out
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Also write `x..., u_true, u_pred, abs_err` at the test points.
    #[arg(long)]
    pub points_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum)]
    pub sweep: Sweep,
    /// Swept values: interior counts, feature counts or variances.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Boundary counts per swept interior count, groups separated by `:` (e.g. `84,124,164`
    /// or `50:100,100:200`). Fixed at `--m-boundary` when omitted.
    #[arg(long, value_delimiter = ',')]
    pub boundary_values: Option<Vec<String>>,
    #[arg(long, default_value_t = 10)]
    pub repetitions: usize,
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, value_delimiter = ',', default_value = "100,400,1600,6400")]
    pub n_list: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub n_pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn push_opt<T: ToString>(out: &mut Vec<(&'static str, String)>, key: &'static str, v: Option<T>) {
    if let Some(v) = v {
        out.push((key, v.to_string()));
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Reads a flat `key = value` file into `--key value` arguments.
///
/// Blank lines and lines starting with `#` are skipped.
pub fn config_file_args(path: &Path) -> Result<Vec<OsString>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("{}:{}: expected `key = value`", path.display(), i + 1))?;
        let key = key.trim().trim_start_matches("--");
        if key == "config" {
            bail!("{}:{}: nested config files are not supported", path.display(), i + 1);
        }
        out.push(OsString::from(format!("--{key}")));
        out.push(OsString::from(value.trim()));
    }
    Ok(out)
}

fn find_config(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Parses arguments, splicing config-file values in before the command-line flags so
/// the latter win.
pub fn parse_args(args: Vec<OsString>) -> Result<Cli> {
    let args = match (find_config(&args), args.len()) {
        (Some(path), n) if n >= 2 => {
            // list flags append instead of overriding, so drop config keys given on the command line
            let given: Vec<String> = args[2..]
                .iter()
                .filter_map(|a| a.to_str()?.strip_prefix("--").map(|k| k.split('=').next().unwrap_or(k).to_string()))
                .collect();
            let mut spliced = args[..2].to_vec();
            for pair in config_file_args(&path)?.chunks(2) {
                let key = pair[0].to_string_lossy();
                if !given.iter().any(|g| key.strip_prefix("--") == Some(g.as_str())) {
                    spliced.extend_from_slice(pair);
                }
            }
            spliced.extend_from_slice(&args[2..]);
            spliced
        }
        _ => args,
    };
    Ok(Cli::try_parse_from(args)?)
}

/// Writes `contents` to `path` through a temporary file in the same directory, so a
/// failed run never leaves a partial file behind.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().context("output path has no file name")?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".config");
    PathBuf::from(s)
}

fn render_config(command: &str, pairs: &[(&'static str, String)]) -> String {
    let mut s = format!("# effective configuration of `rfpde {command}`\n");
    for (k, v) in pairs {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s
}

/// Sends the main CSV to `--out` (plus its config sidecar) or to stdout.
fn emit(out: Option<&Path>, csv: &[u8], command: &str, pairs: &[(&'static str, String)]) -> Result<()> {
    match out {
        Some(path) => {
            write_atomic(path, csv)?;
            write_atomic(&sidecar_path(path), render_config(command, pairs).as_bytes())
        }
        None => {
            io::stdout().write_all(csv)?;
            Ok(())
        }
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)
}

pub const SUMMARY_HEADER: [&str; 11] =
    ["problem", "method", "N", "sigma2", "M_interior", "M_boundary", "seed", "mse", "max_abs", "iterations", "wall_time_seconds"];

pub fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let spec = args.run.spec()?;
    let start = Instant::now();
    let outcome = pipeline::run(&spec)?;
    let wall = start.elapsed().as_secs_f64();
    let (mse, max_abs) = match &outcome.error {
        Some(e) => (sci(e.mse), sci(e.max_abs)),
        None => (String::new(), String::new()),
    };
    let row = vec![
        spec.problem.name.clone(),
        spec.solver.method.to_string(),
        spec.n_features.to_string(),
        spec.features.kind.parameter().to_string(),
        spec.m_interior.to_string(),
        spec.m_boundary.iter().sum::<usize>().to_string(),
        spec.seed.to_string(),
        mse,
        max_abs,
        outcome.report.iterations_used.to_string(),
        format!("{wall:.6}"),
    ];
    let summary = csv_bytes(&SUMMARY_HEADER, [row])?;

    let points = match &args.points_out {
        Some(path) => {
            let sol = spec.problem.true_solution.as_ref().context("--points-out needs a problem with a known solution")?;
            let pts = evaluation::test_points(&spec.problem, spec.test_scheme, spec.n_test, spec.seed)?;
            let pred = rfpde::assembly::model_values(&outcome.model, &pts)?;
            let mut header: Vec<String> = (1..=spec.problem.dim()).map(|i| format!("x{i}")).collect();
            header.extend(["u_true", "u_pred", "abs_err"].map(String::from));
            let rows = pts.iter().zip(&pred).map(|(x, &p)| {
                let u = sol.value(x);
                let mut r: Vec<String> = x.iter().map(ToString::to_string).collect();
                r.extend([sci(u), sci(p), sci((u - p).abs())]);
                r
            });
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            Some((path.clone(), csv_bytes(&header, rows)?))
        }
        None => None,
    };

    if !outcome.report.converged {
        eprintln!("warning: solver stopped without converging ({:?})", outcome.report.stop_reason);
    }
    emit(args.run.out.as_deref(), &summary, "solve", &args.run.pairs())?;
    if let Some((path, bytes)) = points {
        write_atomic(&path, &bytes)?;
    }
    Ok(())
}

/// Shortest round-trip scientific notation.
fn sci(v: f64) -> String {
    format!("{v:e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(sci).unwrap_or_default()
}

pub const STUDY_HEADER: [&str; 5] = ["sweep_kind", "swept_value", "repetition", "seed", "mse"];

/// Long-form rows, then `fit` footer rows holding the slope and intercept in the `mse`
/// column (empty when undefined).
pub fn study_csv(result: &StudyResult) -> Result<Vec<u8>> {
    let kind = result.kind.name();
    let mut rows: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| vec![kind.into(), r.value.to_string(), r.repetition.to_string(), r.seed.to_string(), fmt_opt(r.mse)])
        .collect();
    rows.push(vec!["fit".into(), "slope".into(), String::new(), String::new(), fmt_opt(result.fit.map(|f| f.slope))]);
    rows.push(vec!["fit".into(), "intercept".into(), String::new(), String::new(), fmt_opt(result.fit.map(|f| f.intercept))]);
    csv_bytes(&STUDY_HEADER, rows)
}

fn parse_boundary_values(raw: &[String], groups: usize) -> Result<Vec<Vec<usize>>> {
    raw.iter()
        .map(|entry| {
            let counts = entry
                .split(':')
                .map(|c| c.trim().parse::<usize>().with_context(|| format!("bad boundary count `{entry}`")))
                .collect::<Result<Vec<_>>>()?;
            if counts.len() != groups {
                bail!("boundary entry `{entry}` needs {groups} `:`-separated counts");
            }
            Ok(counts)
        })
        .collect()
}

fn as_counts(values: &[f64], what: &str) -> Result<Vec<usize>> {
    values
        .iter()
        .map(|&v| {
            if v >= 1.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
                Ok(v as usize)
            } else {
                bail!("{what} must be positive integers, got {v}")
            }
        })
        .collect()
}

pub fn cmd_study(args: &StudyArgs) -> Result<()> {
    if args.values.is_empty() {
        bail!("--values must list at least one value");
    }
    let base = args.run.spec()?;
    let result = match args.sweep {
        Sweep::Collocation => {
            let m = as_counts(&args.values, "interior counts")?;
            let boundary = match &args.boundary_values {
                Some(raw) => {
                    let b = parse_boundary_values(raw, base.problem.boundary_groups.len())?;
                    if b.len() != m.len() {
                        bail!("--boundary-values needs one entry per swept value");
                    }
                    b
                }
                None => vec![base.m_boundary.clone(); m.len()],
            };
            let counts: Vec<(usize, Vec<usize>)> = m.into_iter().zip(boundary).collect();
            evaluation::study_collocation(&base, &counts, args.repetitions)?
        }
        Sweep::Features => evaluation::study_features(&base, &as_counts(&args.values, "feature counts")?, args.repetitions)?,
        Sweep::Variance => evaluation::study_variance(&base, &args.values, args.repetitions)?,
    };
    for r in result.rows.iter().filter(|r| r.mse.is_none()) {
        eprintln!(
            "warning: cell value={} repetition={} failed: {}",
            r.value,
            r.repetition,
            r.error.as_deref().unwrap_or("unknown")
        );
    }
    if result.fit.is_none() {
        eprintln!("warning: slope undefined (fewer than two successful swept values)");
    }
    if result.kind == SweepKind::Variance {
        eprintln!("note: the variance-sweep slope is reported for completeness and is not a convergence rate");
    }
    let mut pairs = args.run.pairs();
    pairs.push(("sweep", args.sweep.to_possible_value().expect("named").get_name().to_string()));
    pairs.push(("values", join(&args.values)));
    if let Some(b) = &args.boundary_values {
        pairs.push(("boundary-values", b.join(",")));
    }
    pairs.push(("repetitions", args.repetitions.to_string()));
    emit(args.run.out.as_deref(), &study_csv(&result)?, "study", &pairs)
}

pub const KERNEL_HEADER: [&str; 2] = ["n_features", "rms_error"];

/// `(N, rms)` rows followed by `slope` and `intercept` footer rows.
pub fn kernel_csv(check: &KernelCheck) -> Result<Vec<u8>> {
    let mut rows: Vec<Vec<String>> = check.rows.iter().map(|(n, e)| vec![n.to_string(), sci(*e)]).collect();
    rows.push(vec!["slope".into(), fmt_opt(check.fit.map(|f| f.slope))]);
    rows.push(vec!["intercept".into(), fmt_opt(check.fit.map(|f| f.intercept))]);
    csv_bytes(&KERNEL_HEADER, rows)
}

pub fn cmd_kernel_check(args: &KernelArgs) -> Result<()> {
    if args.n_pairs == 0 {
        bail!("--n-pairs must be positive");
    }
    if args.n_list.is_empty() {
        bail!("--n-list must list at least one feature count");
    }
    let dist = args.features.distribution(args.dim)?;
    let check = evaluation::kernel_check(&dist, &args.n_list, args.n_pairs, args.seed)?;
    if check.fit.is_none() {
        eprintln!("warning: slope undefined (fewer than two feature counts)");
    }
    let mut pairs = args.features.pairs();
    pairs.push(("dim", args.dim.to_string()));
    pairs.push(("n-list", join(&args.n_list)));
    pairs.push(("n-pairs", args.n_pairs.to_string()));
    pairs.push(("seed", args.seed.to_string()));
    emit(args.out.as_deref(), &kernel_csv(&check)?, "kernel-check", &pairs)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Study(a) => cmd_study(a),
        Command::KernelCheck(a) => cmd_kernel_check(a),
    }
}
