//! Strong-form PDE problems on axis-aligned boxes.
//!
//! A problem is a point-wise interior operator `P[u](x) = 0` plus boundary groups
//! `B_g[u](x) = 0`, each operator being a function of `(x, u, grad u, diag Hess u)`
//! with explicit partial derivatives so that Gauss-Newton Jacobians are exact.
//! Source terms and boundary data are folded into the operators, so the residual of
//! the true solution is zero.
//!
//! Divergence-form operators are expanded with the product rule,
//! `-div(a(u) grad u) = -a'(u) |grad u|^2 - a(u) lap u`, which needs only pure second
//! partials. Time-dependent problems treat time as an ordinary coordinate and put
//! the initial condition on the `t = t0` face.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Scalar function of a point.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 5] =
    ["nonlinear-elliptic", "nonlinear-poisson", "allen-cahn", "advection-diffusion", "linear-elliptic"];

#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Error::check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::param("domain must have at least one dimension"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::param("domain bounds must satisfy lower < upper"));
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]^d`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| l <= v && v <= u)
    }

    pub fn contains_strictly(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| l < v && v < u)
    }

    /// All `2d` faces in lexicographic order `(coordinate, lo < hi)`.
    pub fn faces(&self) -> Vec<Face> {
        (0..self.dim()).flat_map(|axis| [Face { axis, side: Side::Lo }, Face { axis, side: Side::Hi }]).collect()
    }

    pub fn face_value(&self, face: Face) -> f64 {
        match face.side {
            Side::Lo => self.lower[face.axis],
            Side::Hi => self.upper[face.axis],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Lo,
    Hi,
}

/// The face of a box where coordinate `axis` is at its lower or upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Face {
    pub axis: usize,
    pub side: Side,
}

impl Face {
    pub fn lo(axis: usize) -> Self {
        Face { axis, side: Side::Lo }
    }

    pub fn hi(axis: usize) -> Self {
        Face { axis, side: Side::Hi }
    }
}

/// Local state of a function at a point: value, gradient and pure second partials.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorPoint {
    pub x: Vec<f64>,
    pub u: f64,
    pub grad: Vec<f64>,
    pub second_pure: Vec<f64>,
}

impl OperatorPoint {
    /// The zero function at `x`.
    pub fn zero(x: &[f64]) -> Self {
        let d = x.len();
        Self { x: x.to_vec(), u: 0.0, grad: vec![0.0; d], second_pure: vec![0.0; d] }
    }

    pub fn laplacian(&self) -> f64 {
        self.second_pure.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.grad.iter().chain(&self.second_pure).all(|v| v.is_finite())
    }
}

/// Partial derivatives of an operator residual with respect to `(u, grad, second_pure)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorPartials {
    pub u: f64,
    pub grad: Vec<f64>,
    pub second_pure: Vec<f64>,
}

impl OperatorPartials {
    pub fn zeros(dim: usize) -> Self {
        Self { u: 0.0, grad: vec![0.0; dim], second_pure: vec![0.0; dim] }
    }
}

/// A point-wise differential operator with exact partials.
pub trait PointOperator: Send + Sync {
    fn residual(&self, p: &OperatorPoint) -> f64;

    fn partials(&self, p: &OperatorPoint) -> OperatorPartials;

    /// True when the residual is affine in `(u, grad, second_pure)` at every `x`.
    fn is_linear(&self) -> bool;

    fn describe(&self) -> String;
}

impl fmt::Debug for dyn PointOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Dirichlet condition `u - g(x)`.
pub struct Dirichlet {
    pub data: ScalarFn,
}

impl PointOperator for Dirichlet {
    fn residual(&self, p: &OperatorPoint) -> f64 {
        p.u - (self.data)(&p.x)
    }

    fn partials(&self, p: &OperatorPoint) -> OperatorPartials {
        OperatorPartials { u: 1.0, ..OperatorPartials::zeros(p.x.len()) }
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        "u - g".into()
    }
}

/// `-lap u + u - f`.
pub struct ScreenedPoisson {
    pub source: ScalarFn,
}

impl PointOperator for ScreenedPoisson {
    fn residual(&self, p: &OperatorPoint) -> f64 {
        -p.laplacian() + p.u - (self.source)(&p.x)
    }

    fn partials(&self, p: &OperatorPoint) -> OperatorPartials {
        let d = p.x.len();
        OperatorPartials { u: 1.0, grad: vec![0.0; d], second_pure: vec![-1.0; d] }
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        "-lap u + u - f".into()
    }
}

/// `-lap u + u^3 - f`.
pub struct CubicElliptic {
    pub source: ScalarFn,
}

impl PointOperator for CubicElliptic {
    fn residual(&self, p: &OperatorPoint) -> f64 {
        -p.laplacian() + p.u.powi(3) - (self.source)(&p.x)
    }

    fn partials(&self, p: &OperatorPoint) -> OperatorPartials {
        let d = p.x.len();
        OperatorPartials { u: 3.0 * p.u * p.u, grad: vec![0.0; d], second_pure: vec![-1.0; d] }
    }

    fn is_linear(&self) -> bool {
        false
    }

    fn describe(&self) -> String {
        "-lap u + u^3 - f".into()
    }
}

/// `-div((u^2 - u) grad u) - f`, expanded as `-(2u - 1)|grad u|^2 - (u^2 - u) lap u - f`.
pub struct QuasilinearPoisson {
    pub source: ScalarFn,
}

impl PointOperator for QuasilinearPoisson {
    fn residual(&self, p: &OperatorPoint) -> f64 {
        let g2: f64 = p.grad.iter().map(|g| g * g).sum();
        let a = p.u * p.u - p.u;
        let da = 2.0 * p.u - 1.0;
        -(da * g2 + a * p.laplacian()) - (self.source)(&p.x)
    }

    fn partials(&self, p: &OperatorPoint) -> OperatorPartials {
        let g2: f64 = p.grad.iter().map(|g| g * g).sum();
        let da = 2.0 * p.u - 1.0;
        let a = p.u * p.u - p.u;
        OperatorPartials {
            u: -(2.0 * g2 + da * p.laplacian()),
            grad: p.grad.iter().map(|g| -2.0 * da * g).collect(),
            second_pure: vec![-a; p.x.len()],
        }
    }

    fn is_linear(&self) -> bool {
        false
    }

    fn describe(&self) -> String {
        "-div((u^2 - u) grad u) - f".into()
    }
}

/// `lap u + (u^3 - u) - f`.
pub struct AllenCahn {
    pub source: ScalarFn,
}

impl PointOperator for AllenCahn {
    fn residual(&self, p: &OperatorPoint) -> f64 {
        p.laplacian() + p.u.powi(3) - p.u - (self.source)(&p.x)
    }

    fn partials(&self, p: &OperatorPoint) -> OperatorPartials {
        let d = p.x.len();
        OperatorPartials { u: 3.0 * p.u * p.u - 1.0, grad: vec![0.0; d], second_pure: vec![1.0; d] }
    }

    fn is_linear(&self) -> bool {
        false
    }

    fn describe(&self) -> String {
        "lap u + u^3 - u - f".into()
    }
}

/// `u_t - u_xx + u_x - f` on coordinates `(x, t)`.
pub struct AdvectionDiffusion {
    pub source: ScalarFn,
}

impl PointOperator for AdvectionDiffusion {
    fn residual(&self, p: &OperatorPoint) -> f64 {
        p.grad[1] - p.second_pure[0] + p.grad[0] - (self.source)(&p.x)
    }

    fn partials(&self, _p: &OperatorPoint) -> OperatorPartials {
        OperatorPartials { u: 0.0, grad: vec![1.0, 1.0], second_pure: vec![-1.0, 0.0] }
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        "u_t - u_xx + u_x - f".into()
    }
}

/// Where a boundary group's points live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundaryRegion {
    AllFaces,
    Faces(Vec<Face>),
}

impl BoundaryRegion {
    /// Faces of `domain` covered by this region, lexicographically sorted.
    pub fn faces(&self, domain: &DomainBox) -> Vec<Face> {
        match self {
            BoundaryRegion::AllFaces => domain.faces(),
            BoundaryRegion::Faces(f) => {
                let mut f = f.clone();
                f.sort();
                f.dedup();
                f
            }
        }
    }
}

#[derive(Clone)]
pub struct BoundaryGroup {
    pub name: String,
    pub operator: Arc<dyn PointOperator>,
    /// Boundary data `g`; the operator already subtracts it.
    pub data: ScalarFn,
    pub region: BoundaryRegion,
    /// Relative weight of this group's squared residuals.
    pub weight: f64,
    /// Default number of collocation points.
    pub n_points: usize,
}

impl fmt::Debug for BoundaryGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryGroup")
            .field("name", &self.name)
            .field("operator", &self.operator)
            .field("region", &self.region)
            .field("weight", &self.weight)
            .field("n_points", &self.n_points)
            .finish()
    }
}

/// Analytic solution with its gradient and pure second partials.
pub trait ExactSolution: Send + Sync {
    fn eval(&self, x: &[f64]) -> OperatorPoint;

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x).u
    }
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: DomainBox,
    pub interior: Arc<dyn PointOperator>,
    pub source: ScalarFn,
    pub boundary_groups: Vec<BoundaryGroup>,
    pub true_solution: Option<Arc<dyn ExactSolution>>,
    /// Default number of interior collocation points.
    pub default_interior_points: usize,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("interior", &self.interior)
            .field("boundary_groups", &self.boundary_groups)
            .field("has_true_solution", &self.true_solution.is_some())
            .finish()
    }
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Interior and every boundary operator are affine.
    pub fn is_linear(&self) -> bool {
        self.interior.is_linear() && self.boundary_groups.iter().all(|g| g.operator.is_linear())
    }

    pub fn default_boundary_counts(&self) -> Vec<usize> {
        self.boundary_groups.iter().map(|g| g.n_points).collect()
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.boundary_groups.iter().position(|g| g.name == name)
    }
}

/// Parameters of the builtin problem family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuiltinOptions {
    /// Dimension of the nonlinear Poisson problem.
    pub dim: usize,
    /// Frequency parameter of the Allen-Cahn solution.
    pub frequency: f64,
}

impl Default for BuiltinOptions {
    fn default() -> Self {
        Self { dim: 2, frequency: 1.0 }
    }
}

/// Looks up a builtin problem by CLI name.
pub fn builtin(name: &str, opts: BuiltinOptions) -> Result<ProblemSpec> {
    match name {
        "nonlinear-elliptic" => Ok(builtin_nonlinear_elliptic()),
        "nonlinear-poisson" => builtin_nonlinear_poisson(opts.dim),
        "allen-cahn" => builtin_allen_cahn(opts.frequency),
        "advection-diffusion" => Ok(builtin_advection_diffusion()),
        "linear-elliptic" => Ok(builtin_linear_elliptic()),
        _ => Err(Error::Unknown { kind: "problem", name: name.to_string() }),
    }
}

fn dirichlet_all(data: ScalarFn, n_points: usize) -> BoundaryGroup {
    BoundaryGroup {
        name: "boundary".into(),
        operator: Arc::new(Dirichlet { data: data.clone() }),
        data,
        region: BoundaryRegion::AllFaces,
        weight: 1.0,
        n_points,
    }
}

fn solution_fn(sol: &Arc<dyn ExactSolution>) -> ScalarFn {
    let s = sol.clone();
    Arc::new(move |x| s.value(x))
}

/// `sin(pi x1) sin(pi x2) + 4 sin(4 pi x1) sin(4 pi x2)` on `[0,1]^2`.
struct TwoScaleSines;

impl ExactSolution for TwoScaleSines {
    fn eval(&self, x: &[f64]) -> OperatorPoint {
        let (s1, c1) = (PI * x[0]).sin_cos();
        let (s2, c2) = (PI * x[1]).sin_cos();
        let (s41, c41) = (4.0 * PI * x[0]).sin_cos();
        let (s42, c42) = (4.0 * PI * x[1]).sin_cos();
        let u = s1 * s2 + 4.0 * s41 * s42;
        let grad = vec![PI * c1 * s2 + 16.0 * PI * c41 * s42, PI * s1 * c2 + 16.0 * PI * s41 * c42];
        let low = -PI * PI * s1 * s2;
        let high = -64.0 * PI * PI * s41 * s42;
        OperatorPoint { x: x.to_vec(), u, grad, second_pure: vec![low + high, low + high] }
    }
}

/// Nonlinear elliptic problem `-lap u + u^3 = f` on `[0,1]^2` with `g = 0`.
pub fn builtin_nonlinear_elliptic() -> ProblemSpec {
    let sol: Arc<dyn ExactSolution> = Arc::new(TwoScaleSines);
    let s = sol.clone();
    let source: ScalarFn = Arc::new(move |x| {
        let p = s.eval(x);
        -p.laplacian() + p.u.powi(3)
    });
    let zero: ScalarFn = Arc::new(|_| 0.0);
    ProblemSpec {
        name: "nonlinear-elliptic".into(),
        domain: DomainBox::cube(2, 0.0, 1.0).expect("valid box"),
        interior: Arc::new(CubicElliptic { source: source.clone() }),
        source,
        boundary_groups: vec![dirichlet_all(zero, 124)],
        true_solution: Some(sol),
        default_interior_points: 900,
    }
}

/// `exp(-(1/d) sum x_i)`.
struct MeanExponential {
    dim: usize,
}

impl ExactSolution for MeanExponential {
    fn eval(&self, x: &[f64]) -> OperatorPoint {
        let inv_d = 1.0 / self.dim as f64;
        let u = (-inv_d * x.iter().sum::<f64>()).exp();
        OperatorPoint {
            x: x.to_vec(),
            u,
            grad: vec![-inv_d * u; self.dim],
            second_pure: vec![inv_d * inv_d * u; self.dim],
        }
    }
}

/// Nonlinear Poisson problem `-div(a(u) grad u) = f`, `a(u) = u^2 - u`, on `[-1,1]^d`.
pub fn builtin_nonlinear_poisson(dim: usize) -> Result<ProblemSpec> {
    if dim == 0 {
        return Err(Error::param("dimension must be at least 1"));
    }
    let sol: Arc<dyn ExactSolution> = Arc::new(MeanExponential { dim });
    let inv_d = 1.0 / dim as f64;
    let source: ScalarFn = Arc::new(move |x: &[f64]| {
        let s: f64 = x.iter().sum();
        inv_d * (-3.0 * (-3.0 * inv_d * s).exp() + 2.0 * (-2.0 * inv_d * s).exp())
    });
    Ok(ProblemSpec {
        name: "nonlinear-poisson".into(),
        domain: DomainBox::cube(dim, -1.0, 1.0)?,
        interior: Arc::new(QuasilinearPoisson { source: source.clone() }),
        source,
        boundary_groups: vec![dirichlet_all(solution_fn(&sol), 124)],
        true_solution: Some(sol),
        default_interior_points: 900,
    })
}

/// `sin(2 pi a x1) cos(2 pi a x2)`.
struct SineCosine {
    freq: f64,
}

impl ExactSolution for SineCosine {
    fn eval(&self, x: &[f64]) -> OperatorPoint {
        let k = 2.0 * PI * self.freq;
        let (s1, c1) = (k * x[0]).sin_cos();
        let (s2, c2) = (k * x[1]).sin_cos();
        let u = s1 * c2;
        OperatorPoint {
            x: x.to_vec(),
            u,
            grad: vec![k * c1 * c2, -k * s1 * s2],
            second_pure: vec![-k * k * u, -k * k * u],
        }
    }
}

/// Stationary Allen-Cahn problem `lap u + u^3 - u = f` on `[0,1]^2`.
///
/// The Dirichlet data is the trace of the manufactured solution.
pub fn builtin_allen_cahn(frequency: f64) -> Result<ProblemSpec> {
    if !(frequency.is_finite() && frequency > 0.0) {
        return Err(Error::param(format!("Allen-Cahn frequency must be positive, got {frequency}")));
    }
    let sol: Arc<dyn ExactSolution> = Arc::new(SineCosine { freq: frequency });
    let k2 = (2.0 * PI * frequency).powi(2);
    let s = sol.clone();
    let source: ScalarFn = Arc::new(move |x| {
        let u = s.value(x);
        -2.0 * k2 * u + u.powi(3) - u
    });
    Ok(ProblemSpec {
        name: "allen-cahn".into(),
        domain: DomainBox::cube(2, 0.0, 1.0)?,
        interior: Arc::new(AllenCahn { source: source.clone() }),
        source,
        boundary_groups: vec![dirichlet_all(solution_fn(&sol), 124)],
        true_solution: Some(sol),
        default_interior_points: 900,
    })
}

/// `sin(x) exp(-t)`.
struct DecayingSine;

impl ExactSolution for DecayingSine {
    fn eval(&self, x: &[f64]) -> OperatorPoint {
        let (s, c) = x[0].sin_cos();
        let e = (-x[1]).exp();
        OperatorPoint { x: x.to_vec(), u: s * e, grad: vec![c * e, -s * e], second_pure: vec![-s * e, s * e] }
    }
}

/// Advection-diffusion `u_t - u_xx + u_x = f` on `(x, t) in [-1,1] x [0,1]`.
///
/// Two boundary groups: the spatial boundary `x = +-1` and the initial slice `t = 0`.
pub fn builtin_advection_diffusion() -> ProblemSpec {
    let sol: Arc<dyn ExactSolution> = Arc::new(DecayingSine);
    let source: ScalarFn = Arc::new(|x: &[f64]| x[0].cos() * (-x[1]).exp());
    let g: ScalarFn = Arc::new(|x: &[f64]| x[0].sin() * (-x[1]).exp());
    let h: ScalarFn = Arc::new(|x: &[f64]| x[0].sin());
    ProblemSpec {
        name: "advection-diffusion".into(),
        domain: DomainBox::new(vec![-1.0, 0.0], vec![1.0, 1.0]).expect("valid box"),
        interior: Arc::new(AdvectionDiffusion { source: source.clone() }),
        source,
        boundary_groups: vec![
            BoundaryGroup {
                name: "boundary".into(),
                operator: Arc::new(Dirichlet { data: g.clone() }),
                data: g,
                region: BoundaryRegion::Faces(vec![Face::lo(0), Face::hi(0)]),
                weight: 1.0,
                n_points: 100,
            },
            BoundaryGroup {
                name: "initial".into(),
                operator: Arc::new(Dirichlet { data: h.clone() }),
                data: h,
                region: BoundaryRegion::Faces(vec![Face::lo(1)]),
                weight: 1.0,
                n_points: 200,
            },
        ],
        true_solution: Some(sol),
        default_interior_points: 1000,
    }
}

/// `sin(pi x1) sin(pi x2)`.
struct ProductSine;

impl ExactSolution for ProductSine {
    fn eval(&self, x: &[f64]) -> OperatorPoint {
        let (s1, c1) = (PI * x[0]).sin_cos();
        let (s2, c2) = (PI * x[1]).sin_cos();
        let u = s1 * s2;
        OperatorPoint {
            x: x.to_vec(),
            u,
            grad: vec![PI * c1 * s2, PI * s1 * c2],
            second_pure: vec![-PI * PI * u, -PI * PI * u],
        }
    }
}

/// Linear elliptic problem `-lap u + u = f` on `[0,1]^2` with `g = 0`.
///
/// Manufactured solution `sin(pi x1) sin(pi x2)`, so `f = (2 pi^2 + 1) u`.
pub fn builtin_linear_elliptic() -> ProblemSpec {
    let sol: Arc<dyn ExactSolution> = Arc::new(ProductSine);
    let s = sol.clone();
    let source: ScalarFn = Arc::new(move |x| (2.0 * PI * PI + 1.0) * s.value(x));
    let zero: ScalarFn = Arc::new(|_| 0.0);
    ProblemSpec {
        name: "linear-elliptic".into(),
        domain: DomainBox::cube(2, 0.0, 1.0).expect("valid box"),
        interior: Arc::new(ScreenedPoisson { source: source.clone() }),
        source,
        boundary_groups: vec![dirichlet_all(zero, 124)],
        true_solution: Some(sol),
        default_interior_points: 900,
    }
}
