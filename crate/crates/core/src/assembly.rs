//! Collocation sets, model evaluation and residual/Jacobian assembly.

use faer::Mat;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::points::Points;
use crate::problems::{DomainBox, Face, OperatorPartials, OperatorPoint, PointOperator, ProblemSpec};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingScheme {
    UniformRandom,
    Grid,
}

/// Points of one boundary group together with the faces they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySample {
    pub name: String,
    pub faces: Vec<Face>,
    pub points: Points,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    pub domain: DomainBox,
    pub interior: Points,
    /// One entry per boundary group, in the problem's group order.
    pub boundary: Vec<BoundarySample>,
    pub seed: u64,
    pub scheme: SamplingScheme,
}

impl CollocationSet {
    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.iter().map(|b| b.points.len()).sum()
    }

    pub fn len(&self) -> usize {
        self.n_interior() + self.n_boundary()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_against(&self, problem: &ProblemSpec) -> Result<()> {
        Error::check_dim(problem.dim(), self.interior.dim())?;
        Error::check_dim(problem.boundary_groups.len(), self.boundary.len())?;
        for (g, b) in problem.boundary_groups.iter().zip(&self.boundary) {
            if g.name != b.name {
                return Err(Error::param(format!("boundary sample `{}` does not match group `{}`", b.name, g.name)));
            }
        }
        Ok(())
    }
}

/// Uniform point in the closed box.
fn uniform_in<R: Rng + ?Sized>(domain: &DomainBox, rng: &mut R, out: &mut Vec<f64>) {
    out.clear();
    out.extend(domain.lower().iter().zip(domain.upper()).map(|(&l, &h)| rng.random_range(l..=h)));
}

/// Uniform point in the open box.
fn uniform_strictly_in<R: Rng + ?Sized>(domain: &DomainBox, rng: &mut R, out: &mut Vec<f64>) {
    loop {
        out.clear();
        out.extend(domain.lower().iter().zip(domain.upper()).map(|(&l, &h)| l + rng.random::<f64>() * (h - l)));
        if domain.contains_strictly(out) {
            return;
        }
    }
}

/// Samples interior points i.i.d. uniform on the open box and, per boundary group,
/// points uniform on the group's faces.
///
/// A group's points are split evenly over its faces (sorted lexicographically by
/// coordinate, then lower before upper); the remainder goes one each to the first faces.
pub fn sample_collocation(
    problem: &ProblemSpec,
    m_interior: usize,
    boundary_counts: &[usize],
    seed: u64,
) -> Result<CollocationSet> {
    Error::check_dim(problem.boundary_groups.len(), boundary_counts.len())?;
    if m_interior + boundary_counts.iter().sum::<usize>() == 0 {
        return Err(Error::Empty("collocation set has no points".into()));
    }
    let domain = &problem.domain;
    let d = domain.dim();
    let mut rng = rng::stream(seed, Stream::Collocation);
    let mut x = Vec::with_capacity(d);

    let mut interior = Points::new(d);
    for _ in 0..m_interior {
        uniform_strictly_in(domain, &mut rng, &mut x);
        interior.push(&x);
    }

    let mut boundary = Vec::with_capacity(boundary_counts.len());
    for (group, &count) in problem.boundary_groups.iter().zip(boundary_counts) {
        let faces = group.region.faces(domain);
        let mut points = Points::new(d);
        if !faces.is_empty() {
            let (base, extra) = (count / faces.len(), count % faces.len());
            for (i, &face) in faces.iter().enumerate() {
                let n = base + usize::from(i < extra);
                for _ in 0..n {
                    uniform_in(domain, &mut rng, &mut x);
                    x[face.axis] = domain.face_value(face);
                    points.push(&x);
                }
            }
        }
        boundary.push(BoundarySample { name: group.name.clone(), faces, points });
    }

    Ok(CollocationSet {
        domain: domain.clone(),
        interior,
        boundary,
        seed,
        scheme: SamplingScheme::UniformRandom,
    })
}

/// `n` nodes per axis covering the closed box, including all corners.
///
/// The first coordinate varies slowest.
pub fn grid_points(domain: &DomainBox, n: usize) -> Points {
    let d = domain.dim();
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let (l, h) = (domain.lower()[i], domain.upper()[i]);
            match n {
                0 => vec![],
                1 => vec![0.5 * (l + h)],
                _ => (0..n).map(|k| if k == n - 1 { h } else { l + (h - l) * k as f64 / (n - 1) as f64 }).collect(),
            }
        })
        .collect();
    let total = n.checked_pow(d as u32).expect("grid too large");
    let mut pts = Points::new(d);
    let mut x = vec![0.0; d];
    for mut idx in 0..total {
        for i in (0..d).rev() {
            x[i] = axes[i][idx % n];
            idx /= n;
        }
        pts.push(&x);
    }
    pts
}

/// `n` points i.i.d. uniform on the closed box.
pub fn uniform_points(domain: &DomainBox, n: usize, seed: u64) -> Points {
    let mut rng = rng::stream(seed, Stream::TestPoints);
    let mut pts = Points::new(domain.dim());
    let mut x = Vec::with_capacity(domain.dim());
    for _ in 0..n {
        uniform_in(domain, &mut rng, &mut x);
        pts.push(&x);
    }
    pts
}

/// Trained coefficients paired with their features.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub features: FeatureSet,
    pub coefficients: Vec<f64>,
}

impl Model {
    pub fn new(features: FeatureSet, coefficients: Vec<f64>) -> Result<Self> {
        Error::check_dim(features.len(), coefficients.len())?;
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("model coefficients must be finite"));
        }
        Ok(Self { features, coefficients })
    }

    pub fn zeros(features: FeatureSet) -> Self {
        let n = features.len();
        Self { features, coefficients: vec![0.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    /// Model value at `x`.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.features.check_point(x)?;
        Ok(self.coefficients.iter().enumerate().map(|(k, c)| c * self.features.phase(k, x).cos()).sum())
    }
}

/// `sin` and `cos` of every feature phase at `x`.
fn trig_phases(fs: &FeatureSet, x: &[f64], sin: &mut [f64], cos: &mut [f64]) {
    for k in 0..fs.len() {
        let (s, c) = fs.phase(k, x).sin_cos();
        sin[k] = s;
        cos[k] = c;
    }
}

fn state_from_phases(model: &Model, x: &[f64], sin: &[f64], cos: &[f64]) -> OperatorPoint {
    let d = x.len();
    let mut p = OperatorPoint::zero(x);
    for (k, &c) in model.coefficients.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        p.u += c * cos[k];
        for (i, &w) in model.features.weight(k).iter().enumerate().take(d) {
            p.grad[i] -= c * w * sin[k];
            p.second_pure[i] -= c * w * w * cos[k];
        }
    }
    p
}

/// Row of `d R / d c` for an operator with the given partials.
fn operator_row(fs: &FeatureSet, partials: &OperatorPartials, sin: &[f64], cos: &[f64], out: &mut [f64]) {
    for k in 0..fs.len() {
        let w = fs.weight(k);
        let mut cos_coef = partials.u;
        let mut sin_coef = 0.0;
        for i in 0..w.len() {
            cos_coef -= partials.second_pure[i] * w[i] * w[i];
            sin_coef += partials.grad[i] * w[i];
        }
        out[k] = cos_coef * cos[k] - sin_coef * sin[k];
    }
}

/// Value, gradient and pure second partials of the model at `x`.
pub fn model_eval(model: &Model, x: &[f64]) -> Result<OperatorPoint> {
    model.features.check_point(x)?;
    let n = model.features.len();
    let (mut s, mut c) = (vec![0.0; n], vec![0.0; n]);
    trig_phases(&model.features, x, &mut s, &mut c);
    Ok(state_from_phases(model, x, &s, &c))
}

/// Model values at many points.
pub fn model_values(model: &Model, pts: &Points) -> Result<Vec<f64>> {
    Error::check_dim(model.dim(), pts.dim())?;
    Ok(pts
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|x| model.value(x).expect("dimension checked"))
        .collect())
}

/// Unweighted, unsquared residuals: interior first, then one vector per boundary group.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub interior: Vec<f64>,
    pub boundary: Vec<Vec<f64>>,
}

impl Residuals {
    pub fn groups(&self) -> impl Iterator<Item = &[f64]> {
        std::iter::once(self.interior.as_slice()).chain(self.boundary.iter().map(Vec::as_slice))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.groups().flatten().copied().collect()
    }
}

/// Jacobians `d r / d c` of each residual group.
#[derive(Debug, Clone)]
pub struct Jacobians {
    pub interior: Mat<f64>,
    pub boundary: Vec<Mat<f64>>,
}

impl Jacobians {
    pub fn groups(&self) -> impl Iterator<Item = &Mat<f64>> {
        std::iter::once(&self.interior).chain(self.boundary.iter())
    }
}

/// `(operator, points)` pairs in group order.
fn blocks<'a>(problem: &'a ProblemSpec, pts: &'a CollocationSet) -> Vec<(&'a dyn PointOperator, &'a Points)> {
    std::iter::once((problem.interior.as_ref(), &pts.interior))
        .chain(problem.boundary_groups.iter().zip(&pts.boundary).map(|(g, b)| (g.operator.as_ref(), &b.points)))
        .collect()
}

fn check_inputs(model: &Model, problem: &ProblemSpec, pts: &CollocationSet) -> Result<()> {
    Error::check_dim(problem.dim(), model.dim())?;
    pts.check_against(problem)
}

fn block_residuals(model: &Model, op: &dyn PointOperator, pts: &Points) -> Vec<f64> {
    let n = model.features.len();
    pts.iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; n]),
            |(s, c), x| {
                trig_phases(&model.features, x, s, c);
                op.residual(&state_from_phases(model, x, s, c))
            },
        )
        .collect()
}

/// Residuals and a row-major Jacobian block in one pass over the points.
fn block_linearization(model: &Model, op: &dyn PointOperator, pts: &Points) -> (Vec<f64>, Vec<f64>) {
    let n = model.features.len();
    let m = pts.len();
    let mut jac = vec![0.0; m * n];
    let mut res = vec![0.0; m];
    let xs: Vec<&[f64]> = pts.iter().collect();
    jac.par_chunks_mut(n.max(1)).zip(res.par_iter_mut()).zip(xs.par_iter()).for_each_init(
        || (vec![0.0; n], vec![0.0; n]),
        |(s, c), ((row, r), x)| {
            trig_phases(&model.features, x, s, c);
            let state = state_from_phases(model, x, s, c);
            *r = op.residual(&state);
            operator_row(&model.features, &op.partials(&state), s, c, row);
        },
    );
    (res, jac)
}

fn to_mat(rows: usize, cols: usize, row_major: &[f64]) -> Mat<f64> {
    Mat::from_fn(rows, cols, |i, j| row_major[i * cols + j])
}

/// `r_j = P[u](x_j)` at every collocation point, grouped like the problem.
pub fn residual_vector(model: &Model, problem: &ProblemSpec, pts: &CollocationSet) -> Result<Residuals> {
    check_inputs(model, problem, pts)?;
    let mut groups = blocks(problem, pts).into_iter().map(|(op, p)| block_residuals(model, op, p));
    let interior = groups.next().expect("interior block");
    Ok(Residuals { interior, boundary: groups.collect() })
}

/// Exact Jacobians of [`residual_vector`] with respect to the coefficients.
pub fn residual_jacobian(model: &Model, problem: &ProblemSpec, pts: &CollocationSet) -> Result<Jacobians> {
    check_inputs(model, problem, pts)?;
    let n = model.features.len();
    let mut mats = blocks(problem, pts).into_iter().map(|(op, p)| {
        let (_, jac) = block_linearization(model, op, p);
        to_mat(p.len(), n, &jac)
    });
    let interior = mats.next().expect("interior block");
    Ok(Jacobians { interior, boundary: mats.collect() })
}

/// Weighted residuals stacked in group order, with group `g` scaled by `sqrt(weights[g])`.
#[derive(Debug, Clone)]
pub struct StackedLinearization {
    pub residual: Vec<f64>,
    pub jacobian: Mat<f64>,
}

pub(crate) fn stacked_residual(
    model: &Model,
    problem: &ProblemSpec,
    pts: &CollocationSet,
    weights: &[f64],
) -> Result<Vec<f64>> {
    check_inputs(model, problem, pts)?;
    Error::check_dim(problem.boundary_groups.len() + 1, weights.len())?;
    let mut out = Vec::with_capacity(pts.len());
    for ((op, p), w) in blocks(problem, pts).into_iter().zip(weights) {
        let sw = w.sqrt();
        out.extend(block_residuals(model, op, p).into_iter().map(|r| sw * r));
    }
    Ok(out)
}

pub(crate) fn stacked_linearization(
    model: &Model,
    problem: &ProblemSpec,
    pts: &CollocationSet,
    weights: &[f64],
) -> Result<StackedLinearization> {
    check_inputs(model, problem, pts)?;
    Error::check_dim(problem.boundary_groups.len() + 1, weights.len())?;
    let n = model.features.len();
    let mut residual = Vec::with_capacity(pts.len());
    let mut rows = Vec::with_capacity(pts.len() * n);
    for ((op, p), w) in blocks(problem, pts).into_iter().zip(weights) {
        let sw = w.sqrt();
        let (r, j) = block_linearization(model, op, p);
        residual.extend(r.into_iter().map(|v| sw * v));
        rows.extend(j.into_iter().map(|v| sw * v));
    }
    let jacobian = to_mat(residual.len(), n, &rows);
    Ok(StackedLinearization { residual, jacobian })
}

/// Rows belonging to one residual group of a stacked system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Block system `[A; B] c = [f; g]` of a linear problem.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: Mat<f64>,
    pub rhs: Vec<f64>,
    pub blocks: Vec<RowBlock>,
}

impl LinearSystem {
    /// Scales the rows of block `g` by `sqrt(weights[g])`.
    pub fn weighted(&self, weights: &[f64]) -> Result<LinearSystem> {
        Error::check_dim(self.blocks.len(), weights.len())?;
        let mut scale = vec![1.0; self.rhs.len()];
        for (b, w) in self.blocks.iter().zip(weights) {
            if !(*w > 0.0) {
                return Err(Error::param(format!("group weight must be positive, got {w}")));
            }
            scale[b.start..b.start + b.len].iter_mut().for_each(|s| *s = w.sqrt());
        }
        Ok(LinearSystem {
            matrix: Mat::from_fn(self.matrix.nrows(), self.matrix.ncols(), |i, j| scale[i] * self.matrix[(i, j)]),
            rhs: self.rhs.iter().zip(&scale).map(|(r, s)| r * s).collect(),
            blocks: self.blocks.clone(),
        })
    }
}

/// Assembles the block system of a linear problem.
///
/// The affine part of each operator is read off its partials (constant for affine
/// operators) and its constant part from the residual of the zero function, so row
/// `j` satisfies `row_j . c - rhs_j = residual_j(c)` for every `c`.
pub fn assemble_linear_system(problem: &ProblemSpec, fs: &FeatureSet, pts: &CollocationSet) -> Result<LinearSystem> {
    if !problem.is_linear() {
        return Err(Error::LinearityRequired(problem.name.clone()));
    }
    Error::check_dim(problem.dim(), fs.dim())?;
    pts.check_against(problem)?;
    let n = fs.len();
    let total = pts.len();
    let mut rows = vec![0.0; total * n];
    let mut rhs = vec![0.0; total];
    let mut out_blocks = Vec::new();
    let mut start = 0;
    let names = std::iter::once("interior".to_string()).chain(problem.boundary_groups.iter().map(|g| g.name.clone()));
    for ((op, p), name) in blocks(problem, pts).into_iter().zip(names) {
        let m = p.len();
        let xs: Vec<&[f64]> = p.iter().collect();
        rows[start * n..(start + m) * n]
            .par_chunks_mut(n)
            .zip(rhs[start..start + m].par_iter_mut())
            .zip(xs.par_iter())
            .for_each_init(
                || (vec![0.0; n], vec![0.0; n]),
                |(s, c), ((row, b), x)| {
                    let zero = OperatorPoint::zero(x);
                    trig_phases(fs, x, s, c);
                    operator_row(fs, &op.partials(&zero), s, c, row);
                    *b = -op.residual(&zero);
                },
            );
        out_blocks.push(RowBlock { name, start, len: m });
        start += m;
    }
    Ok(LinearSystem { matrix: to_mat(total, n, &rows), rhs, blocks: out_blocks })
}

/// Fill distances of the interior points and of the pooled boundary points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FillDistance {
    /// `None` when there are no interior points.
    pub interior: Option<f64>,
    /// `None` when there are no boundary points.
    pub boundary: Option<f64>,
}

impl FillDistance {
    /// `max(h_interior, h_boundary)` over the parts that exist.
    pub fn max(&self) -> f64 {
        self.interior.unwrap_or(0.0).max(self.boundary.unwrap_or(0.0))
    }
}

fn nearest_distance(x: &[f64], pts: &Points) -> f64 {
    pts.iter()
        .map(|p| p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

fn max_over_probes(probes: &Points, pts: &Points) -> f64 {
    probes
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|x| nearest_distance(x, pts))
        .reduce(|| 0.0, f64::max)
}

/// Approximates `sup_{x' in region} min_{x in X} |x - x'|_2` on a probe grid with
/// `probe_density` nodes per axis.
///
/// The boundary part probes every face covered by a boundary group and measures
/// Euclidean distance to all boundary points; on box faces this coincides with the
/// intrinsic distance face-locally.
pub fn fill_distance(pts: &CollocationSet, probe_density: usize) -> Result<FillDistance> {
    if pts.is_empty() {
        return Err(Error::Empty("fill distance of an empty collocation set".into()));
    }
    if probe_density == 0 {
        return Err(Error::param("probe density must be positive"));
    }
    let domain = &pts.domain;
    let interior = (!pts.interior.is_empty()).then(|| max_over_probes(&grid_points(domain, probe_density), &pts.interior));

    let boundary = if pts.n_boundary() == 0 {
        None
    } else {
        let mut pooled = Points::new(domain.dim());
        let mut faces: Vec<Face> = Vec::new();
        for b in &pts.boundary {
            pooled.extend(&b.points);
            faces.extend(&b.faces);
        }
        faces.sort();
        faces.dedup();
        let probes = grid_points(domain, probe_density);
        let mut h: f64 = 0.0;
        for face in faces {
            let v = domain.face_value(face);
            let mut on_face = Points::new(domain.dim());
            for x in probes.iter().filter(|x| x[face.axis] == v || probe_density == 1) {
                let mut y = x.to_vec();
                y[face.axis] = v;
                on_face.push(&y);
            }
            h = h.max(max_over_probes(&on_face, &pooled));
        }
        Some(h)
    };
    Ok(FillDistance { interior, boundary })
}
