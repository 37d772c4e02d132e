//! Random cosine features `phi_k(x) = cos(<w_k, x> + b_k)`.
//!
//! Frequencies are drawn from the Fourier density of a shift-invariant kernel
//! (Gaussian or Laplace), or from a uniform box for extreme-learning-machine style
//! runs. The model basis is the unnormalized cosine: any `1/sqrt(N)` prefactor is
//! absorbed by the trained coefficients, and only [`approx_kernel`] applies an
//! explicit normalization.
//!
//! # Gaussian parameterization
//!
//! The Gaussian law is parameterized directly by the per-coordinate variance
//! `sigma2` of the frequencies. Its matched kernel is the exact expectation
//! `E cos<w, x - x'> = exp(-sigma2 |x - x'|^2 / 2)`. Written in the common form
//! `exp(-gamma |x - x'|^2)` this means `sigma2 = 2 gamma`; tables that pair the
//! Gaussian kernel with a frequency variance of `(2 gamma)^2` are not a Fourier pair.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Law of a single frequency coordinate. Coordinates are drawn independently.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureKind {
    /// Normal law with mean 0 and the given variance.
    Gaussian { variance: f64 },
    /// Cauchy law with the given scale, i.e. the Fourier density of the Laplace kernel.
    Laplace { scale: f64 },
    /// Uniform law on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
}

impl FeatureKind {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureKind::Gaussian { .. } => "gaussian",
            FeatureKind::Laplace { .. } => "laplace",
            FeatureKind::Uniform { .. } => "uniform",
        }
    }

    /// The distribution's single parameter (variance, scale or half-width).
    pub fn parameter(&self) -> f64 {
        match *self {
            FeatureKind::Gaussian { variance } => variance,
            FeatureKind::Laplace { scale } => scale,
            FeatureKind::Uniform { half_width } => half_width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureDistribution {
    pub kind: FeatureKind,
    pub dim: usize,
    /// Draw biases uniformly on `[-pi, pi]`. When false every bias is zero.
    pub with_bias: bool,
}

impl FeatureDistribution {
    pub fn new(kind: FeatureKind, dim: usize) -> Result<Self> {
        let dist = Self { kind, dim, with_bias: true };
        dist.validate()?;
        Ok(dist)
    }

    pub fn gaussian(dim: usize, variance: f64) -> Result<Self> {
        Self::new(FeatureKind::Gaussian { variance }, dim)
    }

    pub fn laplace(dim: usize, scale: f64) -> Result<Self> {
        Self::new(FeatureKind::Laplace { scale }, dim)
    }

    pub fn uniform(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(FeatureKind::Uniform { half_width }, dim)
    }

    pub fn with_bias(mut self, with_bias: bool) -> Self {
        self.with_bias = with_bias;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::param("feature dimension must be at least 1"));
        }
        let p = self.kind.parameter();
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::param(format!(
                "{} parameter must be positive and finite, got {p}",
                self.kind.name()
            )));
        }
        Ok(())
    }

    fn draw_coordinate<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            FeatureKind::Gaussian { variance } => {
                let z: f64 = rng.sample(StandardNormal);
                variance.sqrt() * z
            }
            FeatureKind::Laplace { scale } => {
                // inverse CDF on the open interval (0, 1)
                let u = loop {
                    let u: f64 = rng.random();
                    if u > 0.0 {
                        break u;
                    }
                };
                scale * (PI * (u - 0.5)).tan()
            }
            FeatureKind::Uniform { half_width } => rng.random_range(-half_width..=half_width),
        }
    }
}

/// `N` sampled frequency vectors and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    weights: Vec<f64>,
    biases: Vec<f64>,
    distribution: FeatureDistribution,
    seed: u64,
}

/// Feature values and analytic derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEval {
    pub values: Vec<f64>,
    /// `N x d` row-major, `d phi_k / d x_i`.
    pub gradients: Vec<f64>,
    /// `N x d` row-major, `d^2 phi_k / d x_i^2`.
    pub second_pure_partials: Vec<f64>,
}

impl FeatureEval {
    pub fn gradient(&self, k: usize) -> &[f64] {
        let d = self.gradients.len() / self.values.len();
        &self.gradients[k * d..(k + 1) * d]
    }

    pub fn second_pure(&self, k: usize) -> &[f64] {
        let d = self.second_pure_partials.len() / self.values.len();
        &self.second_pure_partials[k * d..(k + 1) * d]
    }
}

/// Samples `n_features` i.i.d. features. Deterministic in `seed`.
///
/// For each feature the `d` frequency coordinates are drawn first, then the bias.
pub fn sample_features(dist: &FeatureDistribution, n_features: usize, seed: u64) -> Result<FeatureSet> {
    dist.validate()?;
    if n_features == 0 {
        return Err(Error::param("number of features must be at least 1"));
    }
    let mut rng = rng::stream(seed, Stream::Features);
    let mut weights = Vec::with_capacity(n_features * dist.dim);
    let mut biases = Vec::with_capacity(n_features);
    for _ in 0..n_features {
        for _ in 0..dist.dim {
            weights.push(dist.draw_coordinate(&mut rng));
        }
        biases.push(if dist.with_bias { rng.random_range(-PI..=PI) } else { 0.0 });
    }
    Ok(FeatureSet { weights, biases, distribution: *dist, seed })
}

impl FeatureSet {
    /// Assembles a feature set from explicit arrays (`weights` is `N x d` row-major).
    pub fn from_parts(
        weights: Vec<f64>,
        biases: Vec<f64>,
        distribution: FeatureDistribution,
        seed: u64,
    ) -> Result<Self> {
        let d = distribution.dim;
        if biases.is_empty() {
            return Err(Error::param("feature set must contain at least one feature"));
        }
        Error::check_dim(biases.len() * d, weights.len())?;
        if let Some(b) = biases.iter().find(|b| !(-PI..=PI).contains(*b)) {
            return Err(Error::param(format!("bias {b} outside [-pi, pi]")));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::param("non-finite feature weight"));
        }
        Ok(Self { weights, biases, distribution, seed })
    }

    pub fn len(&self) -> usize {
        self.biases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.biases.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.distribution.dim
    }

    pub fn distribution(&self) -> &FeatureDistribution {
        &self.distribution
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weight(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.weights[k * d..(k + 1) * d]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    /// `<w_k, x> + b_k`. The caller guarantees `x.len() == d`.
    #[inline]
    pub fn phase(&self, k: usize, x: &[f64]) -> f64 {
        self.weight(k).iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.biases[k]
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        Error::check_dim(self.dim(), x.len())
    }

    /// Feature values at `x`.
    pub fn values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok((0..self.len()).map(|k| self.phase(k, x).cos()).collect())
    }
}

/// Values, gradients and pure second partials of every feature at `x`.
pub fn eval_features(fs: &FeatureSet, x: &[f64]) -> Result<FeatureEval> {
    fs.check_point(x)?;
    let (n, d) = (fs.len(), fs.dim());
    let mut values = Vec::with_capacity(n);
    let mut gradients = Vec::with_capacity(n * d);
    let mut second = Vec::with_capacity(n * d);
    for k in 0..n {
        let (s, c) = fs.phase(k, x).sin_cos();
        values.push(c);
        for &w in fs.weight(k) {
            gradients.push(-w * s);
            second.push(-w * w * c);
        }
    }
    Ok(FeatureEval { values, gradients, second_pure_partials: second })
}

/// Closed-form kernel whose Fourier density is the sampling law.
///
/// Gaussian: `exp(-sigma2 |x - x'|_2^2 / 2)`. Laplace: `exp(-gamma |x - x'|_1)`.
/// The uniform law has no target kernel here.
pub fn exact_kernel(dist: &FeatureDistribution, x: &[f64], y: &[f64]) -> Result<f64> {
    Error::check_dim(dist.dim, x.len())?;
    Error::check_dim(dist.dim, y.len())?;
    let diff = x.iter().zip(y).map(|(a, b)| a - b);
    match dist.kind {
        FeatureKind::Gaussian { variance } => {
            let sq: f64 = diff.map(|t| t * t).sum();
            Ok((-0.5 * variance * sq).exp())
        }
        FeatureKind::Laplace { scale } => {
            let l1: f64 = diff.map(f64::abs).sum();
            Ok((-scale * l1).exp())
        }
        FeatureKind::Uniform { .. } => Err(Error::Unsupported("kernel of the uniform feature law".into())),
    }
}

/// Monte-Carlo kernel estimate `(2/N) sum_k phi_k(x) phi_k(x')`.
///
/// The factor 2 makes the estimate unbiased when biases are uniform on `[-pi, pi]`.
pub fn approx_kernel(fs: &FeatureSet, x: &[f64], y: &[f64]) -> Result<f64> {
    fs.check_point(x)?;
    fs.check_point(y)?;
    let sum: f64 = (0..fs.len()).map(|k| fs.phase(k, x).cos() * fs.phase(k, y).cos()).sum();
    Ok(2.0 * sum / fs.len() as f64)
}
