//! Analytic target densities (Gaussian and Gaussian mixture) with exact
//! scores, plus the coefficient diagnostics for divergence-minimizing GAN
//! losses.
//!
//! Mixture responsibilities are computed in log space with log-sum-exp: the
//! mixtures of interest have modes many standard deviations apart, exactly
//! where naive exponentials underflow.

use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{LinAlgError, Matrix, Vector};
use crate::math;
use crate::particles::ParticleSet;
use crate::rng::SeededPrng;

const LN_2PI: f64 = 1.8378770664093453;

/// Errors raised by density construction and evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum ScoreError {
    DimensionMismatch { expected: usize, got: usize },
    /// Mixture weights must be positive and sum to one within 1e-12.
    InvalidWeights,
    /// Mixture needs at least one component; components must share dimension.
    InvalidComponents,
    /// Density ratio must be strictly positive.
    InvalidRatio,
    /// LSGAN coefficient needs at least one nonzero density.
    ZeroDensities,
    Covariance(LinAlgError),
}

impl fmt::Display for ScoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Self::InvalidWeights => write!(f, "mixture weights must be positive and sum to 1"),
            Self::InvalidComponents => write!(f, "mixture components invalid"),
            Self::InvalidRatio => write!(f, "density ratio must be > 0"),
            Self::ZeroDensities => write!(f, "at least one density must be nonzero"),
            Self::Covariance(e) => write!(f, "covariance: {e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ScoreError {}

impl From<LinAlgError> for ScoreError {
    fn from(e: LinAlgError) -> Self {
        Self::Covariance(e)
    }
}

/// A multivariate normal with eagerly cached factorizations: the Cholesky
/// factor for sampling and the explicit inverse for score evaluation, which
/// runs millions of times per experiment.
#[derive(Clone, Debug)]
pub struct GaussianSpec {
    mean: Vector,
    cov: Matrix,
    chol: Matrix,
    inv: Matrix,
    log_det: f64,
}

impl GaussianSpec {
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self, ScoreError> {
        let n = mean.len();
        if cov.rows() != n || cov.cols() != n {
            return Err(ScoreError::DimensionMismatch {
                expected: n,
                got: cov.rows(),
            });
        }
        let scale = cov.frobenius_norm().max(1.0);
        if cov.max_asymmetry() > 1e-12 * scale {
            return Err(ScoreError::Covariance(LinAlgError::NotSymmetric {
                max_asymmetry: cov.max_asymmetry(),
            }));
        }
        let chol = cov.cholesky()?;
        let log_det = 2.0 * (0..n).map(|i| math::ln(chol.get(i, i))).sum::<f64>();
        // Explicit inverse from the Cholesky factor, column by column.
        let mut inv = Matrix::zeros(n, n);
        for j in 0..n {
            let mut e = Vector::zeros(n);
            e[j] = 1.0;
            let col = chol_solve(&chol, &e);
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        let inv = inv.symmetrized();
        Ok(Self {
            mean,
            cov,
            chol,
            inv,
            log_det,
        })
    }

    /// `N(mean, var * I)`.
    pub fn isotropic(mean: Vector, var: f64) -> Result<Self, ScoreError> {
        let n = mean.len();
        let cov = Matrix::diagonal(&alloc::vec![var; n]);
        Self::new(mean, cov)
    }

    /// Standard normal in `n` dimensions.
    pub fn standard(n: usize) -> Self {
        Self::isotropic(Vector::zeros(n), 1.0).expect("identity covariance")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ScoreError> {
        if x.len() != self.dim() {
            return Err(ScoreError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Exact multivariate normal log-density.
    pub fn log_density(&self, x: &[f64]) -> Result<f64, ScoreError> {
        self.check_dim(x)?;
        let n = self.dim();
        let d = Vector::from_raw(x.iter().zip(self.mean.iter()).map(|(a, b)| a - b).collect());
        // Quadratic form through the cached inverse.
        let quad = d.dot(&self.inv.matvec(&d));
        Ok(-0.5 * (n as f64 * LN_2PI + self.log_det + quad))
    }

    /// Score `-cov^{-1} (x - mean)`.
    pub fn score(&self, x: &[f64]) -> Result<Vector, ScoreError> {
        self.check_dim(x)?;
        let d = Vector::from_raw(x.iter().zip(self.mean.iter()).map(|(a, b)| a - b).collect());
        Ok(self.inv.matvec(&d).scale(-1.0))
    }

    /// Jacobian of the score, the constant `-cov^{-1}`.
    pub fn score_jacobian(&self) -> Matrix {
        self.inv.scale(-1.0)
    }

    /// Squared Mahalanobis distance `(x - mean)^T cov^{-1} (x - mean)`.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> Result<f64, ScoreError> {
        self.check_dim(x)?;
        let d = Vector::from_raw(x.iter().zip(self.mean.iter()).map(|(a, b)| a - b).collect());
        Ok(d.dot(&self.inv.matvec(&d)))
    }

    /// One draw `mean + L xi` with `xi` standard normal.
    pub fn sample(&self, rng: &mut SeededPrng) -> Vector {
        let xi = rng.standard_normal_vector(self.dim());
        let mut out = self.mean.clone();
        for i in 0..self.dim() {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.chol.get(i, j) * xi[j];
            }
            out[i] += acc;
        }
        out
    }

    pub fn sample_set(&self, rng: &mut SeededPrng, count: usize) -> ParticleSet {
        let mut data = Vec::with_capacity(count * self.dim());
        for _ in 0..count {
            data.extend_from_slice(self.sample(rng).as_slice());
        }
        ParticleSet::from_raw(self.dim(), data)
    }
}

/// Two triangular solves against `L L^T`.
fn chol_solve(l: &Matrix, rhs: &Vector) -> Vector {
    let n = l.rows();
    let mut y = alloc::vec![0.0; n];
    for i in 0..n {
        let mut acc = rhs[i];
        for j in 0..i {
            acc -= l.get(i, j) * y[j];
        }
        y[i] = acc / l.get(i, i);
    }
    let mut x = alloc::vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = y[i];
        for j in (i + 1)..n {
            acc -= l.get(j, i) * x[j];
        }
        x[i] = acc / l.get(i, i);
    }
    Vector::from_raw(x)
}

/// A finite Gaussian mixture with positive weights summing to one.
#[derive(Clone, Debug)]
pub struct GmmSpec {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    components: Vec<GaussianSpec>,
}

impl GmmSpec {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianSpec>) -> Result<Self, ScoreError> {
        if components.is_empty() || weights.len() != components.len() {
            return Err(ScoreError::InvalidComponents);
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(ScoreError::InvalidWeights);
        }
        let total: f64 = weights.iter().sum();
        if math::abs(total - 1.0) > 1e-12 {
            return Err(ScoreError::InvalidWeights);
        }
        let dim = components[0].dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(ScoreError::InvalidComponents);
        }
        let log_weights = weights.iter().map(|w| math::ln(*w)).collect();
        Ok(Self {
            weights,
            log_weights,
            components,
        })
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianSpec] {
        &self.components
    }

    fn component_log_terms(&self, x: &[f64]) -> Result<Vec<f64>, ScoreError> {
        self.components
            .iter()
            .zip(&self.log_weights)
            .map(|(c, lw)| Ok(lw + c.log_density(x)?))
            .collect()
    }

    /// Mixture log-density via log-sum-exp.
    pub fn log_density(&self, x: &[f64]) -> Result<f64, ScoreError> {
        let terms = self.component_log_terms(x)?;
        Ok(log_sum_exp(&terms))
    }

    /// Mixture score: responsibility-weighted component scores, with the
    /// responsibilities formed in log space.
    pub fn score(&self, x: &[f64]) -> Result<Vector, ScoreError> {
        let terms = self.component_log_terms(x)?;
        let lse = log_sum_exp(&terms);
        let mut out = Vector::zeros(x.len());
        for (term, comp) in terms.iter().zip(&self.components) {
            let resp = math::exp(term - lse);
            if resp > 0.0 {
                out.axpy(resp, &comp.score(x)?);
            }
        }
        Ok(out)
    }

    /// Jacobian of the mixture score:
    /// `sum_i r_i (H_i + s_i s_i^T) - s s^T` with `H_i = -cov_i^{-1}`.
    pub fn score_jacobian(&self, x: &[f64]) -> Result<Matrix, ScoreError> {
        let n = x.len();
        let terms = self.component_log_terms(x)?;
        let lse = log_sum_exp(&terms);
        let mut total_score = Vector::zeros(n);
        let mut jac = Matrix::zeros(n, n);
        for (term, comp) in terms.iter().zip(&self.components) {
            let resp = math::exp(term - lse);
            if resp == 0.0 {
                continue;
            }
            let s_i = comp.score(x)?;
            total_score.axpy(resp, &s_i);
            let h_i = comp.score_jacobian();
            for i in 0..n {
                for j in 0..n {
                    let v = jac.get(i, j) + resp * (h_i.get(i, j) + s_i[i] * s_i[j]);
                    jac.set(i, j, v);
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let v = jac.get(i, j) - total_score[i] * total_score[j];
                jac.set(i, j, v);
            }
        }
        Ok(jac)
    }

    /// Categorical component pick followed by a component draw.
    pub fn sample(&self, rng: &mut SeededPrng) -> Vector {
        let u = rng.next_f64();
        let mut acc = 0.0;
        for (w, comp) in self.weights.iter().zip(&self.components) {
            acc += w;
            if u < acc {
                return comp.sample(rng);
            }
        }
        self.components.last().expect("nonempty").sample(rng)
    }

    pub fn sample_set(&self, rng: &mut SeededPrng, count: usize) -> ParticleSet {
        let mut data = Vec::with_capacity(count * self.dim());
        for _ in 0..count {
            data.extend_from_slice(self.sample(rng).as_slice());
        }
        ParticleSet::from_raw(self.dim(), data)
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + math::ln(terms.iter().map(|t| math::exp(t - m)).sum::<f64>())
}

/// An analytic target density: either a single Gaussian or a mixture.
#[derive(Clone, Debug)]
pub enum TargetDensity {
    Gaussian(GaussianSpec),
    Gmm(GmmSpec),
}

impl TargetDensity {
    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.dim(),
            Self::Gmm(g) => g.dim(),
        }
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64, ScoreError> {
        match self {
            Self::Gaussian(g) => g.log_density(x),
            Self::Gmm(g) => g.log_density(x),
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<Vector, ScoreError> {
        match self {
            Self::Gaussian(g) => g.score(x),
            Self::Gmm(g) => g.score(x),
        }
    }

    pub fn score_jacobian(&self, x: &[f64]) -> Result<Matrix, ScoreError> {
        match self {
            Self::Gaussian(g) => {
                g.check_dim(x)?;
                Ok(g.score_jacobian())
            }
            Self::Gmm(g) => g.score_jacobian(x),
        }
    }

    pub fn sample(&self, rng: &mut SeededPrng) -> Vector {
        match self {
            Self::Gaussian(g) => g.sample(rng),
            Self::Gmm(g) => g.sample(rng),
        }
    }

    pub fn sample_set(&self, rng: &mut SeededPrng, count: usize) -> ParticleSet {
        match self {
            Self::Gaussian(g) => g.sample_set(rng, count),
            Self::Gmm(g) => g.sample_set(rng, count),
        }
    }
}

/// Half the mean squared norm of the difference between two score fields over
/// a sample set.
pub fn fisher_divergence<A, B>(score_a: A, score_b: B, samples: &ParticleSet) -> f64
where
    A: Fn(&[f64]) -> Vector,
    B: Fn(&[f64]) -> Vector,
{
    let mut acc = 0.0;
    for p in samples.points() {
        let d = score_a(p).sub(&score_b(p));
        acc += d.norm_sq();
    }
    0.5 * acc / samples.len() as f64
}

/// The f-divergences whose generator-loss coefficient functions are tabulated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DivergenceKind {
    Kl,
    ReverseKl,
    PearsonChi2,
    SquaredHellinger,
    Sgan,
}

/// The coefficient multiplying the score-difference term in the optimal
/// f-GAN generator condition, as a function of the density ratio
/// `r = p_data / p_prev`.
pub fn fgan_coefficient(kind: DivergenceKind, r: f64) -> Result<f64, ScoreError> {
    if !(r > 0.0) {
        return Err(ScoreError::InvalidRatio);
    }
    Ok(match kind {
        DivergenceKind::Kl => r,
        DivergenceKind::ReverseKl => 1.0,
        DivergenceKind::PearsonChi2 => 2.0 * r * r,
        DivergenceKind::SquaredHellinger => 0.5 * math::sqrt(r),
        DivergenceKind::Sgan => r * r / (r + 1.0),
    })
}

/// The analogous coefficient for least-squares GANs with class labels
/// `(a, b, c)`:
/// `(b - a) ((a - c) p_prev + (b - c) p_data) / (p_prev + p_data)^3`.
pub fn lsgan_coefficient(
    a: f64,
    b: f64,
    c: f64,
    p_prev: f64,
    p_data: f64,
) -> Result<f64, ScoreError> {
    if p_prev + p_data <= 0.0 {
        return Err(ScoreError::ZeroDensities);
    }
    let total = p_prev + p_data;
    Ok((b - a) * ((a - c) * p_prev + (b - c) * p_data) / (total * total * total))
}
