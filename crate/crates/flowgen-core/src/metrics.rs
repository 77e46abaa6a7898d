//! Quantitative evaluation: Gaussian Wasserstein-2, moment fitting, energy
//! distance, squared MMD, and per-mode coverage.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::kernels::KernelSpec;
use crate::linalg::{LinAlgError, Matrix, Vector};
use crate::math;
use crate::particles::ParticleSet;
use crate::scores::GmmSpec;

/// Errors raised by the metric computations.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricError {
    DimensionMismatch { expected: usize, got: usize },
    /// Moment fitting needs at least `dim + 1` points.
    TooFewPoints { needed: usize, got: usize },
    /// MMD needs a positive-definite kernel (not PHS).
    KernelNotPositiveDefinite,
    /// Series iterations must be strictly increasing.
    NonIncreasingIteration,
    LinAlg(LinAlgError),
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Self::TooFewPoints { needed, got } => {
                write!(f, "need at least {needed} points, got {got}")
            }
            Self::KernelNotPositiveDefinite => {
                write!(f, "MMD requires a positive-definite kernel")
            }
            Self::NonIncreasingIteration => write!(f, "series iterations must increase"),
            Self::LinAlg(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MetricError {}

impl From<LinAlgError> for MetricError {
    fn from(e: LinAlgError) -> Self {
        Self::LinAlg(e)
    }
}

/// A named `(iteration, value)` series with strictly increasing iterations.
#[derive(Clone, Debug)]
pub struct MetricSeries {
    name: String,
    points: Vec<(usize, f64)>,
}

impl MetricSeries {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            points: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn push(&mut self, iteration: usize, value: f64) -> Result<(), MetricError> {
        if let Some(&(last, _)) = self.points.last() {
            if iteration <= last {
                return Err(MetricError::NonIncreasingIteration);
            }
        }
        self.points.push((iteration, value));
        Ok(())
    }

    pub fn points(&self) -> &[(usize, f64)] {
        &self.points
    }

    pub fn last_value(&self) -> Option<f64> {
        self.points.last().map(|&(_, v)| v)
    }
}

/// Empirical mean and covariance of a particle set.
#[derive(Clone, Debug)]
pub struct GaussianMoments {
    pub mean: Vector,
    pub cov: Matrix,
}

/// Sample mean and unbiased sample covariance, symmetrized and eigenvalue
/// clamped at zero so the result is always PSD.
pub fn fit_gaussian_moments(p: &ParticleSet) -> Result<GaussianMoments, MetricError> {
    let n = p.dim();
    let count = p.len();
    if count < n + 1 {
        return Err(MetricError::TooFewPoints {
            needed: n + 1,
            got: count,
        });
    }
    let mut mean = Vector::zeros(n);
    for pt in p.points() {
        for (m, v) in mean.as_mut_slice().iter_mut().zip(pt) {
            *m += v;
        }
    }
    let mean = mean.scale(1.0 / count as f64);
    let mut cov = Matrix::zeros(n, n);
    let mut centered = alloc::vec![0.0; n];
    for pt in p.points() {
        for ((c, v), m) in centered.iter_mut().zip(pt).zip(mean.iter()) {
            *c = v - m;
        }
        for i in 0..n {
            let ci = centered[i];
            for j in i..n {
                let v = cov.get(i, j) + ci * centered[j];
                cov.set(i, j, v);
            }
        }
    }
    let denom = (count - 1) as f64;
    for i in 0..n {
        for j in i..n {
            let v = cov.get(i, j) / denom;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    // Clamp negative eigenvalues introduced by round-off (or degenerate
    // samples) to zero.
    let eig = cov.sym_eigen()?;
    let clamped: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0)).collect();
    let mut psd = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += eig.vectors.get(i, k) * clamped[k] * eig.vectors.get(j, k);
            }
            psd.set(i, j, acc);
            psd.set(j, i, acc);
        }
    }
    Ok(GaussianMoments { mean, cov: psd })
}

/// Squared Gaussian Wasserstein-2 distance:
/// `||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2})`,
/// with the cross term in its symmetric form. Small negative round-off is
/// clamped to zero.
pub fn w2_gaussian(
    mean_a: &Vector,
    cov_a: &Matrix,
    mean_b: &Vector,
    cov_b: &Matrix,
) -> Result<f64, MetricError> {
    if mean_a.len() != mean_b.len() {
        return Err(MetricError::DimensionMismatch {
            expected: mean_a.len(),
            got: mean_b.len(),
        });
    }
    let mean_term = mean_a.sub(mean_b).norm_sq();
    let root_a = cov_a.sqrt_spd()?;
    let inner = root_a.matmul(cov_b).matmul(&root_a).symmetrized();
    let cross = inner.sqrt_spd()?;
    let value = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
    Ok(value.max(0.0))
}

/// Energy distance between two samples (V-statistic over all pairs):
/// `2 E||X - Y|| - E||X - X'|| - E||Y - Y'||`.
pub fn energy_distance(a: &ParticleSet, b: &ParticleSet) -> Result<f64, MetricError> {
    if a.dim() != b.dim() {
        return Err(MetricError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let cross = mean_pair_distance(a, b);
    let within_a = mean_pair_distance(a, a);
    let within_b = mean_pair_distance(b, b);
    Ok(2.0 * cross - within_a - within_b)
}

fn mean_pair_distance(a: &ParticleSet, b: &ParticleSet) -> f64 {
    let mut acc = 0.0;
    for p in a.points() {
        for q in b.points() {
            let mut d2 = 0.0;
            for (x, y) in p.iter().zip(q) {
                let d = x - y;
                d2 += d * d;
            }
            acc += math::sqrt(d2);
        }
    }
    acc / (a.len() as f64 * b.len() as f64)
}

/// Unbiased U-statistic estimate of the squared MMD under a positive-definite
/// radial kernel. Each set needs at least two points.
pub fn mmd_squared(
    a: &ParticleSet,
    b: &ParticleSet,
    kernel: &KernelSpec,
) -> Result<f64, MetricError> {
    if a.dim() != b.dim() {
        return Err(MetricError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if !kernel.is_positive_definite() {
        return Err(MetricError::KernelNotPositiveDefinite);
    }
    if a.len() < 2 || b.len() < 2 {
        return Err(MetricError::TooFewPoints {
            needed: 2,
            got: a.len().min(b.len()),
        });
    }
    let mut diff = alloc::vec![0.0; a.dim()];
    let mut eval = |p: &[f64], q: &[f64]| {
        for ((d, x), y) in diff.iter_mut().zip(p).zip(q) {
            *d = x - y;
        }
        kernel.eval(&diff)
    };
    let m = a.len() as f64;
    let n = b.len() as f64;
    let mut within_a = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            if i != j {
                within_a += eval(a.point(i), a.point(j));
            }
        }
    }
    let mut within_b = 0.0;
    for i in 0..b.len() {
        for j in 0..b.len() {
            if i != j {
                within_b += eval(b.point(i), b.point(j));
            }
        }
    }
    let mut cross = 0.0;
    for p in a.points() {
        for q in b.points() {
            cross += eval(p, q);
        }
    }
    Ok(within_a / (m * (m - 1.0)) + within_b / (n * (n - 1.0)) - 2.0 * cross / (m * n))
}

/// Fraction of particles whose nearest mixture mode (in Mahalanobis
/// distance) lies within `radius_multiplier` standard radii. One fraction
/// per mode; the fractions sum to at most one.
pub fn mode_coverage(
    gmm: &GmmSpec,
    particles: &ParticleSet,
    radius_multiplier: f64,
) -> Result<Vec<f64>, MetricError> {
    if particles.dim() != gmm.dim() {
        return Err(MetricError::DimensionMismatch {
            expected: gmm.dim(),
            got: particles.dim(),
        });
    }
    let k = gmm.components().len();
    let mut counts = alloc::vec![0usize; k];
    for p in particles.points() {
        let mut best = 0usize;
        let mut best_d2 = f64::INFINITY;
        for (idx, comp) in gmm.components().iter().enumerate() {
            let d2 = comp.mahalanobis_sq(p).map_err(|_| MetricError::DimensionMismatch {
                expected: gmm.dim(),
                got: p.len(),
            })?;
            if d2 < best_d2 {
                best_d2 = d2;
                best = idx;
            }
        }
        if math::sqrt(best_d2) <= radius_multiplier {
            counts[best] += 1;
        }
    }
    let total = particles.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededPrng;
    use crate::scores::GaussianSpec;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol * b.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn w2_identical_gaussians_is_zero() {
        let mean = Vector::new(alloc::vec![1.0, -2.0]).unwrap();
        let cov = Matrix::new(2, 2, alloc::vec![1.5, 0.3, 0.3, 0.8]).unwrap();
        let v = w2_gaussian(&mean, &cov, &mean, &cov).unwrap();
        assert!(v.abs() < 1e-10);
    }

    #[test]
    fn w2_mean_shift_only() {
        let a = Vector::zeros(2);
        let b = Vector::new(alloc::vec![1.0, 1.0]).unwrap();
        let eye = Matrix::identity(2);
        let v = w2_gaussian(&a, &eye, &b, &eye).unwrap();
        assert_close(v, 2.0, 1e-12);
    }

    #[test]
    fn w2_scalar_variances() {
        let zero = Vector::zeros(1);
        let (s1, s2) = (1.7_f64, 0.4_f64);
        let v = w2_gaussian(
            &zero,
            &Matrix::diagonal(&[s1 * s1]),
            &zero,
            &Matrix::diagonal(&[s2 * s2]),
        )
        .unwrap();
        assert_close(v, (s1 - s2) * (s1 - s2), 1e-12);
    }

    #[test]
    fn w2_symmetric_in_arguments() {
        let mut rng = SeededPrng::new(3);
        for _ in 0..5 {
            let ra = Matrix::from_fn(3, 3, |_, _| rng.next_f64() - 0.5);
            let rb = Matrix::from_fn(3, 3, |_, _| rng.next_f64() - 0.5);
            let mut ca = ra.matmul(&ra.transpose());
            let mut cb = rb.matmul(&rb.transpose());
            for i in 0..3 {
                ca.set(i, i, ca.get(i, i) + 0.3);
                cb.set(i, i, cb.get(i, i) + 0.3);
            }
            let ma = Vector::from_fn(3, |_| rng.next_f64());
            let mb = Vector::from_fn(3, |_| rng.next_f64());
            let ab = w2_gaussian(&ma, &ca, &mb, &cb).unwrap();
            let ba = w2_gaussian(&mb, &cb, &ma, &ca).unwrap();
            assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0), "{ab} vs {ba}");
        }
    }

    #[test]
    fn w2_translation_behavior() {
        let mut rng = SeededPrng::new(4);
        let r = Matrix::from_fn(2, 2, |_, _| rng.next_f64() - 0.5);
        let mut cov = r.matmul(&r.transpose());
        for i in 0..2 {
            cov.set(i, i, cov.get(i, i) + 0.5);
        }
        let ma = Vector::new(alloc::vec![0.3, -0.8]).unwrap();
        let mb = Vector::new(alloc::vec![1.1, 0.4]).unwrap();
        let t = Vector::new(alloc::vec![5.0, -2.0]).unwrap();
        let base = w2_gaussian(&ma, &cov, &mb, &cov).unwrap();
        // Same shift on both means: unchanged.
        let both = w2_gaussian(&ma.add(&t), &cov, &mb.add(&t), &cov).unwrap();
        assert_close(both, base, 1e-9);
        // Shift on one mean with equal covariances adds exactly the
        // squared-distance increment.
        let one = w2_gaussian(&ma.add(&t), &cov, &mb, &cov).unwrap();
        let expect = ma.add(&t).sub(&mb).norm_sq();
        assert_close(one, expect, 1e-9);
    }

    #[test]
    fn fit_moments_identical_points() {
        let p = ParticleSet::new(2, alloc::vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        let m = fit_gaussian_moments(&p).unwrap();
        assert_eq!(m.mean.as_slice(), &[1.0, 2.0]);
        assert!(m.cov.frobenius_norm() < 1e-15);
    }

    #[test]
    fn fit_moments_standard_normal_draws() {
        let mut rng = SeededPrng::new(8);
        let g = GaussianSpec::standard(2);
        let p = g.sample_set(&mut rng, 100_000);
        let m = fit_gaussian_moments(&p).unwrap();
        // 3 standard errors: se(mean) ~ 1/sqrt(N), se(var) ~ sqrt(2/N).
        let se_mean = 3.0 / (100_000.0_f64).sqrt();
        let se_var = 3.0 * (2.0 / 100_000.0_f64).sqrt();
        for i in 0..2 {
            assert!(m.mean[i].abs() < se_mean, "mean {}", m.mean[i]);
            assert!((m.cov.get(i, i) - 1.0).abs() < se_var);
        }
        assert!(m.cov.get(0, 1).abs() < se_mean);
    }

    #[test]
    fn fit_moments_order_invariant() {
        let mut rng = SeededPrng::new(10);
        let pts: alloc::vec::Vec<f64> = (0..40).map(|_| rng.next_f64() * 4.0 - 2.0).collect();
        let p = ParticleSet::new(2, pts).unwrap();
        let idx: alloc::vec::Vec<usize> = (0..p.len()).rev().collect();
        let q = p.select(&idx);
        let mp = fit_gaussian_moments(&p).unwrap();
        let mq = fit_gaussian_moments(&q).unwrap();
        for i in 0..2 {
            assert_close(mp.mean[i], mq.mean[i], 1e-12);
            for j in 0..2 {
                assert_close(mp.cov.get(i, j), mq.cov.get(i, j), 1e-12);
            }
        }
    }

    #[test]
    fn fit_moments_needs_enough_points() {
        let p = ParticleSet::new(3, alloc::vec![0.0; 9]).unwrap();
        assert!(matches!(
            fit_gaussian_moments(&p),
            Err(MetricError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn energy_distance_basics() {
        let a = ParticleSet::new(2, alloc::vec![0.4, 0.1, -0.9, 2.0, 0.0, 0.0]).unwrap();
        assert_eq!(energy_distance(&a, &a).unwrap(), 0.0);

        // Two point masses at distance d.
        let p = ParticleSet::new(2, alloc::vec![0.0, 0.0]).unwrap();
        let q = ParticleSet::new(2, alloc::vec![3.0, 4.0]).unwrap();
        assert_close(energy_distance(&p, &q).unwrap(), 10.0, 1e-12);
    }

    #[test]
    fn energy_distance_matches_brute_force() {
        let mut rng = SeededPrng::new(12);
        let a = ParticleSet::from_raw(3, (0..30).map(|_| rng.next_f64()).collect());
        let b = ParticleSet::from_raw(3, (0..24).map(|_| rng.next_f64() + 0.5).collect());
        // Independent double-loop oracle.
        let dist = |p: &[f64], q: &[f64]| -> f64 {
            p.iter()
                .zip(q)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let mut cross = 0.0;
        for i in 0..a.len() {
            for j in 0..b.len() {
                cross += dist(a.point(i), b.point(j));
            }
        }
        cross /= (a.len() * b.len()) as f64;
        let mut wa = 0.0;
        for i in 0..a.len() {
            for j in 0..a.len() {
                wa += dist(a.point(i), a.point(j));
            }
        }
        wa /= (a.len() * a.len()) as f64;
        let mut wb = 0.0;
        for i in 0..b.len() {
            for j in 0..b.len() {
                wb += dist(b.point(i), b.point(j));
            }
        }
        wb /= (b.len() * b.len()) as f64;
        let oracle = 2.0 * cross - wa - wb;
        assert_close(energy_distance(&a, &b).unwrap(), oracle, 1e-12);
        assert!(oracle > 0.0);
    }

    #[test]
    fn energy_distance_positive_for_disjoint_supports() {
        let a = ParticleSet::new(1, alloc::vec![0.0, 0.1, 0.2]).unwrap();
        let b = ParticleSet::new(1, alloc::vec![5.0, 5.1]).unwrap();
        assert!(energy_distance(&a, &b).unwrap() > 0.0);
    }

    #[test]
    fn mmd_same_set_near_zero_and_symmetric() {
        let mut rng = SeededPrng::new(14);
        let pts: alloc::vec::Vec<f64> = (0..60).map(|_| rng.next_f64() * 2.0).collect();
        let a = ParticleSet::new(2, pts.clone()).unwrap();
        let b = ParticleSet::new(2, pts).unwrap();
        let k = KernelSpec::rbfg(1.0).unwrap();
        let v = mmd_squared(&a, &b, &k).unwrap();
        // U-statistic bias bound for identical sets: 2 k_max / (m - 1).
        assert!(v.abs() <= 2.0 / (a.len() as f64 - 1.0));
        let ab = mmd_squared(&a, &b, &k).unwrap();
        let ba = mmd_squared(&b, &a, &k).unwrap();
        assert_close(ab, ba, 1e-12);
    }

    #[test]
    fn mmd_distant_clusters_matches_brute_force() {
        let mut rng = SeededPrng::new(15);
        let a = ParticleSet::from_raw(2, (0..40).map(|_| rng.next_f64() * 0.1).collect());
        let b =
            ParticleSet::from_raw(2, (0..40).map(|_| rng.next_f64() * 0.1 + 50.0).collect());
        let k = KernelSpec::rbfg(0.5).unwrap();
        let v = mmd_squared(&a, &b, &k).unwrap();
        // Far clusters with sigma << gap: cross terms vanish and each within
        // term approaches k(0) = 1, so MMD^2 ~ 2.
        assert!((v - 2.0).abs() < 0.2, "mmd {v}");

        // Brute-force double-loop oracle.
        let kf = |p: &[f64], q: &[f64]| {
            let d2: f64 = p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum();
            (-d2 / 0.25).exp()
        };
        let m = a.len() as f64;
        let mut waa = 0.0;
        for i in 0..a.len() {
            for j in 0..a.len() {
                if i != j {
                    waa += kf(a.point(i), a.point(j));
                }
            }
        }
        let mut wbb = 0.0;
        for i in 0..b.len() {
            for j in 0..b.len() {
                if i != j {
                    wbb += kf(b.point(i), b.point(j));
                }
            }
        }
        let mut wab = 0.0;
        for i in 0..a.len() {
            for j in 0..b.len() {
                wab += kf(a.point(i), b.point(j));
            }
        }
        let oracle = waa / (m * (m - 1.0)) + wbb / (m * (m - 1.0)) - 2.0 * wab / (m * m);
        assert_close(v, oracle, 1e-12);
    }

    #[test]
    fn mmd_rejects_phs() {
        let a = ParticleSet::new(1, alloc::vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            mmd_squared(&a, &a, &KernelSpec::phs(2, 2).unwrap()),
            Err(MetricError::KernelNotPositiveDefinite)
        ));
    }

    fn two_mode_gmm() -> GmmSpec {
        let a = GaussianSpec::isotropic(Vector::new(alloc::vec![-5.0, -5.0]).unwrap(), 1.0)
            .unwrap();
        let b =
            GaussianSpec::isotropic(Vector::new(alloc::vec![5.0, 5.0]).unwrap(), 1.0).unwrap();
        GmmSpec::new(alloc::vec![0.2, 0.8], alloc::vec![a, b]).unwrap()
    }

    #[test]
    fn mode_coverage_point_masses() {
        let gmm = two_mode_gmm();
        let at_first = ParticleSet::new(2, alloc::vec![-5.0, -5.0, -5.0, -5.0]).unwrap();
        let cov = mode_coverage(&gmm, &at_first, 3.0).unwrap();
        assert_eq!(cov, alloc::vec![1.0, 0.0]);
    }

    #[test]
    fn mode_coverage_recovers_weights() {
        let gmm = two_mode_gmm();
        let mut rng = SeededPrng::new(20);
        let samples = gmm.sample_set(&mut rng, 10_000);
        let cov = mode_coverage(&gmm, &samples, 3.0).unwrap();
        assert!((cov[0] - 0.2).abs() < 0.05, "minority {}", cov[0]);
        assert!((cov[1] - 0.8).abs() < 0.05, "majority {}", cov[1]);
        assert!(cov[0] + cov[1] <= 1.0 + 1e-12);
    }

    #[test]
    fn mode_coverage_vanishing_radius() {
        let gmm = two_mode_gmm();
        let mut rng = SeededPrng::new(21);
        let samples = gmm.sample_set(&mut rng, 1000);
        let cov = mode_coverage(&gmm, &samples, 1e-9).unwrap();
        assert!(cov[0] + cov[1] < 0.01);
    }

    #[test]
    fn metrics_invariant_under_permutation() {
        let mut rng = SeededPrng::new(22);
        let a = ParticleSet::from_raw(2, (0..40).map(|_| rng.next_f64()).collect());
        let b = ParticleSet::from_raw(2, (0..40).map(|_| rng.next_f64() + 0.2).collect());
        let idx: alloc::vec::Vec<usize> = (0..a.len()).rev().collect();
        let ar = a.select(&idx);
        assert_close(
            energy_distance(&a, &b).unwrap(),
            energy_distance(&ar, &b).unwrap(),
            1e-12,
        );
        let k = KernelSpec::imq(1.0).unwrap();
        assert_close(
            mmd_squared(&a, &b, &k).unwrap(),
            mmd_squared(&ar, &b, &k).unwrap(),
            1e-12,
        );
    }

    #[test]
    fn series_enforces_increasing_iterations() {
        let mut s = MetricSeries::new("w2");
        s.push(1, 0.5).unwrap();
        s.push(10, 0.4).unwrap();
        assert!(matches!(
            s.push(10, 0.3),
            Err(MetricError::NonIncreasingIteration)
        ));
        assert_eq!(s.last_value(), Some(0.4));
    }
}
