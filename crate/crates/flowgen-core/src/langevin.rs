//! Discriminator-guided Langevin sampling.
//!
//! Each step rebuilds the kernel discriminator with generator centers taken
//! from the previous iterate's particle set and data centers drawn fresh from
//! the data pool (uniformly, without replacement), then moves every particle
//! along `x - alpha_t * grad D(x) + gamma_t * noise`.

use alloc::vec::Vec;
use core::fmt;

use crate::field::{DiscriminatorField, FieldError};
use crate::kernels::KernelSpec;
use crate::particles::ParticleSet;
use crate::rng::SeededPrng;
use crate::math;

/// Step-size decay mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaMode {
    Constant,
    /// `alpha_t = alpha0 * rate^t` with `rate` in (0, 1).
    Geometric { rate: f64 },
}

/// Noise coefficient mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaMode {
    Zero,
    SqrtTwoAlpha,
}

/// Errors raised by schedule construction and the sampler.
#[derive(Clone, Debug, PartialEq)]
pub enum LangevinError {
    /// alpha0 must be positive, geometric rates must lie in (0, 1), and the
    /// horizon must be at least one step.
    InvalidSchedule,
    /// Queried step index at or beyond the horizon.
    StepOutOfRange { step: usize, horizon: usize },
    /// A particle went non-finite (gradient explosion) at the given step.
    NonFinite { step: usize },
    Field(FieldError),
}

impl fmt::Display for LangevinError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidSchedule => write!(f, "invalid Langevin schedule"),
            Self::StepOutOfRange { step, horizon } => {
                write!(f, "step {step} out of range (horizon {horizon})")
            }
            Self::NonFinite { step } => {
                write!(f, "particle diverged (non-finite) at step {step}")
            }
            Self::Field(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LangevinError {}

impl From<FieldError> for LangevinError {
    fn from(e: FieldError) -> Self {
        Self::Field(e)
    }
}

/// Step-size and noise schedule over a fixed horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct LangevinSchedule {
    pub alpha0: f64,
    pub alpha_mode: AlphaMode,
    pub gamma_mode: GammaMode,
    pub horizon: usize,
}

impl LangevinSchedule {
    pub fn new(
        alpha0: f64,
        alpha_mode: AlphaMode,
        gamma_mode: GammaMode,
        horizon: usize,
    ) -> Result<Self, LangevinError> {
        if !(alpha0 > 0.0 && alpha0.is_finite()) || horizon == 0 {
            return Err(LangevinError::InvalidSchedule);
        }
        if let AlphaMode::Geometric { rate } = alpha_mode {
            if !(rate > 0.0 && rate < 1.0) {
                return Err(LangevinError::InvalidSchedule);
            }
        }
        Ok(Self {
            alpha0,
            alpha_mode,
            gamma_mode,
            horizon,
        })
    }

    fn check_step(&self, t: usize) -> Result<(), LangevinError> {
        if t >= self.horizon {
            return Err(LangevinError::StepOutOfRange {
                step: t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    /// Step size at step `t` (0-based, `t < horizon`).
    pub fn alpha(&self, t: usize) -> Result<f64, LangevinError> {
        self.check_step(t)?;
        Ok(match self.alpha_mode {
            AlphaMode::Constant => self.alpha0,
            AlphaMode::Geometric { rate } => self.alpha0 * math::powi(rate, t as i32),
        })
    }

    /// Noise coefficient at step `t`.
    pub fn gamma(&self, t: usize) -> Result<f64, LangevinError> {
        self.check_step(t)?;
        Ok(match self.gamma_mode {
            GammaMode::Zero => 0.0,
            GammaMode::SqrtTwoAlpha => math::sqrt(2.0 * self.alpha(t)?),
        })
    }
}

/// Sampler output: the final particle set and the per-step mean squared
/// iterate displacement `mean_i ||x_t^i - x_{t-1}^i||^2`.
#[derive(Clone, Debug)]
pub struct LangevinOutcome {
    pub particles: ParticleSet,
    pub iterate_deltas: Vec<f64>,
}

/// Runs the sampler for the schedule's horizon. `on_step` observes each
/// post-update particle set (step numbers 1..=horizon); the caller records
/// whatever series it needs there.
#[allow(clippy::too_many_arguments)]
pub fn langevin_run(
    init: &ParticleSet,
    data_pool: &ParticleSet,
    kernel: &KernelSpec,
    scale: f64,
    schedule: &LangevinSchedule,
    data_batch_size: usize,
    rng: &mut SeededPrng,
    mut on_step: impl FnMut(usize, &ParticleSet),
) -> Result<LangevinOutcome, LangevinError> {
    if init.dim() != data_pool.dim() {
        return Err(LangevinError::Field(FieldError::DimensionMismatch {
            expected: init.dim(),
            got: data_pool.dim(),
        }));
    }
    let dim = init.dim();
    let mut particles = init.clone();
    let mut deltas = Vec::with_capacity(schedule.horizon);

    for t in 0..schedule.horizon {
        let alpha = schedule.alpha(t)?;
        let gamma = schedule.gamma(t)?;
        let batch_idx = rng.sample_indices(data_pool.len(), data_batch_size.max(1));
        let data_batch = data_pool.select(&batch_idx);
        let field =
            DiscriminatorField::new(data_batch, particles.clone(), kernel.clone(), scale)?;

        let mut next = Vec::with_capacity(particles.len() * dim);
        let mut delta_acc = 0.0;
        for x in particles.points() {
            let g = field.grad(x)?;
            let mut moved = 0.0;
            for (i, &xi) in x.iter().enumerate() {
                let mut v = xi - alpha * g[i];
                if gamma != 0.0 {
                    v += gamma * rng.next_standard_normal();
                }
                let d = v - xi;
                moved += d * d;
                next.push(v);
            }
            delta_acc += moved;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(LangevinError::NonFinite { step: t });
        }
        particles = ParticleSet::from_raw(dim, next);
        deltas.push(delta_acc / particles.len() as f64);
        on_step(t + 1, &particles);
    }

    Ok(LangevinOutcome {
        particles,
        iterate_deltas: deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::GradientConvention;

    #[test]
    fn schedule_values() {
        let s = LangevinSchedule::new(2.0, AlphaMode::Constant, GammaMode::Zero, 10).unwrap();
        assert_eq!(s.alpha(0).unwrap(), 2.0);
        assert_eq!(s.alpha(9).unwrap(), 2.0);
        assert_eq!(s.gamma(3).unwrap(), 0.0);
        assert!(matches!(
            s.alpha(10),
            Err(LangevinError::StepOutOfRange { .. })
        ));

        let g = LangevinSchedule::new(
            1.0,
            AlphaMode::Geometric { rate: 0.99 },
            GammaMode::SqrtTwoAlpha,
            5,
        )
        .unwrap();
        assert_eq!(g.alpha(0).unwrap(), 1.0);
        assert!((g.alpha(2).unwrap() - 0.9801).abs() < 1e-12);

        // gamma = sqrt(2 alpha): alpha = 8 gives 4.
        let s8 = LangevinSchedule::new(8.0, AlphaMode::Constant, GammaMode::SqrtTwoAlpha, 2)
            .unwrap();
        assert_eq!(s8.gamma(0).unwrap(), 4.0);
    }

    #[test]
    fn schedule_validation() {
        assert!(LangevinSchedule::new(0.0, AlphaMode::Constant, GammaMode::Zero, 5).is_err());
        assert!(
            LangevinSchedule::new(1.0, AlphaMode::Geometric { rate: 1.0 }, GammaMode::Zero, 5)
                .is_err()
        );
        assert!(LangevinSchedule::new(1.0, AlphaMode::Constant, GammaMode::Zero, 0).is_err());
    }

    #[test]
    fn zero_alpha_zero_gamma_freezes_particles() {
        // alpha must be > 0 by contract; emulate the frozen case with a tiny
        // alpha and a kernel whose gradient vanishes (coincident centers).
        let init = ParticleSet::new(2, alloc::vec![0.5, 0.5, -0.5, 0.0]).unwrap();
        let pool = init.clone();
        let kernel = KernelSpec::rbfg(1.0).unwrap();
        let schedule =
            LangevinSchedule::new(1.0, AlphaMode::Constant, GammaMode::Zero, 4).unwrap();
        // Data batch = full pool = the particles themselves: the field
        // cancels exactly, so particles stay put for all steps.
        let mut rng = SeededPrng::new(1);
        let out = langevin_run(
            &init,
            &pool,
            &kernel,
            1.0,
            &schedule,
            pool.len(),
            &mut rng,
            |_, _| {},
        )
        .unwrap();
        assert_eq!(out.particles, init);
        assert!(out.iterate_deltas.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn unit_field_walks_particle_toward_data() {
        // Single data center, PHS k=1 in the table convention: the gradient
        // field has unit norm, so the particle covers distance alpha per step
        // until it lands within one step of the center.
        let init = ParticleSet::new(2, alloc::vec![-4.0, 0.0]).unwrap();
        let pool = ParticleSet::new(2, alloc::vec![1.0, 0.0]).unwrap();
        let kernel = KernelSpec::phs(1, 3)
            .unwrap()
            .with_convention(GradientConvention::PaperTable);
        let alpha = 0.5;
        let schedule =
            LangevinSchedule::new(alpha, AlphaMode::Constant, GammaMode::Zero, 9).unwrap();
        let mut rng = SeededPrng::new(2);
        let mut positions = alloc::vec![init.point(0)[0]];
        let out = langevin_run(
            &init,
            &pool,
            &kernel,
            1.0,
            &schedule,
            1,
            &mut rng,
            |_, p| positions.push(p.point(0)[0]),
        )
        .unwrap();
        // Direct simulation oracle: each step moves exactly alpha toward the
        // center (the particle's own previous position is a zeroed PHS term).
        for w in positions.windows(2) {
            let step = w[1] - w[0];
            assert!((step - alpha).abs() < 1e-12, "step {step}");
        }
        let end = out.particles.point(0)[0];
        assert!((end - 0.5).abs() < 1e-12);
        assert!(out.iterate_deltas.iter().all(|d| (d - alpha * alpha).abs() < 1e-12));
    }

    #[test]
    fn same_seed_identical_trajectories() {
        let init = ParticleSet::new(2, alloc::vec![0.1, 0.2, -0.4, 0.8, 0.9, -1.0]).unwrap();
        let pool = ParticleSet::new(2, alloc::vec![1.0, 1.0, -1.0, -1.0, 0.5, -0.5, 0.0, 1.5])
            .unwrap();
        let kernel = KernelSpec::rbfg(1.0).unwrap();
        let schedule = LangevinSchedule::new(
            0.3,
            AlphaMode::Constant,
            GammaMode::SqrtTwoAlpha,
            12,
        )
        .unwrap();
        let run = |seed: u64| {
            let mut rng = SeededPrng::new(seed);
            langevin_run(&init, &pool, &kernel, 1.0, &schedule, 2, &mut rng, |_, _| {}).unwrap()
        };
        let a = run(9);
        let b = run(9);
        assert_eq!(a.particles, b.particles);
        assert_eq!(a.iterate_deltas, b.iterate_deltas);
        let c = run(10);
        assert_ne!(a.particles, c.particles);
    }

    #[test]
    fn mirror_symmetry_preserved_without_noise() {
        // Initial particles and data both symmetric about the x-axis: with
        // gamma = 0 and the full pool as batch the axis is preserved.
        let init = ParticleSet::new(2, alloc::vec![0.3, 0.7, 0.3, -0.7, -0.9, 0.2, -0.9, -0.2])
            .unwrap();
        let pool = ParticleSet::new(2, alloc::vec![1.0, 0.4, 1.0, -0.4, 0.0, 1.1, 0.0, -1.1])
            .unwrap();
        let kernel = KernelSpec::rbfg(1.0).unwrap();
        let schedule =
            LangevinSchedule::new(0.2, AlphaMode::Constant, GammaMode::Zero, 6).unwrap();
        let mut rng = SeededPrng::new(3);
        let out = langevin_run(
            &init,
            &pool,
            &kernel,
            1.0,
            &schedule,
            pool.len(),
            &mut rng,
            |_, _| {},
        )
        .unwrap();
        // Mirror pairs stay mirror pairs.
        for pair in [(0, 1), (2, 3)] {
            let a = out.particles.point(pair.0);
            let b = out.particles.point(pair.1);
            assert!((a[0] - b[0]).abs() < 1e-12);
            assert!((a[1] + b[1]).abs() < 1e-12);
        }
    }
}
