#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

//! Numerical core for kernel-flow and score-matching generative modeling.
//!
//! The crate provides the pieces needed to train small generators against
//! analytic targets without any adversarially trained network: radial kernels
//! with their gradient fields, exact Gaussian/mixture scores, push-forward
//! score formulas for invertible generators, the two least-squares training
//! losses built from them, a discriminator-guided Langevin sampler, and the
//! evaluation metrics (Gaussian Wasserstein-2, energy distance, MMD, mode
//! coverage).
//!
//! Everything is deterministic given a [`rng::SeededPrng`] seed and runs
//! single-threaded; `no_std` builds are supported with `alloc` plus the
//! `libm` feature.

extern crate alloc;

mod math;

pub mod field;
pub mod generators;
pub mod kernels;
pub mod langevin;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod particles;
pub mod rng;
pub mod scores;
pub mod train;

pub use field::DiscriminatorField;
pub use generators::{
    AdamConfig, AdamState, Generator, GeneratorModel, LinearGenerator, MlpGenerator,
};
pub use kernels::{GradientConvention, KernelSpec};
pub use langevin::{AlphaMode, GammaMode, LangevinSchedule};
pub use linalg::{Matrix, Vector};
pub use particles::ParticleSet;
pub use rng::SeededPrng;
pub use scores::{GaussianSpec, GmmSpec, TargetDensity};
