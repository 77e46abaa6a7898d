//! The training loop shared by both losses.
//!
//! Per iteration the flow loss refreshes its previous-generator centers by
//! pushing a fresh noise batch through the pre-update parameters (the batch
//! is stored, not the parameters), samples a data reference batch, then takes
//! one Adam step. The score loss needs neither center set. Sampling order is
//! fixed, so a seed pins the whole run.

use alloc::vec::Vec;
use core::fmt;

use crate::generators::{AdamConfig, AdamState, Generator, GeneratorModel};
use crate::kernels::KernelSpec;
use crate::linalg::Vector;
use crate::losses::{flowgan_loss, scoregan_loss, LossError};
use crate::particles::ParticleSet;
use crate::rng::SeededPrng;
use crate::scores::TargetDensity;

/// Which generator loss the loop minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    ScoreGan,
    FlowGan,
}

/// Training hyperparameters.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub iterations: usize,
    /// Noise batch size M (also the refreshed previous-generator batch).
    pub batch_size: usize,
    /// Data reference batch size N (flow loss only).
    pub data_batch_size: usize,
    /// Kernel for the flow loss; ignored by the score loss.
    pub kernel: Option<KernelSpec>,
    pub adam: AdamConfig,
    /// Record a trace row every this many iterations (0 disables recording).
    pub metric_stride: usize,
}

/// One recorded trace row: iteration index, pre-update batch loss, and the
/// caller-provided metric values evaluated at the post-update parameters.
#[derive(Clone, Debug)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub metrics: Vec<f64>,
}

/// Training output: the recorded rows and the final flattened parameters.
#[derive(Clone, Debug)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    pub final_params: Vector,
}

/// Errors raised by the training loop.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainError {
    /// Loss became non-finite at the given iteration.
    Diverged { iteration: usize, loss: f64 },
    /// Flow loss selected without a kernel.
    MissingKernel,
    /// Batch sizes must be at least one.
    EmptyBatch,
    Loss(LossError),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Diverged { iteration, loss } => {
                write!(f, "training diverged at iteration {iteration} (loss {loss})")
            }
            Self::MissingKernel => write!(f, "flow loss requires a kernel"),
            Self::EmptyBatch => write!(f, "batch sizes must be >= 1"),
            Self::Loss(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TrainError {}

impl From<LossError> for TrainError {
    fn from(e: LossError) -> Self {
        Self::Loss(e)
    }
}

/// Standard normal noise batch in the generator's input dimension.
pub fn sample_noise(rng: &mut SeededPrng, dim: usize, count: usize) -> ParticleSet {
    let mut data = Vec::with_capacity(dim * count);
    for _ in 0..dim * count {
        data.push(rng.next_standard_normal());
    }
    ParticleSet::from_raw(dim, data)
}

/// Runs the configured loop, mutating the generator in place and recording a
/// trace. `metric_fn` is consulted on recorded iterations and may evaluate
/// the generator however it likes (it receives its own purpose-split RNG via
/// the closure's capture, keeping the training stream stride-independent).
pub fn train(
    gen: &mut GeneratorModel,
    target: &TargetDensity,
    config: &TrainConfig,
    rng: &mut SeededPrng,
    mut metric_fn: impl FnMut(usize, &GeneratorModel) -> Vec<f64>,
) -> Result<TrainTrace, TrainError> {
    if config.batch_size == 0 || (config.loss == LossKind::FlowGan && config.data_batch_size == 0)
    {
        return Err(TrainError::EmptyBatch);
    }
    let kernel = match (config.loss, &config.kernel) {
        (LossKind::FlowGan, None) => return Err(TrainError::MissingKernel),
        (_, k) => k.clone(),
    };
    let mut adam = AdamState::new(gen.param_count(), config.adam);
    let mut rows = Vec::new();
    let n_in = gen.input_dim();

    for t in 1..=config.iterations {
        let loss = match config.loss {
            LossKind::FlowGan => {
                let kernel = kernel.as_ref().expect("checked above");
                // Centers from the pre-update generator, fresh noise.
                let prev_batch =
                    crate::generators::forward_set(gen, &sample_noise(rng, n_in, config.batch_size));
                let z_batch = sample_noise(rng, n_in, config.batch_size);
                let data_batch = target.sample_set(rng, config.data_batch_size);
                let lv = flowgan_loss(gen, &z_batch, &data_batch, &prev_batch, kernel)?;
                apply_step(gen, &mut adam, &lv.grad)?;
                lv.loss
            }
            LossKind::ScoreGan => {
                let z_batch = sample_noise(rng, n_in, config.batch_size);
                let lv = scoregan_loss(gen, &z_batch, target)?;
                apply_step(gen, &mut adam, &lv.grad)?;
                lv.loss
            }
        };
        if !loss.is_finite() {
            return Err(TrainError::Diverged { iteration: t, loss });
        }
        if config.metric_stride > 0 && (t % config.metric_stride == 0 || t == config.iterations) {
            let metrics = metric_fn(t, gen);
            rows.push(TraceRow {
                iteration: t,
                loss,
                metrics,
            });
        }
    }

    Ok(TrainTrace {
        rows,
        final_params: gen.params(),
    })
}

fn apply_step(
    gen: &mut GeneratorModel,
    adam: &mut AdamState,
    grad: &Vector,
) -> Result<(), TrainError> {
    let mut params = gen.params();
    adam.step(params.as_mut_slice(), grad.as_slice())
        .map_err(|e| TrainError::Loss(LossError::Generator(e)))?;
    gen.set_params(params.as_slice())
        .map_err(|e| TrainError::Loss(LossError::Generator(e)))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::LinearGenerator;
    use crate::scores::GaussianSpec;

    fn gaussian_target_2d() -> TargetDensity {
        TargetDensity::Gaussian(
            GaussianSpec::isotropic(Vector::new(alloc::vec![5.0, 5.0]).unwrap(), 0.75).unwrap(),
        )
    }

    fn config(loss: LossKind, iterations: usize) -> TrainConfig {
        TrainConfig {
            loss,
            iterations,
            batch_size: 64,
            data_batch_size: 64,
            kernel: Some(KernelSpec::phs(2, 2).unwrap()),
            adam: AdamConfig::default().with_learning_rate(0.05),
            metric_stride: 10,
        }
    }

    #[test]
    fn zero_iterations_returns_initial_params() {
        let mut rng = SeededPrng::new(1);
        let mut gen = GeneratorModel::Linear(LinearGenerator::glorot(2, 2, &mut rng));
        let before = gen.params();
        let trace = train(
            &mut gen,
            &gaussian_target_2d(),
            &config(LossKind::FlowGan, 0),
            &mut rng,
            |_, _| alloc::vec![],
        )
        .unwrap();
        assert!(trace.rows.is_empty());
        assert_eq!(trace.final_params, before);
    }

    #[test]
    fn same_seed_identical_traces() {
        for kind in [LossKind::FlowGan, LossKind::ScoreGan] {
            let run = |seed: u64| {
                let mut rng = SeededPrng::new(seed);
                let mut gen = GeneratorModel::Linear(LinearGenerator::glorot(2, 2, &mut rng));
                train(
                    &mut gen,
                    &gaussian_target_2d(),
                    &config(kind, 30),
                    &mut rng,
                    |_, g| alloc::vec![g.params()[0]],
                )
                .unwrap()
            };
            let a = run(7);
            let b = run(7);
            assert_eq!(a.final_params, b.final_params);
            assert_eq!(a.rows.len(), b.rows.len());
            for (ra, rb) in a.rows.iter().zip(&b.rows) {
                assert_eq!(ra.iteration, rb.iteration);
                assert_eq!(ra.loss.to_bits(), rb.loss.to_bits());
                assert_eq!(ra.metrics, rb.metrics);
            }
        }
    }

    #[test]
    fn flow_loss_without_kernel_is_an_error() {
        let mut rng = SeededPrng::new(3);
        let mut gen = GeneratorModel::Linear(LinearGenerator::glorot(2, 2, &mut rng));
        let mut cfg = config(LossKind::FlowGan, 5);
        cfg.kernel = None;
        assert!(matches!(
            train(&mut gen, &gaussian_target_2d(), &cfg, &mut rng, |_, _| alloc::vec![]),
            Err(TrainError::MissingKernel)
        ));
    }

    #[test]
    fn training_moves_generator_toward_target() {
        // Short smoke run; the acceptance suite tests full convergence.
        let mut rng = SeededPrng::new(11);
        let mut gen = GeneratorModel::Linear(LinearGenerator::glorot(2, 2, &mut rng));
        let target = gaussian_target_2d();
        let before = {
            let b = match &gen {
                GeneratorModel::Linear(l) => l.offset().clone(),
                _ => unreachable!(),
            };
            b.sub(&Vector::new(alloc::vec![5.0, 5.0]).unwrap()).norm()
        };
        train(
            &mut gen,
            &target,
            &config(LossKind::ScoreGan, 400),
            &mut rng,
            |_, _| alloc::vec![],
        )
        .unwrap();
        let after = match &gen {
            GeneratorModel::Linear(l) => l
                .offset()
                .sub(&Vector::new(alloc::vec![5.0, 5.0]).unwrap())
                .norm(),
            _ => unreachable!(),
        };
        assert!(after < before, "offset distance {after} vs {before}");
    }
}
