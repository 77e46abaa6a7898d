//! The two generator training losses.
//!
//! The flow loss penalizes the squared norm of the kernel flow residual at
//! each generated point; its parameter gradient is analytic (kernel Hessians
//! chained through the generator VJP). The score loss penalizes the squared
//! difference between the push-forward score of the generator and the target
//! score; its gradient is analytic for square linear generators and falls
//! back to central finite differences over the parameters otherwise, since
//! the push-forward score is a second-order object in the network.

use core::fmt;

use crate::field::{flow_residual, residual_jacobian_apply, FieldError};
use crate::generators::{
    generator_score_rect, generator_score_square, param_fd_step, Generator, GeneratorError,
    GeneratorModel, LinearGenerator,
};
use crate::kernels::KernelSpec;
use crate::linalg::{Matrix, Vector};
use crate::particles::ParticleSet;
use crate::scores::{ScoreError, TargetDensity};

/// Errors raised while evaluating a loss.
#[derive(Clone, Debug, PartialEq)]
pub enum LossError {
    DimensionMismatch { expected: usize, got: usize },
    Generator(GeneratorError),
    Score(ScoreError),
    Field(FieldError),
}

impl fmt::Display for LossError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Self::Generator(e) => write!(f, "{e}"),
            Self::Score(e) => write!(f, "{e}"),
            Self::Field(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LossError {}

impl From<GeneratorError> for LossError {
    fn from(e: GeneratorError) -> Self {
        Self::Generator(e)
    }
}

impl From<ScoreError> for LossError {
    fn from(e: ScoreError) -> Self {
        Self::Score(e)
    }
}

impl From<FieldError> for LossError {
    fn from(e: FieldError) -> Self {
        Self::Field(e)
    }
}

/// A loss value with its flattened parameter gradient.
#[derive(Clone, Debug)]
pub struct LossValue {
    pub loss: f64,
    pub grad: Vector,
}

fn check_batch_dims(
    gen: &GeneratorModel,
    z_batch: &ParticleSet,
    out_dims: &[usize],
) -> Result<(), LossError> {
    if z_batch.dim() != gen.input_dim() {
        return Err(LossError::DimensionMismatch {
            expected: gen.input_dim(),
            got: z_batch.dim(),
        });
    }
    for &d in out_dims {
        if d != gen.output_dim() {
            return Err(LossError::DimensionMismatch {
                expected: gen.output_dim(),
                got: d,
            });
        }
    }
    Ok(())
}

/// Mean over the z batch of the squared flow residual at `G(z)`.
pub fn flowgan_loss_value(
    gen: &GeneratorModel,
    z_batch: &ParticleSet,
    data: &ParticleSet,
    prev_gen: &ParticleSet,
    kernel: &KernelSpec,
) -> Result<f64, LossError> {
    check_batch_dims(gen, z_batch, &[data.dim(), prev_gen.dim()])?;
    let mut loss = 0.0;
    for z in z_batch.points() {
        let x = gen.forward(z);
        let r = flow_residual(kernel, x.as_slice(), data, prev_gen)?;
        loss += r.norm_sq();
    }
    Ok(loss / z_batch.len() as f64)
}

/// Flow loss plus its analytic parameter gradient:
/// `dL/dx = 2 J_residual(x) * residual`, chained through the generator VJP.
pub fn flowgan_loss(
    gen: &GeneratorModel,
    z_batch: &ParticleSet,
    data: &ParticleSet,
    prev_gen: &ParticleSet,
    kernel: &KernelSpec,
) -> Result<LossValue, LossError> {
    check_batch_dims(gen, z_batch, &[data.dim(), prev_gen.dim()])?;
    let m = z_batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vector::zeros(gen.param_count());
    for z in z_batch.points() {
        let x = gen.forward(z);
        let r = flow_residual(kernel, x.as_slice(), data, prev_gen)?;
        loss += r.norm_sq();
        let dx = residual_jacobian_apply(kernel, x.as_slice(), data, prev_gen, &r).scale(2.0);
        grad.axpy(1.0, &gen.vjp(z, dx.as_slice()));
    }
    Ok(LossValue {
        loss: loss / m,
        grad: grad.scale(1.0 / m),
    })
}

/// Push-forward score of the generator at `G(z)`, choosing the square or
/// tall formula by shape.
pub fn generator_score(gen: &GeneratorModel, z: &[f64]) -> Result<Vector, GeneratorError> {
    if gen.input_dim() == gen.output_dim() {
        generator_score_square(gen, z)
    } else {
        generator_score_rect(gen, z)
    }
}

/// Mean over the z batch of the squared score mismatch at `G(z)`.
pub fn scoregan_loss_value(
    gen: &GeneratorModel,
    z_batch: &ParticleSet,
    target: &TargetDensity,
) -> Result<f64, LossError> {
    check_batch_dims(gen, z_batch, &[target.dim()])?;
    let mut loss = 0.0;
    for z in z_batch.points() {
        let x = gen.forward(z);
        let s_gen = generator_score(gen, z)?;
        let s_data = target.score(x.as_slice())?;
        loss += s_gen.sub(&s_data).norm_sq();
    }
    Ok(loss / z_batch.len() as f64)
}

/// Score loss plus its parameter gradient.
pub fn scoregan_loss(
    gen: &GeneratorModel,
    z_batch: &ParticleSet,
    target: &TargetDensity,
) -> Result<LossValue, LossError> {
    check_batch_dims(gen, z_batch, &[target.dim()])?;
    match gen {
        GeneratorModel::Linear(lin) if lin.input_dim() == lin.output_dim() => {
            scoregan_linear_square(lin, z_batch, target)
        }
        _ => {
            let loss = scoregan_loss_value(gen, z_batch, target)?;
            let grad = scoregan_grad_fd(gen, z_batch, target)?;
            Ok(LossValue { loss, grad })
        }
    }
}

/// Analytic gradient for the square linear case. With `u(z)` the score
/// residual at `x = Az + b`:
///   dL/dA = mean 2 [ (A^{-T} z)(A^{-1} u)^T - (H_d u) z^T ],
///   dL/db = mean -2 H_d u,
/// where `H_d` is the Jacobian of the target score at `x`.
fn scoregan_linear_square(
    lin: &LinearGenerator,
    z_batch: &ParticleSet,
    target: &TargetDensity,
) -> Result<LossValue, LossError> {
    let n = lin.input_dim();
    let a_inv = lin.matrix().inverse().map_err(|_| {
        LossError::Generator(GeneratorError::SingularJacobian)
    })?;
    let a_inv_t = a_inv.transpose();
    let const_jac = match target {
        TargetDensity::Gaussian(g) => Some(g.score_jacobian()),
        TargetDensity::Gmm(_) => None,
    };
    let m = z_batch.len() as f64;
    let mut loss = 0.0;
    let mut grad_a = Matrix::zeros(n, n);
    let mut grad_b = Vector::zeros(n);
    for z in z_batch.points() {
        let zv = Vector::from_raw(z.to_vec());
        let x = lin.forward(z);
        let v = a_inv_t.matvec(&zv); // A^{-T} z
        let s_gen = v.scale(-1.0);
        let s_data = target.score(x.as_slice())?;
        let u = s_gen.sub(&s_data);
        loss += u.norm_sq();

        let per_x_jac;
        let h_d: &Matrix = match &const_jac {
            Some(j) => j,
            None => {
                per_x_jac = target.score_jacobian(x.as_slice())?;
                &per_x_jac
            }
        };
        let w = a_inv.matvec(&u); // A^{-1} u
        let hu = h_d.matvec(&u);
        for i in 0..n {
            for j in 0..n {
                let g = grad_a.get(i, j) + 2.0 * (v[i] * w[j] - hu[i] * z[j]);
                grad_a.set(i, j, g);
            }
        }
        grad_b.axpy(-2.0, &hu);
    }
    let mut flat = alloc::vec::Vec::with_capacity(n * n + n);
    flat.extend_from_slice(grad_a.scale(1.0 / m).as_slice());
    flat.extend_from_slice(grad_b.scale(1.0 / m).as_slice());
    Ok(LossValue {
        loss: loss / m,
        grad: Vector::from_raw(flat),
    })
}

/// Central finite differences of the score loss over the parameters, with
/// per-coordinate step `1e-5 * (1 + |theta_i|)`.
fn scoregan_grad_fd(
    gen: &GeneratorModel,
    z_batch: &ParticleSet,
    target: &TargetDensity,
) -> Result<Vector, LossError> {
    let theta = gen.params();
    let mut probe = gen.clone();
    let mut grad = Vector::zeros(theta.len());
    let mut scratch = theta.clone();
    for i in 0..theta.len() {
        let h = param_fd_step(theta[i]);
        scratch[i] = theta[i] + h;
        probe.set_params(scratch.as_slice())?;
        let fp = scoregan_loss_value(&probe, z_batch, target)?;
        scratch[i] = theta[i] - h;
        probe.set_params(scratch.as_slice())?;
        let fm = scoregan_loss_value(&probe, z_batch, target)?;
        scratch[i] = theta[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::MlpGenerator;
    use crate::linalg::Matrix;
    use crate::rng::SeededPrng;
    use crate::scores::{GaussianSpec, TargetDensity};

    fn normal_set(rng: &mut SeededPrng, dim: usize, n: usize) -> ParticleSet {
        ParticleSet::from_raw(dim, (0..dim * n).map(|_| rng.next_standard_normal()).collect())
    }

    #[test]
    fn flow_loss_zero_when_batches_coincide() {
        let mut rng = SeededPrng::new(1);
        let gen = GeneratorModel::Linear(LinearGenerator::glorot(2, 2, &mut rng));
        let z = normal_set(&mut rng, 2, 8);
        let batch = normal_set(&mut rng, 2, 16);
        let k = KernelSpec::rbfg(1.0).unwrap();
        let lv = flowgan_loss(&gen, &z, &batch, &batch, &k).unwrap();
        assert_eq!(lv.loss, 0.0);
        assert_eq!(lv.grad.norm(), 0.0);
    }

    #[test]
    fn flow_loss_single_center_hand_expansion() {
        let mut rng = SeededPrng::new(2);
        let gen = GeneratorModel::Linear(LinearGenerator::glorot(2, 2, &mut rng));
        let z = ParticleSet::new(2, alloc::vec![0.4, -0.6]).unwrap();
        let data = ParticleSet::new(2, alloc::vec![1.0, 0.5]).unwrap();
        let prev = ParticleSet::new(2, alloc::vec![-0.7, 0.1]).unwrap();
        let k = KernelSpec::imq(1.0).unwrap();
        let lv = flowgan_loss(&gen, &z, &data, &prev, &k).unwrap();
        let x = gen.forward(z.point(0));
        let gd = k.grad(&[x[0] - 1.0, x[1] - 0.5]);
        let gp = k.grad(&[x[0] + 0.7, x[1] - 0.1]);
        let expect = gd.sub(&gp).norm_sq();
        assert!((lv.loss - expect).abs() <= 1e-14 * expect.max(1.0));
    }

    #[test]
    fn flow_grad_matches_fd_on_mlp() {
        let mut rng = SeededPrng::new(3);
        let mlp = MlpGenerator::glorot(alloc::vec![2, 5, 2], 0.2, &mut rng).unwrap();
        let gen = GeneratorModel::Mlp(mlp);
        let z = normal_set(&mut rng, 2, 6);
        let data = normal_set(&mut rng, 2, 7);
        let prev = normal_set(&mut rng, 2, 9);
        for k in [
            KernelSpec::rbfg(1.0).unwrap(),
            KernelSpec::phs(2, 2).unwrap(),
        ] {
            let lv = flowgan_loss(&gen, &z, &data, &prev, &k).unwrap();
            let theta = gen.params();
            let mut probe = gen.clone();
            let mut scratch = theta.clone();
            for i in (0..theta.len()).step_by(5) {
                let h = param_fd_step(theta[i]);
                scratch[i] = theta[i] + h;
                probe.set_params(scratch.as_slice()).unwrap();
                let fp = flowgan_loss_value(&probe, &z, &data, &prev, &k).unwrap();
                scratch[i] = theta[i] - h;
                probe.set_params(scratch.as_slice()).unwrap();
                let fm = flowgan_loss_value(&probe, &z, &data, &prev, &k).unwrap();
                scratch[i] = theta[i];
                let fd = (fp - fm) / (2.0 * h);
                assert!(
                    (lv.grad[i] - fd).abs() <= 1e-4 * fd.abs().max(1e-6),
                    "param {i}: {} vs {fd}",
                    lv.grad[i]
                );
            }
        }
    }

    #[test]
    fn score_loss_zero_for_exact_transport() {
        // A = cov^{1/2}, b = mean maps the standard normal onto the target.
        let mut rng = SeededPrng::new(4);
        let a = Matrix::from_fn(2, 2, |_, _| rng.next_f64() - 0.5);
        let mut cov = a.matmul(&a.transpose());
        for i in 0..2 {
            cov.set(i, i, cov.get(i, i) + 1.0);
        }
        let mean = Vector::new(alloc::vec![1.5, -0.5]).unwrap();
        let target =
            TargetDensity::Gaussian(GaussianSpec::new(mean.clone(), cov.clone()).unwrap());
        let root = cov.sqrt_spd().unwrap();
        let gen = GeneratorModel::Linear(LinearGenerator::new(root, mean).unwrap());
        let z = normal_set(&mut rng, 2, 32);
        let lv = scoregan_loss(&gen, &z, &target).unwrap();
        assert!(lv.loss < 1e-18, "loss {}", lv.loss);
    }

    #[test]
    fn score_loss_identity_vs_shifted_target() {
        // G = I against N(mu, I): residual is the constant mu.
        let mu = Vector::new(alloc::vec![0.8, -1.2]).unwrap();
        let target = TargetDensity::Gaussian(
            GaussianSpec::new(mu.clone(), Matrix::identity(2)).unwrap(),
        );
        let gen = GeneratorModel::Linear(LinearGenerator::identity(2));
        let mut rng = SeededPrng::new(5);
        let z = normal_set(&mut rng, 2, 50);
        let lv = scoregan_loss(&gen, &z, &target).unwrap();
        let expect = mu.norm_sq();
        assert!((lv.loss - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn score_loss_invariant_to_batch_permutation() {
        let mut rng = SeededPrng::new(6);
        let gen = GeneratorModel::Linear(LinearGenerator::glorot(2, 2, &mut rng));
        let target = TargetDensity::Gaussian(GaussianSpec::standard(2));
        let z = normal_set(&mut rng, 2, 16);
        let perm: alloc::vec::Vec<usize> = (0..16).rev().collect();
        let z_rev = z.select(&perm);
        let a = scoregan_loss_value(&gen, &z, &target).unwrap();
        let b = scoregan_loss_value(&gen, &z_rev, &target).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn score_linear_analytic_grad_matches_fd() {
        let mut rng = SeededPrng::new(7);
        for _ in 0..5 {
            let gen = GeneratorModel::Linear(LinearGenerator::glorot(2, 2, &mut rng));
            if matches!(
                scoregan_loss_value(&gen, &normal_set(&mut rng, 2, 1), &TargetDensity::Gaussian(GaussianSpec::standard(2))),
                Err(_)
            ) {
                continue;
            }
            let mean = Vector::new(alloc::vec![2.0, -1.0]).unwrap();
            let target =
                TargetDensity::Gaussian(GaussianSpec::isotropic(mean, 0.75).unwrap());
            let z = normal_set(&mut rng, 2, 12);
            let lv = scoregan_loss(&gen, &z, &target).unwrap();
            let fd = scoregan_grad_fd(&gen, &z, &target).unwrap();
            for i in 0..lv.grad.len() {
                assert!(
                    (lv.grad[i] - fd[i]).abs() <= 1e-4 * fd[i].abs().max(1e-6),
                    "param {i}: analytic {} vs fd {}",
                    lv.grad[i],
                    fd[i]
                );
            }
        }
    }

    #[test]
    fn score_linear_analytic_grad_matches_fd_gmm_target() {
        let mut rng = SeededPrng::new(8);
        let comp_a = GaussianSpec::isotropic(Vector::new(alloc::vec![-2.0, 0.0]).unwrap(), 1.0)
            .unwrap();
        let comp_b =
            GaussianSpec::isotropic(Vector::new(alloc::vec![2.0, 1.0]).unwrap(), 0.5).unwrap();
        let target = TargetDensity::Gmm(
            crate::scores::GmmSpec::new(alloc::vec![0.3, 0.7], alloc::vec![comp_a, comp_b])
                .unwrap(),
        );
        let gen = GeneratorModel::Linear(LinearGenerator::glorot(2, 2, &mut rng));
        let z = normal_set(&mut rng, 2, 8);
        let lv = scoregan_loss(&gen, &z, &target).unwrap();
        let fd = scoregan_grad_fd(&gen, &z, &target).unwrap();
        for i in 0..lv.grad.len() {
            assert!(
                (lv.grad[i] - fd[i]).abs() <= 2e-4 * fd[i].abs().max(1e-5),
                "param {i}: analytic {} vs fd {}",
                lv.grad[i],
                fd[i]
            );
        }
    }

    #[test]
    fn score_loss_rejects_singular_jacobian() {
        let gen = GeneratorModel::Linear(
            LinearGenerator::new(
                Matrix::new(2, 2, alloc::vec![1.0, 2.0, 0.5, 1.0]).unwrap(),
                Vector::zeros(2),
            )
            .unwrap(),
        );
        let target = TargetDensity::Gaussian(GaussianSpec::standard(2));
        let z = ParticleSet::new(2, alloc::vec![0.3, 0.4]).unwrap();
        assert!(scoregan_loss(&gen, &z, &target).is_err());
    }
}
