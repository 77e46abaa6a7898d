//! The kernel discriminator field and the flow residual built from it.
//!
//! The field is the sample estimate of the convolution
//! `D(x) = scale * ((p_prev - p_data) * kernel)(x)`, with one center set
//! drawn from the data and one from the previous generator iterate.
//! Convolution estimates use means over centers rather than sums, folding
//! the `1/N` into the scale so values are batch-size invariant.

use core::fmt;

use crate::kernels::{sq_norm, KernelSpec};
use crate::linalg::Vector;
use crate::particles::ParticleSet;

/// Errors raised by field evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldError {
    DimensionMismatch { expected: usize, got: usize },
    /// Scale must be finite and strictly positive.
    InvalidScale,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Self::InvalidScale => write!(f, "field scale must be finite and > 0"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for FieldError {}

/// Kernel discriminator with two center sets.
#[derive(Clone, Debug)]
pub struct DiscriminatorField {
    data_centers: ParticleSet,
    gen_centers: ParticleSet,
    kernel: KernelSpec,
    scale: f64,
}

impl DiscriminatorField {
    pub fn new(
        data_centers: ParticleSet,
        gen_centers: ParticleSet,
        kernel: KernelSpec,
        scale: f64,
    ) -> Result<Self, FieldError> {
        if data_centers.dim() != gen_centers.dim() {
            return Err(FieldError::DimensionMismatch {
                expected: data_centers.dim(),
                got: gen_centers.dim(),
            });
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(FieldError::InvalidScale);
        }
        Ok(Self {
            data_centers,
            gen_centers,
            kernel,
            scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.data_centers.dim()
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), FieldError> {
        if x.len() != self.dim() {
            return Err(FieldError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `scale * [ mean_g kernel(x - g) - mean_d kernel(x - d) ]`.
    pub fn eval(&self, x: &[f64]) -> Result<f64, FieldError> {
        self.check_dim(x)?;
        let gen_mean = mean_kernel(&self.kernel, x, &self.gen_centers);
        let data_mean = mean_kernel(&self.kernel, x, &self.data_centers);
        Ok(self.scale * (gen_mean - data_mean))
    }

    /// `scale * [ mean_g grad kernel(x - g) - mean_d grad kernel(x - d) ]`.
    ///
    /// PHS terms at a coincident center are zeroed, matching the kernel's
    /// origin handling.
    pub fn grad(&self, x: &[f64]) -> Result<Vector, FieldError> {
        self.check_dim(x)?;
        let mut out = accumulate_grad(&self.kernel, x, &self.gen_centers, 1.0);
        let data = accumulate_grad(&self.kernel, x, &self.data_centers, 1.0);
        out = out.sub(&data);
        Ok(out.scale(self.scale))
    }
}

fn mean_kernel(kernel: &KernelSpec, x: &[f64], centers: &ParticleSet) -> f64 {
    let mut acc = 0.0;
    let mut diff = alloc::vec![0.0; x.len()];
    for c in centers.points() {
        for ((d, a), b) in diff.iter_mut().zip(x).zip(c) {
            *d = a - b;
        }
        acc += kernel.eval(&diff);
    }
    acc / centers.len() as f64
}

/// Mean of `sign * grad kernel(x - c)` over centers, accumulated through the
/// radial coefficient so no per-center vector is allocated.
pub(crate) fn accumulate_grad(
    kernel: &KernelSpec,
    x: &[f64],
    centers: &ParticleSet,
    sign: f64,
) -> Vector {
    let n = x.len();
    let mut out = Vector::zeros(n);
    let mut diff = alloc::vec![0.0; n];
    let weight = sign / centers.len() as f64;
    for c in centers.points() {
        for ((d, a), b) in diff.iter_mut().zip(x).zip(c) {
            *d = a - b;
        }
        let r2 = sq_norm(&diff);
        if let Some(coeff) = kernel.grad_coeff(r2) {
            let w = weight * coeff;
            for (o, d) in out.as_mut_slice().iter_mut().zip(&diff) {
                *o += w * d;
            }
        }
    }
    out
}

/// The push-pull flow residual at `x`:
/// `mean_d grad kernel(x - d) - mean_g grad kernel(x - g)`,
/// i.e. the sample estimate of `((p_data - p_prev) * grad kernel)(x)`.
/// Data centers pull, previous-generator centers push; the squared norm of
/// this vector is the per-sample generator loss.
pub fn flow_residual(
    kernel: &KernelSpec,
    x: &[f64],
    data: &ParticleSet,
    prev_gen: &ParticleSet,
) -> Result<Vector, FieldError> {
    if data.dim() != prev_gen.dim() || x.len() != data.dim() {
        return Err(FieldError::DimensionMismatch {
            expected: data.dim(),
            got: if data.dim() != prev_gen.dim() {
                prev_gen.dim()
            } else {
                x.len()
            },
        });
    }
    let pull = accumulate_grad(kernel, x, data, 1.0);
    let push = accumulate_grad(kernel, x, prev_gen, 1.0);
    Ok(pull.sub(&push))
}

/// Accumulates `H_residual(x) * v` where `H_residual` is the Jacobian of the
/// flow residual: `mean_d H(x - d) - mean_g H(x - g)`. Uses the radial form
/// `H = a I + b u u^T` per center, so cost stays linear in the dimension.
/// Singular PHS terms (coincident centers) are skipped, mirroring the zeroed
/// gradient terms.
pub(crate) fn residual_jacobian_apply(
    kernel: &KernelSpec,
    x: &[f64],
    data: &ParticleSet,
    prev_gen: &ParticleSet,
    v: &Vector,
) -> Vector {
    let n = x.len();
    let mut out = Vector::zeros(n);
    let mut diff = alloc::vec![0.0; n];
    for (centers, sign) in [(data, 1.0), (prev_gen, -1.0)] {
        let weight = sign / centers.len() as f64;
        for c in centers.points() {
            for ((d, a), b) in diff.iter_mut().zip(x).zip(c) {
                *d = a - b;
            }
            let r2 = sq_norm(&diff);
            if let Some((a, b)) = kernel.hess_coeffs(r2) {
                let dot_uv = crate::linalg::dot(&diff, v.as_slice());
                for i in 0..n {
                    out[i] += weight * (a * v[i] + b * dot_uv * diff[i]);
                }
            }
        }
    }
    out
}
