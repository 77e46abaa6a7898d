//! Radial kernels and their gradient/Hessian fields.
//!
//! Four families are supported: the Gaussian RBF, a mixture of Gaussians over
//! several scales, the inverse multiquadric, and polyharmonic splines (plain
//! `||x||^k` when `k < 0` or the ambient dimension is odd, `||x||^k ln||x||`
//! otherwise).
//!
//! Two gradient conventions exist. `Exact` differentiates the kernel closed
//! forms and is the default; finite-difference checks hold against it.
//! `PaperTable` reproduces the prefactors conventionally printed alongside
//! these kernels in the GAN literature (RBFG with `1/sigma^2` instead of
//! `2/sigma^2`, IMQ with an extra `1/2`, PHS with `k - 2` in place of `k`);
//! the two differ by constants that a field scale or learning rate absorbs,
//! except for low-order PHS where the sign also flips. Hessians follow the
//! selected convention so that field Jacobians stay consistent.

use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{Matrix, Vector};
use crate::math;

/// Radius below which the PHS kernels are treated as sitting on their origin
/// singularity: evaluation regularizes `||x||` to `sqrt(||x||^2 + EPS^2)`,
/// gradients return zero with a flag, Hessians are an error.
pub const PHS_ORIGIN_EPS: f64 = 1e-12;

/// Errors raised by kernel construction and evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelError {
    /// A shape parameter that must be strictly positive was not.
    NonPositiveShape,
    /// The mixture-of-Gaussians scale list was empty.
    EmptyScaleList,
    /// A PHS Hessian was requested at the origin singularity.
    SingularAtOrigin,
}

impl fmt::Display for KernelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonPositiveShape => write!(f, "kernel shape parameter must be > 0"),
            Self::EmptyScaleList => write!(f, "mixture kernel needs at least one scale"),
            Self::SingularAtOrigin => write!(f, "PHS kernel is singular at the origin"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for KernelError {}

/// Which prefactor convention gradients and Hessians follow.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientConvention {
    /// Exact differentiation of the kernel (default).
    Exact,
    /// The prefactors as printed in the literature table.
    PaperTable,
}

#[derive(Clone, Debug, PartialEq)]
enum KernelVariant {
    Rbfg { sigma: f64 },
    Mog { sigmas: Vec<f64> },
    Imq { c: f64 },
    Phs { k: i32, ambient_dim: usize, log_form: bool },
}

/// A radial kernel with its shape parameters and gradient convention.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    variant: KernelVariant,
    convention: GradientConvention,
}

/// Default polyharmonic exponent `k = 2m - n` for spline order `m` in
/// ambient dimension `n`.
pub fn phs_default_exponent(m: u32, n: u32) -> i64 {
    2 * i64::from(m) - i64::from(n)
}

impl KernelSpec {
    /// Gaussian RBF `exp(-||x||^2 / sigma^2)`.
    pub fn rbfg(sigma: f64) -> Result<Self, KernelError> {
        if !(sigma > 0.0) {
            return Err(KernelError::NonPositiveShape);
        }
        Ok(Self {
            variant: KernelVariant::Rbfg { sigma },
            convention: GradientConvention::Exact,
        })
    }

    /// Unnormalized sum of Gaussian RBFs over the given scales.
    pub fn mog(sigmas: Vec<f64>) -> Result<Self, KernelError> {
        if sigmas.is_empty() {
            return Err(KernelError::EmptyScaleList);
        }
        if sigmas.iter().any(|s| !(*s > 0.0)) {
            return Err(KernelError::NonPositiveShape);
        }
        Ok(Self {
            variant: KernelVariant::Mog { sigmas },
            convention: GradientConvention::Exact,
        })
    }

    /// Mixture of Gaussians over the standard ablation scales {0.5, 1, 2, 4, 8}.
    pub fn mog_default() -> Self {
        Self::mog(alloc::vec![0.5, 1.0, 2.0, 4.0, 8.0]).expect("static scales")
    }

    /// Inverse multiquadric `(||x||^2 + c)^{-1/2}`.
    pub fn imq(c: f64) -> Result<Self, KernelError> {
        if !(c > 0.0) {
            return Err(KernelError::NonPositiveShape);
        }
        Ok(Self {
            variant: KernelVariant::Imq { c },
            convention: GradientConvention::Exact,
        })
    }

    /// Polyharmonic spline of exponent `k` in ambient dimension `n`. The log
    /// form is selected exactly when `k >= 0` and `n` is even.
    pub fn phs(k: i32, ambient_dim: usize) -> Result<Self, KernelError> {
        if ambient_dim == 0 {
            return Err(KernelError::NonPositiveShape);
        }
        let log_form = k >= 0 && ambient_dim % 2 == 0;
        Ok(Self {
            variant: KernelVariant::Phs { k, ambient_dim, log_form },
            convention: GradientConvention::Exact,
        })
    }

    /// Switches the gradient/Hessian prefactor convention.
    pub fn with_convention(mut self, convention: GradientConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn convention(&self) -> GradientConvention {
        self.convention
    }

    /// True for the variants that are positive definite as statistical
    /// kernels (RBFG, MoG, IMQ); PHS is not usable in that role.
    pub fn is_positive_definite(&self) -> bool {
        !matches!(self.variant, KernelVariant::Phs { .. })
    }

    /// True when the kernel has an origin singularity in its derivatives.
    pub fn is_phs(&self) -> bool {
        matches!(self.variant, KernelVariant::Phs { .. })
    }

    /// Kernel value at `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2 = sq_norm(x);
        self.eval_r2(r2)
    }

    pub(crate) fn eval_r2(&self, r2: f64) -> f64 {
        match &self.variant {
            KernelVariant::Rbfg { sigma } => math::exp(-r2 / (sigma * sigma)),
            KernelVariant::Mog { sigmas } => sigmas
                .iter()
                .map(|s| math::exp(-r2 / (s * s)))
                .sum(),
            KernelVariant::Imq { c } => 1.0 / math::sqrt(r2 + c),
            KernelVariant::Phs { k, log_form, .. } => {
                // Regularize the radius only inside the EPS ball.
                let r = if r2 < PHS_ORIGIN_EPS * PHS_ORIGIN_EPS {
                    math::sqrt(r2 + PHS_ORIGIN_EPS * PHS_ORIGIN_EPS)
                } else {
                    math::sqrt(r2)
                };
                let base = math::powi(r, *k);
                if *log_form {
                    base * math::ln(r)
                } else {
                    base
                }
            }
        }
    }

    /// Gradient of the kernel at `x` under the selected convention. At a PHS
    /// origin singularity the zero vector is returned; use
    /// [`KernelSpec::grad_flagged`] when the caller needs to know.
    pub fn grad(&self, x: &[f64]) -> Vector {
        self.grad_flagged(x).0
    }

    /// Gradient plus a flag marking the PHS origin singularity.
    pub fn grad_flagged(&self, x: &[f64]) -> (Vector, bool) {
        let r2 = sq_norm(x);
        if let KernelVariant::Mog { sigmas } = &self.variant {
            // Accumulated per component so the result is bit-identical to the
            // sum of the component RBFG gradients.
            let mut g = Vector::zeros(x.len());
            for s in sigmas {
                let c = rbfg_grad_coeff(*s, r2, self.convention);
                g.axpy(c, &Vector::from_raw(x.to_vec()));
            }
            return (g, false);
        }
        match self.grad_coeff(r2) {
            Some(c) => (Vector::from_raw(x.iter().map(|v| c * v).collect()), false),
            None => (Vector::zeros(x.len()), true),
        }
    }

    /// Hessian of the kernel (Jacobian of the gradient field under the
    /// selected convention). Symmetric by construction.
    pub fn hessian(&self, x: &[f64]) -> Result<Matrix, KernelError> {
        let r2 = sq_norm(x);
        let (a, b) = self.hess_coeffs(r2).ok_or(KernelError::SingularAtOrigin)?;
        let n = x.len();
        let mut h = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut v = b * x[i] * x[j];
                if i == j {
                    v += a;
                }
                h.set(i, j, v);
                h.set(j, i, v);
            }
        }
        Ok(h)
    }

    /// Central finite difference of [`KernelSpec::eval`] per coordinate.
    pub fn grad_fd(&self, x: &[f64], h: f64) -> Vector {
        let mut probe = x.to_vec();
        Vector::from_fn(x.len(), |i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let fp = self.eval(&probe);
            probe[i] = orig - h;
            let fm = self.eval(&probe);
            probe[i] = orig;
            (fp - fm) / (2.0 * h)
        })
    }

    /// Radial gradient coefficient: `grad = coeff * x`. `None` marks the PHS
    /// origin singularity.
    pub(crate) fn grad_coeff(&self, r2: f64) -> Option<f64> {
        match &self.variant {
            KernelVariant::Rbfg { sigma } => Some(rbfg_grad_coeff(*sigma, r2, self.convention)),
            KernelVariant::Mog { sigmas } => Some(
                sigmas
                    .iter()
                    .map(|s| rbfg_grad_coeff(*s, r2, self.convention))
                    .sum(),
            ),
            KernelVariant::Imq { c } => {
                let t = r2 + c;
                let base = -1.0 / (t * math::sqrt(t));
                Some(match self.convention {
                    GradientConvention::Exact => base,
                    GradientConvention::PaperTable => 0.5 * base,
                })
            }
            KernelVariant::Phs { k, log_form, .. } => {
                if r2 < PHS_ORIGIN_EPS * PHS_ORIGIN_EPS {
                    return None;
                }
                let r = math::sqrt(r2);
                let k = *k;
                let rk2 = math::powi(r, k - 2);
                Some(match (self.convention, log_form) {
                    (GradientConvention::Exact, false) => f64::from(k) * rk2,
                    (GradientConvention::PaperTable, false) => f64::from(k - 2) * rk2,
                    (GradientConvention::Exact, true) => {
                        rk2 * (f64::from(k) * math::ln(r) + 1.0)
                    }
                    (GradientConvention::PaperTable, true) => {
                        rk2 * (f64::from(k - 2) * math::ln(r) + 1.0)
                    }
                })
            }
        }
    }

    /// Radial Hessian coefficients: `H = a I + b x x^T`. `None` marks the PHS
    /// origin singularity.
    pub(crate) fn hess_coeffs(&self, r2: f64) -> Option<(f64, f64)> {
        match &self.variant {
            KernelVariant::Rbfg { sigma } => Some(rbfg_hess_coeffs(*sigma, r2, self.convention)),
            KernelVariant::Mog { sigmas } => {
                let mut a = 0.0;
                let mut b = 0.0;
                for s in sigmas {
                    let (ca, cb) = rbfg_hess_coeffs(*s, r2, self.convention);
                    a += ca;
                    b += cb;
                }
                Some((a, b))
            }
            KernelVariant::Imq { c } => {
                let t = r2 + c;
                let p32 = 1.0 / (t * math::sqrt(t));
                let p52 = p32 / t;
                Some(match self.convention {
                    GradientConvention::Exact => (-p32, 3.0 * p52),
                    GradientConvention::PaperTable => (-0.5 * p32, 1.5 * p52),
                })
            }
            KernelVariant::Phs { k, log_form, .. } => {
                if r2 < PHS_ORIGIN_EPS * PHS_ORIGIN_EPS {
                    return None;
                }
                let r = math::sqrt(r2);
                let k = *k;
                let rk2 = math::powi(r, k - 2);
                let rk4 = math::powi(r, k - 4);
                Some(match (self.convention, log_form) {
                    (GradientConvention::Exact, false) => {
                        (f64::from(k) * rk2, f64::from(k) * f64::from(k - 2) * rk4)
                    }
                    (GradientConvention::PaperTable, false) => (
                        f64::from(k - 2) * rk2,
                        f64::from(k - 2) * f64::from(k - 2) * rk4,
                    ),
                    (GradientConvention::Exact, true) => {
                        let l = math::ln(r);
                        let g = f64::from(k) * l + 1.0;
                        (rk2 * g, rk4 * (f64::from(k - 2) * g + f64::from(k)))
                    }
                    (GradientConvention::PaperTable, true) => {
                        let l = math::ln(r);
                        let g = f64::from(k - 2) * l + 1.0;
                        (rk2 * g, f64::from(k - 2) * rk4 * (f64::from(k - 2) * l + 2.0))
                    }
                })
            }
        }
    }
}

fn rbfg_grad_coeff(sigma: f64, r2: f64, convention: GradientConvention) -> f64 {
    let inv_s2 = 1.0 / (sigma * sigma);
    let e = math::exp(-r2 * inv_s2);
    match convention {
        GradientConvention::Exact => -2.0 * inv_s2 * e,
        GradientConvention::PaperTable => -inv_s2 * e,
    }
}

fn rbfg_hess_coeffs(sigma: f64, r2: f64, convention: GradientConvention) -> (f64, f64) {
    let inv_s2 = 1.0 / (sigma * sigma);
    let e = math::exp(-r2 * inv_s2);
    match convention {
        GradientConvention::Exact => (-2.0 * inv_s2 * e, 4.0 * inv_s2 * inv_s2 * e),
        GradientConvention::PaperTable => (-inv_s2 * e, 2.0 * inv_s2 * inv_s2 * e),
    }
}

pub(crate) fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}
