//! Generators (linear maps and small leaky-ReLU perceptrons), their
//! per-sample Jacobians and parameter gradients, the push-forward score
//! formulas, and a plain Adam optimizer.
//!
//! Parameters are exposed as one flat vector per generator; the layout is
//! fixed (row-major weight matrices, then the bias, layer by layer) and
//! described by [`Generator::param_layout`] so checkpoints can name slices.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{LinAlgError, Matrix, Vector};
use crate::math;
use crate::rng::SeededPrng;

/// Default step for finite differences of the log-determinant in `z`.
pub const LOGDET_FD_STEP: f64 = 1e-6;

/// Step rule for finite differences over parameters: `1e-5 * (1 + |theta_i|)`.
pub fn param_fd_step(theta_i: f64) -> f64 {
    1e-5 * (1.0 + math::abs(theta_i))
}

/// Errors raised by generator evaluation and the score formulas.
#[derive(Clone, Debug, PartialEq)]
pub enum GeneratorError {
    DimensionMismatch { expected: usize, got: usize },
    /// Score formulas need `n_in == n_out` (square) or `n_in < n_out` (tall).
    UnsupportedShape { n_in: usize, n_out: usize },
    /// Jacobian singular (square case) or rank-deficient (tall case).
    SingularJacobian,
    /// Parameter vector has the wrong length.
    ParamShape { expected: usize, got: usize },
    LinAlg(LinAlgError),
}

impl fmt::Display for GeneratorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DimensionMismatch { expected, got } => {
                write!(f, "input dimension mismatch: expected {expected}, got {got}")
            }
            Self::UnsupportedShape { n_in, n_out } => {
                write!(f, "score formula unavailable for {n_in} -> {n_out} generator")
            }
            Self::SingularJacobian => write!(f, "generator Jacobian is singular"),
            Self::ParamShape { expected, got } => {
                write!(f, "parameter vector length {got}, expected {expected}")
            }
            Self::LinAlg(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GeneratorError {}

impl From<LinAlgError> for GeneratorError {
    fn from(e: LinAlgError) -> Self {
        Self::LinAlg(e)
    }
}

/// A named slice of the flattened parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSlice {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Common interface of the generators.
pub trait Generator {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    /// Deterministic forward map `G(z)`.
    fn forward(&self, z: &[f64]) -> Vector;

    /// Jacobian `dG/dz` with shape `n_out x n_in`.
    fn jacobian(&self, z: &[f64]) -> Matrix;

    /// Reverse-mode parameter gradient of `upstream^T G(z)`, flattened.
    fn vjp(&self, z: &[f64], upstream: &[f64]) -> Vector;

    /// Flattened parameters.
    fn params(&self) -> Vector;

    /// Overwrites the parameters from a flat vector.
    fn set_params(&mut self, p: &[f64]) -> Result<(), GeneratorError>;

    fn param_count(&self) -> usize;

    fn param_layout(&self) -> Vec<ParamSlice>;

    /// True when the Jacobian does not depend on `z`; lets the score
    /// formulas skip the log-determinant finite differences.
    fn jacobian_is_constant(&self) -> bool {
        false
    }
}

/// `x = A z + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGenerator {
    a: Matrix,
    b: Vector,
}

impl LinearGenerator {
    pub fn new(a: Matrix, b: Vector) -> Result<Self, GeneratorError> {
        if a.rows() != b.len() {
            return Err(GeneratorError::DimensionMismatch {
                expected: a.rows(),
                got: b.len(),
            });
        }
        Ok(Self { a, b })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            a: Matrix::identity(n),
            b: Vector::zeros(n),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(n_out: usize, n_in: usize, rng: &mut SeededPrng) -> Self {
        let bound = math::sqrt(6.0 / (n_in + n_out) as f64);
        Self {
            a: Matrix::from_fn(n_out, n_in, |_, _| rng.next_range(-bound, bound)),
            b: Vector::zeros(n_out),
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn offset(&self) -> &Vector {
        &self.b
    }
}

impl Generator for LinearGenerator {
    fn input_dim(&self) -> usize {
        self.a.cols()
    }

    fn output_dim(&self) -> usize {
        self.a.rows()
    }

    fn forward(&self, z: &[f64]) -> Vector {
        debug_assert_eq!(z.len(), self.input_dim());
        let mut out = self.b.clone();
        for i in 0..self.a.rows() {
            out[i] += crate::linalg::dot(self.a.row(i), z);
        }
        out
    }

    fn jacobian(&self, _z: &[f64]) -> Matrix {
        self.a.clone()
    }

    fn vjp(&self, z: &[f64], upstream: &[f64]) -> Vector {
        // d(u^T (Az + b))/dA = u z^T, d/db = u.
        let (rows, cols) = (self.a.rows(), self.a.cols());
        let mut grad = Vec::with_capacity(self.param_count());
        for i in 0..rows {
            for j in 0..cols {
                grad.push(upstream[i] * z[j]);
            }
        }
        grad.extend_from_slice(upstream);
        Vector::from_raw(grad)
    }

    fn params(&self) -> Vector {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(self.a.as_slice());
        out.extend_from_slice(self.b.as_slice());
        Vector::from_raw(out)
    }

    fn set_params(&mut self, p: &[f64]) -> Result<(), GeneratorError> {
        if p.len() != self.param_count() {
            return Err(GeneratorError::ParamShape {
                expected: self.param_count(),
                got: p.len(),
            });
        }
        let na = self.a.rows() * self.a.cols();
        self.a = Matrix::from_raw(self.a.rows(), self.a.cols(), p[..na].to_vec());
        self.b = Vector::from_raw(p[na..].to_vec());
        Ok(())
    }

    fn param_count(&self) -> usize {
        self.a.rows() * self.a.cols() + self.b.len()
    }

    fn param_layout(&self) -> Vec<ParamSlice> {
        let na = self.a.rows() * self.a.cols();
        alloc::vec![
            ParamSlice {
                name: String::from("A"),
                offset: 0,
                len: na,
            },
            ParamSlice {
                name: String::from("b"),
                offset: na,
                len: self.b.len(),
            },
        ]
    }

    fn jacobian_is_constant(&self) -> bool {
        true
    }
}

/// A small fully connected net with leaky-ReLU on every layer but the last.
///
/// Pre-activations landing exactly on the kink are treated as positive
/// (equivalent to nudging them by 1e-12), keeping derivatives defined.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGenerator {
    widths: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vector>,
    slope: f64,
}

impl MlpGenerator {
    /// Zero-initialized net with the given layer widths (input first).
    pub fn new(widths: Vec<usize>, slope: f64) -> Result<Self, GeneratorError> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(GeneratorError::UnsupportedShape {
                n_in: *widths.first().unwrap_or(&0),
                n_out: *widths.last().unwrap_or(&0),
            });
        }
        if !(slope > 0.0 && slope < 1.0) {
            return Err(GeneratorError::UnsupportedShape {
                n_in: widths[0],
                n_out: widths[widths.len() - 1],
            });
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..widths.len() - 1 {
            weights.push(Matrix::zeros(widths[l + 1], widths[l]));
            biases.push(Vector::zeros(widths[l + 1]));
        }
        Ok(Self {
            widths,
            weights,
            biases,
            slope,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(widths: Vec<usize>, slope: f64, rng: &mut SeededPrng) -> Result<Self, GeneratorError> {
        let mut net = Self::new(widths, slope)?;
        for w in &mut net.weights {
            let bound = math::sqrt(6.0 / (w.rows() + w.cols()) as f64);
            let (r, c) = (w.rows(), w.cols());
            *w = Matrix::from_fn(r, c, |_, _| rng.next_range(-bound, bound));
        }
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut Vector {
        &mut self.biases[layer]
    }

    #[inline]
    fn act_derivative(&self, pre: f64) -> f64 {
        if pre >= 0.0 {
            1.0
        } else {
            self.slope
        }
    }

    /// Forward pass keeping layer inputs and pre-activations for backprop.
    fn forward_cached(&self, z: &[f64]) -> (Vec<Vector>, Vec<Vector>) {
        let layers = self.weights.len();
        let mut inputs = Vec::with_capacity(layers);
        let mut pres = Vec::with_capacity(layers);
        let mut h = Vector::from_raw(z.to_vec());
        for l in 0..layers {
            inputs.push(h.clone());
            let mut pre = self.biases[l].clone();
            for i in 0..self.weights[l].rows() {
                pre[i] += crate::linalg::dot(self.weights[l].row(i), h.as_slice());
            }
            if l + 1 < layers {
                let mut act = pre.clone();
                for v in act.as_mut_slice() {
                    if *v < 0.0 {
                        *v *= self.slope;
                    }
                }
                pres.push(pre);
                h = act;
            } else {
                pres.push(pre.clone());
                h = pre;
            }
        }
        (inputs, pres)
    }
}

impl Generator for MlpGenerator {
    fn input_dim(&self) -> usize {
        self.widths[0]
    }

    fn output_dim(&self) -> usize {
        self.widths[self.widths.len() - 1]
    }

    fn forward(&self, z: &[f64]) -> Vector {
        debug_assert_eq!(z.len(), self.input_dim());
        let layers = self.weights.len();
        let mut h = Vector::from_raw(z.to_vec());
        for l in 0..layers {
            let mut pre = self.biases[l].clone();
            for i in 0..self.weights[l].rows() {
                pre[i] += crate::linalg::dot(self.weights[l].row(i), h.as_slice());
            }
            if l + 1 < layers {
                for v in pre.as_mut_slice() {
                    if *v < 0.0 {
                        *v *= self.slope;
                    }
                }
            }
            h = pre;
        }
        h
    }

    fn jacobian(&self, z: &[f64]) -> Matrix {
        let (_, pres) = self.forward_cached(z);
        // Running product J = W_l D_{l-1} ... D_0 W_0.
        let mut jac = self.weights[0].clone();
        for l in 1..self.weights.len() {
            let mut scaled = jac;
            for i in 0..scaled.rows() {
                let d = self.act_derivative(pres[l - 1][i]);
                if d != 1.0 {
                    for v in scaled.row_mut(i) {
                        *v *= d;
                    }
                }
            }
            jac = self.weights[l].matmul(&scaled);
        }
        jac
    }

    fn vjp(&self, z: &[f64], upstream: &[f64]) -> Vector {
        let (inputs, pres) = self.forward_cached(z);
        let layers = self.weights.len();
        let mut grads_w: Vec<Matrix> = Vec::with_capacity(layers);
        let mut grads_b: Vec<Vector> = Vec::with_capacity(layers);
        let mut delta = Vector::from_raw(upstream.to_vec());
        for l in (0..layers).rev() {
            // dW_l = delta h_l^T, db_l = delta.
            let h = &inputs[l];
            let gw = Matrix::from_fn(self.weights[l].rows(), self.weights[l].cols(), |i, j| {
                delta[i] * h[j]
            });
            grads_w.push(gw);
            grads_b.push(delta.clone());
            if l > 0 {
                let mut back = self.weights[l].matvec_transposed(&delta);
                for (v, pre) in back.as_mut_slice().iter_mut().zip(pres[l - 1].iter()) {
                    *v *= self.act_derivative(*pre);
                }
                delta = back;
            }
        }
        grads_w.reverse();
        grads_b.reverse();
        let mut flat = Vec::with_capacity(self.param_count());
        for (gw, gb) in grads_w.iter().zip(&grads_b) {
            flat.extend_from_slice(gw.as_slice());
            flat.extend_from_slice(gb.as_slice());
        }
        Vector::from_raw(flat)
    }

    fn params(&self) -> Vector {
        let mut flat = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            flat.extend_from_slice(w.as_slice());
            flat.extend_from_slice(b.as_slice());
        }
        Vector::from_raw(flat)
    }

    fn set_params(&mut self, p: &[f64]) -> Result<(), GeneratorError> {
        if p.len() != self.param_count() {
            return Err(GeneratorError::ParamShape {
                expected: self.param_count(),
                got: p.len(),
            });
        }
        let mut off = 0;
        for l in 0..self.weights.len() {
            let (r, c) = (self.weights[l].rows(), self.weights[l].cols());
            self.weights[l] = Matrix::from_raw(r, c, p[off..off + r * c].to_vec());
            off += r * c;
            self.biases[l] = Vector::from_raw(p[off..off + r].to_vec());
            off += r;
        }
        Ok(())
    }

    fn param_count(&self) -> usize {
        self.weights
            .iter()
            .map(|w| w.rows() * w.cols() + w.rows())
            .sum()
    }

    fn param_layout(&self) -> Vec<ParamSlice> {
        let mut out = Vec::new();
        let mut off = 0;
        for (l, w) in self.weights.iter().enumerate() {
            let wn = w.rows() * w.cols();
            out.push(ParamSlice {
                name: alloc::format!("W{l}"),
                offset: off,
                len: wn,
            });
            off += wn;
            out.push(ParamSlice {
                name: alloc::format!("b{l}"),
                offset: off,
                len: w.rows(),
            });
            off += w.rows();
        }
        out
    }
}

/// Config-dispatchable generator.
#[derive(Clone, Debug)]
pub enum GeneratorModel {
    Linear(LinearGenerator),
    Mlp(MlpGenerator),
}

macro_rules! delegate {
    ($self:ident, $g:ident, $body:expr) => {
        match $self {
            GeneratorModel::Linear($g) => $body,
            GeneratorModel::Mlp($g) => $body,
        }
    };
}

impl Generator for GeneratorModel {
    fn input_dim(&self) -> usize {
        delegate!(self, g, g.input_dim())
    }
    fn output_dim(&self) -> usize {
        delegate!(self, g, g.output_dim())
    }
    fn forward(&self, z: &[f64]) -> Vector {
        delegate!(self, g, g.forward(z))
    }
    fn jacobian(&self, z: &[f64]) -> Matrix {
        delegate!(self, g, g.jacobian(z))
    }
    fn vjp(&self, z: &[f64], upstream: &[f64]) -> Vector {
        delegate!(self, g, g.vjp(z, upstream))
    }
    fn params(&self) -> Vector {
        delegate!(self, g, g.params())
    }
    fn set_params(&mut self, p: &[f64]) -> Result<(), GeneratorError> {
        delegate!(self, g, g.set_params(p))
    }
    fn param_count(&self) -> usize {
        delegate!(self, g, g.param_count())
    }
    fn param_layout(&self) -> Vec<ParamSlice> {
        delegate!(self, g, g.param_layout())
    }
    fn jacobian_is_constant(&self) -> bool {
        delegate!(self, g, g.jacobian_is_constant())
    }
}

fn check_input<G: Generator + ?Sized>(gen: &G, z: &[f64]) -> Result<(), GeneratorError> {
    if z.len() != gen.input_dim() {
        return Err(GeneratorError::DimensionMismatch {
            expected: gen.input_dim(),
            got: z.len(),
        });
    }
    Ok(())
}

/// Pushes a whole noise batch through the generator.
pub fn forward_set<G: Generator + ?Sized>(
    gen: &G,
    z_batch: &crate::particles::ParticleSet,
) -> crate::particles::ParticleSet {
    let mut data = Vec::with_capacity(z_batch.len() * gen.output_dim());
    for z in z_batch.points() {
        data.extend_from_slice(gen.forward(z).as_slice());
    }
    crate::particles::ParticleSet::from_raw(gen.output_dim(), data)
}

/// Central finite difference of `z -> ln|det J(z)|` per coordinate.
///
/// Errors if the Jacobian is singular at any stencil point. For piecewise
/// linear nets the log-determinant is constant within an activation region,
/// so the true gradient is zero almost everywhere.
pub fn logdet_grad_fd<G: Generator + ?Sized>(
    gen: &G,
    z: &[f64],
    h: f64,
) -> Result<Vector, GeneratorError> {
    check_input(gen, z)?;
    let logdet = |p: &[f64]| -> Result<f64, GeneratorError> {
        let (ld, sign) = gen.jacobian(p).log_abs_det()?;
        if sign == 0 {
            return Err(GeneratorError::SingularJacobian);
        }
        Ok(ld)
    };
    let mut probe = z.to_vec();
    let mut out = Vector::zeros(z.len());
    for i in 0..z.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = logdet(&probe)?;
        probe[i] = orig - h;
        let fm = logdet(&probe)?;
        probe[i] = orig;
        out[i] = (fp - fm) / (2.0 * h);
    }
    Ok(out)
}

/// Central finite difference of `z -> ln det(J^T J)` for tall Jacobians.
fn gram_logdet_grad_fd<G: Generator + ?Sized>(
    gen: &G,
    z: &[f64],
    h: f64,
) -> Result<Vector, GeneratorError> {
    let logdet = |p: &[f64]| -> Result<f64, GeneratorError> {
        let j = gen.jacobian(p);
        let gram = j.transpose().matmul(&j).symmetrized();
        let (ld, sign) = gram.log_abs_det()?;
        if sign <= 0 {
            return Err(GeneratorError::SingularJacobian);
        }
        Ok(ld)
    };
    let mut probe = z.to_vec();
    let mut out = Vector::zeros(z.len());
    for i in 0..z.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = logdet(&probe)?;
        probe[i] = orig - h;
        let fm = logdet(&probe)?;
        probe[i] = orig;
        out[i] = (fp - fm) / (2.0 * h);
    }
    Ok(out)
}

/// Score of the push-forward density at `x = G(z)` for a square generator
/// with a standard normal prior: `-J^{-T} (grad_z ln|det J(z)| + z)`.
pub fn generator_score_square<G: Generator + ?Sized>(
    gen: &G,
    z: &[f64],
) -> Result<Vector, GeneratorError> {
    check_input(gen, z)?;
    if gen.input_dim() != gen.output_dim() {
        return Err(GeneratorError::UnsupportedShape {
            n_in: gen.input_dim(),
            n_out: gen.output_dim(),
        });
    }
    let n = gen.input_dim();
    let mut rhs = if gen.jacobian_is_constant() {
        Vector::zeros(n)
    } else {
        logdet_grad_fd(gen, z, LOGDET_FD_STEP)?
    };
    for i in 0..n {
        rhs[i] += z[i];
    }
    let jt = gen.jacobian(z).transpose();
    let y = jt.solve(&rhs).map_err(|e| match e {
        LinAlgError::Singular { .. } => GeneratorError::SingularJacobian,
        other => GeneratorError::LinAlg(other),
    })?;
    Ok(y.scale(-1.0))
}

/// Approximate push-forward score for a tall generator (`n_in <= n_out`):
/// `J^{+T} (-z - 1/2 grad_z ln det(J^T J))`.
pub fn generator_score_rect<G: Generator + ?Sized>(
    gen: &G,
    z: &[f64],
) -> Result<Vector, GeneratorError> {
    check_input(gen, z)?;
    if gen.input_dim() > gen.output_dim() {
        return Err(GeneratorError::UnsupportedShape {
            n_in: gen.input_dim(),
            n_out: gen.output_dim(),
        });
    }
    let j = gen.jacobian(z);
    let gram = j.transpose().matmul(&j).symmetrized();
    let (_, sign) = gram.log_abs_det()?;
    if sign <= 0 {
        return Err(GeneratorError::SingularJacobian);
    }
    let mut inner = if gen.jacobian_is_constant() {
        Vector::zeros(z.len())
    } else {
        gram_logdet_grad_fd(gen, z, LOGDET_FD_STEP)?.scale(0.5)
    };
    for i in 0..z.len() {
        inner[i] += z[i];
    }
    // J^{+T} = (J^+)^T has shape n_out x n_in.
    let pinv_t = j.pseudo_inverse().transpose();
    Ok(pinv_t.matvec(&inner).scale(-1.0))
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }
}

/// Adam accumulator state (zero-initialized moments, step counter).
#[derive(Clone, Debug)]
pub struct AdamState {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(dim: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: alloc::vec![0.0; dim],
            v: alloc::vec![0.0; dim],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update, in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), GeneratorError> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(GeneratorError::ParamShape {
                expected: self.m.len(),
                got: params.len().max(grad.len()),
            });
        }
        self.step += 1;
        let c = &self.config;
        let bc1 = 1.0 - math::powi(c.beta1, self.step as i32);
        let bc2 = 1.0 - math::powi(c.beta2, self.step as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= c.learning_rate * m_hat / (math::sqrt(v_hat) + c.epsilon);
        }
        Ok(())
    }
}
