//! Dense particle sets: `N` points of common dimension stored row-major.

use alloc::vec::Vec;
use core::fmt;

/// Errors raised by particle-set construction.
#[derive(Clone, Debug, PartialEq)]
pub enum ParticleError {
    Empty,
    ShapeMismatch { expected: usize, got: usize },
    NonFinite,
}

impl fmt::Display for ParticleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Empty => write!(f, "particle set must hold at least one point"),
            Self::ShapeMismatch { expected, got } => {
                write!(f, "particle data length {got} is not a multiple of dim {expected}")
            }
            Self::NonFinite => write!(f, "non-finite particle coordinate"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ParticleError {}

/// `N` points in `R^dim`, stored densely row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    data: Vec<f64>,
    dim: usize,
}

impl ParticleSet {
    /// Builds a set from row-major coordinates, validating shape and
    /// finiteness.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self, ParticleError> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            if data.is_empty() {
                return Err(ParticleError::Empty);
            }
            return Err(ParticleError::ShapeMismatch {
                expected: dim,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ParticleError::NonFinite);
        }
        Ok(Self { data, dim })
    }

    pub fn from_raw(dim: usize, data: Vec<f64>) -> Self {
        debug_assert!(dim > 0 && !data.is_empty() && data.len() % dim == 0);
        Self { data, dim }
    }

    /// Collects points produced by a closure (e.g. sampler draws).
    pub fn from_points<I>(dim: usize, points: I) -> Result<Self, ParticleError>
    where
        I: IntoIterator,
        I::Item: AsRef<[f64]>,
    {
        let mut data = Vec::new();
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(ParticleError::ShapeMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            data.extend_from_slice(p);
        }
        Self::new(dim, data)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Subset with the given row indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> ParticleSet {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.point(i));
        }
        ParticleSet::from_raw(self.dim, data)
    }

    pub fn iter_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
