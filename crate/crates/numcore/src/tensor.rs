use crate::error::NumError;
use crate::real::Real;

/// Dense row-major n-dimensional array.
///
/// `requires_grad` marks leaves that participate in reverse-mode
/// differentiation when bound into a [`crate::graph::Graph`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F: Real> {
    shape: Vec<usize>,
    data: Vec<F>,
    requires_grad: bool,
}

impl<F: Real> Tensor<F> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<F>) -> Result<Self, NumError> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(NumError::InvalidShape {
                context: "Tensor::from_vec",
                detail: format!("zero-sized dimension in {shape:?}"),
            });
        }
        if numel != data.len() {
            return Err(NumError::shapes("Tensor::from_vec", numel, data.len()));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![F::zero(); numel],
            requires_grad: false,
        }
    }

    pub fn filled(shape: Vec<usize>, value: F) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
            requires_grad: false,
        }
    }

    pub fn scalar(value: F) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            requires_grad: false,
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> F) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: (0..numel).map(&mut f).collect(),
            requires_grad: false,
        }
    }

    pub fn with_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn set_requires_grad(&mut self, requires_grad: bool) {
        self.requires_grad = requires_grad;
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// Value of a `[1]`-shaped tensor.
    pub fn item(&self) -> F {
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            requires_grad: false,
        }
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self, NumError> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(NumError::shapes("Tensor::reshaped", numel, self.data.len()));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
            requires_grad: self.requires_grad,
        })
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn from_f64_slice(shape: Vec<usize>, values: &[f64]) -> Result<Self, NumError> {
        Self::from_vec(shape, values.iter().map(|&v| F::from_f64(v)).collect())
    }
}

/// Convenience for 2-D indexing in kernels: `idx2(row, col, n_cols)`.
#[inline(always)]
pub fn idx2(row: usize, col: usize, n_cols: usize) -> usize {
    row * n_cols + col
}

/// Convenience for 3-D indexing: `idx3(b, c, t, n_c, n_t)`.
#[inline(always)]
pub fn idx3(b: usize, c: usize, t: usize, n_c: usize, n_t: usize) -> usize {
    (b * n_c + c) * n_t + t
}
