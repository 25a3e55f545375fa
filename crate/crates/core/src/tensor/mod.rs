//! Single-precision tensor kernels for the EEGNet-variant forward pass.
//!
//! Everything operates on [`Tensor3`], a `(maps, rows, cols)` row-major
//! buffer. Accumulation is done in `f32` throughout and every kernel walks
//! its data in a fixed order, so identical inputs give identical output bits.

mod conv;
mod ops;

pub use conv::{conv2d, Padding};
pub use ops::{avg_pool_w, batchnorm_infer, dense, elu, softmax};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{layer}: shape mismatch, expected {expected}, found {found}")]
    ShapeMismatch {
        layer: String,
        expected: String,
        found: String,
    },
    #[error("tensor dims must all be >= 1, got {0:?}")]
    EmptyDim((usize, usize, usize)),
    #[error("tensor data length {len} does not match dims {dims:?}")]
    DataLength { dims: (usize, usize, usize), len: usize },
    #[error("pooling width {width} does not divide {cols} columns")]
    PoolRemainder { width: usize, cols: usize },
    #[error("softmax input contains NaN at index {0}")]
    NanInput(usize),
    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Feature maps stored as `(maps, rows, cols)` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    maps: usize,
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Tensor3 {
    pub fn new(maps: usize, rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if maps == 0 || rows == 0 || cols == 0 {
            return Err(TensorError::EmptyDim((maps, rows, cols)));
        }
        if data.len() != maps * rows * cols {
            return Err(TensorError::DataLength {
                dims: (maps, rows, cols),
                len: data.len(),
            });
        }
        Ok(Self { maps, rows, cols, data })
    }

    pub fn zeros(maps: usize, rows: usize, cols: usize) -> Result<Self> {
        Self::new(maps, rows, cols, vec![0.0; maps * rows * cols])
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.maps, self.rows, self.cols)
    }

    pub fn maps(&self) -> usize {
        self.maps
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn at(&self, map: usize, row: usize, col: usize) -> f32 {
        self.data[(map * self.rows + row) * self.cols + col]
    }

    /// Contiguous slice for one `(map, row)` line.
    #[inline]
    pub fn row(&self, map: usize, row: usize) -> &[f32] {
        let start = (map * self.rows + row) * self.cols;
        &self.data[start..start + self.cols]
    }

    #[inline]
    fn row_mut(&mut self, map: usize, row: usize) -> &mut [f32] {
        let start = (map * self.rows + row) * self.cols;
        &mut self.data[start..start + self.cols]
    }

    /// Index of the first non-finite element, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }
}

/// Convolution weights laid out `[kernels][input_maps / groups][kernel_rows][kernel_cols]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernelBank {
    /// Layer label used in error messages.
    pub name: String,
    pub kernels: usize,
    pub kernel_rows: usize,
    pub kernel_cols: usize,
    pub groups: usize,
    pub weights: Vec<f32>,
}

impl ConvKernelBank {
    pub fn new(
        name: impl Into<String>,
        kernels: usize,
        kernel_rows: usize,
        kernel_cols: usize,
        groups: usize,
        weights: Vec<f32>,
    ) -> Self {
        Self {
            name: name.into(),
            kernels,
            kernel_rows,
            kernel_cols,
            groups,
            weights,
        }
    }

    /// Number of input maps each kernel sees, given the bank's weight count.
    pub fn maps_per_group(&self) -> usize {
        let per_kernel = self.kernel_rows * self.kernel_cols;
        if self.kernels == 0 || per_kernel == 0 {
            return 0;
        }
        self.weights.len() / (self.kernels * per_kernel)
    }

    /// Shape as `[kernels, maps_per_group, kernel_rows, kernel_cols]`.
    pub fn shape(&self) -> [usize; 4] {
        [self.kernels, self.maps_per_group(), self.kernel_rows, self.kernel_cols]
    }

    #[inline]
    fn weight(&self, kernel: usize, map: usize, kr: usize, kc: usize, per_group: usize) -> f32 {
        self.weights[((kernel * per_group + map) * self.kernel_rows + kr) * self.kernel_cols + kc]
    }
}

/// Inference-time batch normalization parameters, one entry per map.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub name: String,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub epsilon: f32,
}

impl BatchNormParams {
    pub const DEFAULT_EPSILON: f32 = 1e-5;

    /// gamma = 1, beta = 0, mean = 0, var = 1.
    pub fn identity(name: impl Into<String>, maps: usize) -> Self {
        Self {
            name: name.into(),
            gamma: vec![1.0; maps],
            beta: vec![0.0; maps],
            running_mean: vec![0.0; maps],
            running_var: vec![1.0; maps],
            epsilon: Self::DEFAULT_EPSILON,
        }
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.gamma.len();
        for (label, v) in [
            ("beta", &self.beta),
            ("running_mean", &self.running_mean),
            ("running_var", &self.running_var),
        ] {
            if v.len() != n {
                return Err(TensorError::ShapeMismatch {
                    layer: format!("{}.{label}", self.name),
                    expected: format!("[{n}]"),
                    found: format!("[{}]", v.len()),
                });
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(TensorError::InvalidArgument(format!(
                "{}: epsilon must be > 0, got {}",
                self.name, self.epsilon
            )));
        }
        if let Some(i) = self.running_var.iter().position(|v| !(*v >= 0.0)) {
            return Err(TensorError::InvalidArgument(format!(
                "{}: running_var[{i}] = {} is negative",
                self.name, self.running_var[i]
            )));
        }
        Ok(())
    }
}
