//! Weight tensors and the 2-D crossbar view.
//!
//! Convolution weights live as 4-D tensors `(filters, channels, height,
//! width)`; dense weights as 2-D `(outputs, inputs)`. For compression and
//! crossbar mapping both are viewed as a single 2-D matrix in which **each
//! column is one filter** (or one output neuron) and each row is one filter
//! position `(c, h, w)` (or one input feature). The reshape is bijective, so
//! tensor → matrix → tensor is lossless.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f32` matrix.
///
/// The workhorse container for weights, im2col patches, and activations.
/// Dot products accumulate in `f64` to keep kernel results reproducible and
/// oracle comparisons tight.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    /// All-zero matrix.
    #[must_use]
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from row-major data. Errors if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Number of rows.
    #[must_use]
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns.
    #[must_use]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Element at `(r, c)`.
    #[inline]
    #[must_use]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    /// Set element at `(r, c)`.
    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    /// Row-major backing slice.
    #[must_use]
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Mutable row-major backing slice.
    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// One row as a slice.
    #[must_use]
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// L2 norm of column `c`, accumulated in `f64`.
    #[must_use]
    pub fn col_l2(&self, c: usize) -> f64 {
        let mut s = 0.0f64;
        for r in 0..self.rows {
            let v = f64::from(self.get(r, c));
            s += v * v;
        }
        s.sqrt()
    }

    /// L2 norm of row `r`, accumulated in `f64`.
    #[must_use]
    pub fn row_l2(&self, r: usize) -> f64 {
        let mut s = 0.0f64;
        for &v in self.row(r) {
            let v = f64::from(v);
            s += v * v;
        }
        s.sqrt()
    }

    /// Squared Frobenius distance to `other`, accumulated in `f64`.
    pub fn frobenius_dist_sq(&self, other: &Matrix) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut s = 0.0f64;
        for (a, b) in self.data.iter().zip(&other.data) {
            let d = f64::from(a - b);
            s += d * d;
        }
        Ok(s)
    }

    /// Largest absolute value in the matrix (0.0 for an empty matrix).
    #[must_use]
    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, &v| m.max(v.abs()))
    }

    /// Count of nonzero entries.
    #[must_use]
    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    /// `self * other` with `f64` accumulation: `(self.rows x other.cols)`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "matmul: {} cols vs {} rows",
                self.cols, other.rows
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = 0.0f64;
                for k in 0..self.cols {
                    acc += f64::from(self.get(i, k)) * f64::from(other.get(k, j));
                }
                out.set(i, j, acc as f32);
            }
        }
        Ok(out)
    }

    /// `self * other^T` with `f64` accumulation: `(self.rows x other.rows)`.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "matmul_nt: {} cols vs {} cols",
                self.cols, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                let mut acc = 0.0f64;
                for k in 0..self.cols {
                    acc += f64::from(self.get(i, k)) * f64::from(other.get(j, k));
                }
                out.set(i, j, acc as f32);
            }
        }
        Ok(out)
    }

    /// `self^T * other` with `f64` accumulation: `(self.cols x other.cols)`.
    ///
    /// With `self` as the weight view (rows = input features, cols = units)
    /// and `other` as a patch matrix (rows = input features, cols =
    /// positions), this computes every unit's response at every position.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "t_matmul: {} rows vs {} rows",
                self.rows, other.rows
            )));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for j in 0..self.cols {
            for p in 0..other.cols {
                let mut acc = 0.0f64;
                for k in 0..self.rows {
                    acc += f64::from(self.get(k, j)) * f64::from(other.get(k, p));
                }
                out.set(j, p, acc as f32);
            }
        }
        Ok(out)
    }
}

/// Logical shape of a weight tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightShape {
    /// Convolution: `(filters, channels, kernel height, kernel width)`.
    Conv {
        filters: usize,
        channels: usize,
        height: usize,
        width: usize,
    },
    /// Fully connected: `(outputs, inputs)`.
    Dense { outputs: usize, inputs: usize },
}

impl WeightShape {
    /// Rows of the 2-D crossbar view: `C*H*W` for conv, `inputs` for dense.
    #[must_use]
    pub fn view_rows(&self) -> usize {
        match *self {
            WeightShape::Conv {
                channels,
                height,
                width,
                ..
            } => channels * height * width,
            WeightShape::Dense { inputs, .. } => inputs,
        }
    }

    /// Columns of the 2-D crossbar view: `filters` for conv, `outputs` for
    /// dense. One column drives one output unit.
    #[must_use]
    pub fn view_cols(&self) -> usize {
        match *self {
            WeightShape::Conv { filters, .. } => filters,
            WeightShape::Dense { outputs, .. } => outputs,
        }
    }

    /// Total element count.
    #[must_use]
    pub fn len(&self) -> usize {
        self.view_rows() * self.view_cols()
    }

    /// True when the tensor holds no elements.
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dimensions in natural storage order.
    #[must_use]
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            WeightShape::Conv {
                filters,
                channels,
                height,
                width,
            } => vec![filters, channels, height, width],
            WeightShape::Dense { outputs, inputs } => vec![outputs, inputs],
        }
    }
}

/// A weight tensor in natural storage order (filter-major for conv,
/// output-major for dense).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    /// Logical shape.
    pub shape: WeightShape,
    /// Values, `shape.len()` of them, in natural order.
    pub data: Vec<f32>,
}

impl WeightTensor {
    /// Zero tensor of the given shape.
    #[must_use]
    pub fn zeros(shape: WeightShape) -> Self {
        WeightTensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    /// Build from data in natural order.
    pub fn new(shape: WeightShape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "tensor {:?} needs {} values, got {}",
                shape,
                shape.len(),
                data.len()
            )));
        }
        Ok(WeightTensor { shape, data })
    }

    /// Reshape to the 2-D crossbar view.
    ///
    /// Row index `k` enumerates filter positions `(c, h, w)` with `w`
    /// fastest; column index `j` enumerates filters. For dense weights the
    /// view is simply the transpose: rows = inputs, columns = outputs.
    #[must_use]
    pub fn to_view(&self) -> Matrix {
        let rows = self.shape.view_rows();
        let cols = self.shape.view_cols();
        let mut m = Matrix::zeros(rows, cols);
        match self.shape {
            WeightShape::Conv { filters, .. } => {
                // natural order is (f, c, h, w) with w fastest; per filter the
                // flattened (c, h, w) index is exactly the view row.
                for f in 0..filters {
                    for k in 0..rows {
                        m.set(k, f, self.data[f * rows + k]);
                    }
                }
            }
            WeightShape::Dense { outputs, inputs } => {
                for o in 0..outputs {
                    for i in 0..inputs {
                        m.set(i, o, self.data[o * inputs + i]);
                    }
                }
            }
        }
        m
    }

    /// Inverse of [`WeightTensor::to_view`].
    pub fn from_view(shape: WeightShape, view: &Matrix) -> Result<Self> {
        if view.rows() != shape.view_rows() || view.cols() != shape.view_cols() {
            return Err(Error::ShapeMismatch(format!(
                "view {}x{} does not match shape {:?} ({}x{})",
                view.rows(),
                view.cols(),
                shape,
                shape.view_rows(),
                shape.view_cols()
            )));
        }
        let mut t = WeightTensor::zeros(shape);
        match shape {
            WeightShape::Conv { filters, .. } => {
                let rows = shape.view_rows();
                for f in 0..filters {
                    for k in 0..rows {
                        t.data[f * rows + k] = view.get(k, f);
                    }
                }
            }
            WeightShape::Dense { outputs, inputs } => {
                for o in 0..outputs {
                    for i in 0..inputs {
                        t.data[o * inputs + i] = view.get(i, o);
                    }
                }
            }
        }
        Ok(t)
    }
}
