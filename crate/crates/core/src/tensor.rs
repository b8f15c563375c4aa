//! Dense tensors and the multilinear primitives the estimators are built from.
//!
//! Layout: the first index varies fastest, so entry `(i_1, ..., i_K)` lives at
//! `i_1 + d_1 * (i_2 + d_2 * (i_3 + ...))`. For `K = 2` this is the column-major
//! storage of the matrix, and `unfold(x, 0)` is a plain reshape.
//!
//! Mode indices are zero-based throughout the API.
//!
//! The mode-k unfolding `mat_k(X)` is a `d_k x d_{-k}` matrix whose column index
//! runs over the remaining modes in cyclic order `k+1, ..., K-1, 0, ..., k-1`,
//! with the first of these varying fastest. For an order-3 tensor this gives
//!
//! ```text
//! mat_0(A)[i, j + d_1 k] = mat_1(A)[j, k + d_2 i] = mat_2(A)[k, i + d_0 j] = A[i, j, k]
//! ```

use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest tensor order accepted by the constructors.
pub const MAX_ORDER: usize = 8;

/// An order-K real array with an explicit dimension vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(Error::Shape("tensor order must be at least 1".into()));
    }
    if dims.len() > MAX_ORDER {
        return Err(Error::Shape(format!(
            "tensor order {} exceeds the supported maximum {MAX_ORDER}",
            dims.len()
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::Shape(format!("zero-length mode in dims {dims:?}")));
    }
    Ok(dims.iter().product())
}

/// Splits the dims around mode `k` into (product of earlier modes, d_k, product of later modes).
fn split_at_mode(dims: &[usize], k: usize) -> (usize, usize, usize) {
    let left = dims[..k].iter().product();
    let right = dims[k + 1..].iter().product();
    (left, dims[k], right)
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_dims(&dims)?;
        if data.len() != len {
            return Err(Error::Shape(format!(
                "data length {} does not match dims {dims:?} (expected {len})",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let len = check_dims(&dims)?;
        Ok(Self {
            dims,
            data: vec![0.0; len],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index, in storage order.
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = check_dims(&dims)?;
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..len {
            data.push(f(&idx));
            for (i, d) in idx.iter_mut().zip(&dims) {
                *i += 1;
                if *i < *d {
                    break;
                }
                *i = 0;
            }
        }
        Ok(Self { dims, data })
    }

    /// An order-2 tensor holding the entries of `m`.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            dims: vec![m.nrows(), m.ncols()],
            data: m.as_slice().to_vec(),
        }
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut lin = 0;
        let mut stride = 1;
        for (i, d) in idx.iter().zip(&self.dims) {
            debug_assert!(i < d);
            lin += i * stride;
            stride *= d;
        }
        lin
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let lin = self.linear_index(idx);
        self.data[lin] = value;
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode: k,
                order: self.order(),
            });
        }
        Ok(())
    }

    /// Mode-k unfolding `mat_k(X)`, a `d_k x d_{-k}` matrix.
    pub fn unfold(&self, k: usize) -> Result<DMatrix<f64>> {
        self.check_mode(k)?;
        let (left, dk, right) = split_at_mode(&self.dims, k);
        let mut m = DMatrix::zeros(dk, left * right);
        unfold_into(&self.data, left, dk, right, &mut m, 0);
        Ok(m)
    }

    /// Mode-k product `X x_k U` with `U` of size `d'_k x d_k`.
    pub fn mode_product(&self, u: &DMatrix<f64>, k: usize) -> Result<Self> {
        self.check_mode(k)?;
        if u.ncols() != self.dims[k] {
            return Err(Error::DimensionMismatch(format!(
                "mode-{k} product needs a matrix with {} columns, got {}x{}",
                self.dims[k],
                u.nrows(),
                u.ncols()
            )));
        }
        let product = u * self.unfold(k)?;
        let mut dims = self.dims.clone();
        dims[k] = u.nrows();
        refold(&product, k, &dims)
    }

    /// Applies `X x_k M_k` for every `(k, M_k)` pair, in the given order.
    pub fn multi_mode_product<'a>(
        &self,
        factors: impl IntoIterator<Item = (usize, &'a DMatrix<f64>)>,
    ) -> Result<Self> {
        let mut out = self.clone();
        for (k, m) in factors {
            out = out.mode_product(m, k)?;
        }
        Ok(out)
    }

    /// Tensor (outer) product; the result has order `K_a + K_b`.
    pub fn outer_product(&self, other: &DenseTensor) -> Result<Self> {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        check_dims(&dims)?;
        let mut data = Vec::with_capacity(self.len() * other.len());
        for &b in &other.data {
            data.extend(self.data.iter().map(|&a| a * b));
        }
        Ok(Self { dims, data })
    }

    /// Hilbert-Schmidt (Frobenius) norm.
    pub fn hs_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &DenseTensor) -> f64 {
        debug_assert_eq!(self.dims, other.dims);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    fn zip_with(&self, other: &DenseTensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(Self {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &DenseTensor) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }
}

/// Writes the mode-k unfolding of a flat tensor into `out`, starting at column `col0`.
fn unfold_into(
    data: &[f64],
    left: usize,
    dk: usize,
    right: usize,
    out: &mut DMatrix<f64>,
    col0: usize,
) {
    for r in 0..right {
        for i in 0..dk {
            let base = left * (i + dk * r);
            for l in 0..left {
                out[(i, col0 + r + right * l)] = data[base + l];
            }
        }
    }
}

/// Inverse of [`DenseTensor::unfold`].
pub fn refold(m: &DMatrix<f64>, k: usize, dims: &[usize]) -> Result<DenseTensor> {
    let len = check_dims(dims)?;
    if k >= dims.len() {
        return Err(Error::ModeOutOfRange {
            mode: k,
            order: dims.len(),
        });
    }
    let (left, dk, right) = split_at_mode(dims, k);
    if m.nrows() != dk || m.ncols() != left * right {
        return Err(Error::DimensionMismatch(format!(
            "a {}x{} matrix cannot be refolded along mode {k} into {dims:?}",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut data = vec![0.0; len];
    for r in 0..right {
        for i in 0..dk {
            let base = left * (i + dk * r);
            for l in 0..left {
                data[base + l] = m[(i, r + right * l)];
            }
        }
    }
    Ok(DenseTensor {
        dims: dims.to_vec(),
        data,
    })
}

/// A time-ordered sequence of same-shape tensors `X_1, ..., X_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSeries {
    shape: Vec<usize>,
    items: Vec<DenseTensor>,
}

impl TensorSeries {
    pub fn new(items: Vec<DenseTensor>) -> Result<Self> {
        if items.len() < 2 {
            return Err(Error::Shape(format!(
                "a tensor series needs at least 2 time points, got {}",
                items.len()
            )));
        }
        let shape = items[0].dims().to_vec();
        if let Some(t) = items.iter().position(|x| x.dims() != shape.as_slice()) {
            return Err(Error::Shape(format!(
                "item {t} has dims {:?}, expected {shape:?}",
                items[t].dims()
            )));
        }
        Ok(Self { shape, items })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    /// Number of time points `T`.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[DenseTensor] {
        &self.items
    }

    pub fn get(&self, t: usize) -> &DenseTensor {
        &self.items[t]
    }

    pub fn into_items(self) -> Vec<DenseTensor> {
        self.items
    }

    /// Product of all mode dimensions.
    pub fn item_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub(crate) fn check_mode(&self, k: usize) -> Result<()> {
        if k >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode: k,
                order: self.order(),
            });
        }
        Ok(())
    }

    /// Applies `f` to every item, keeping the time order.
    pub fn try_map(&self, f: impl FnMut(&DenseTensor) -> Result<DenseTensor>) -> Result<Self> {
        Self::new(self.items.iter().map(f).collect::<Result<Vec<_>>>()?)
    }

    /// `d x T` matrix whose column `t` is the flattened `X_t`.
    pub fn vec_matrix(&self) -> DMatrix<f64> {
        let d = self.item_len();
        let mut m = DMatrix::zeros(d, self.len());
        for (t, x) in self.items.iter().enumerate() {
            m.column_mut(t).copy_from_slice(x.data());
        }
        m
    }

    /// Horizontal concatenation `[mat_k(X_t) for t in range]`, a `d_k x (|range| d_{-k})` matrix.
    pub fn unfold_stack(&self, k: usize, range: Range<usize>) -> Result<DMatrix<f64>> {
        self.check_mode(k)?;
        if range.end > self.len() || range.start > range.end {
            return Err(Error::Shape(format!(
                "time range {range:?} outside 0..{}",
                self.len()
            )));
        }
        let (left, dk, right) = split_at_mode(&self.shape, k);
        let width = left * right;
        let mut m = DMatrix::zeros(dk, width * range.len());
        for (j, t) in range.enumerate() {
            unfold_into(self.items[t].data(), left, dk, right, &mut m, j * width);
        }
        Ok(m)
    }

    /// Same as [`Self::unfold_stack`] but for an arbitrary `d x n` matrix of flattened tensors.
    pub(crate) fn unfold_columns(shape: &[usize], k: usize, cols: &DMatrix<f64>) -> DMatrix<f64> {
        let (left, dk, right) = split_at_mode(shape, k);
        let width = left * right;
        let mut m = DMatrix::zeros(dk, width * cols.ncols());
        for j in 0..cols.ncols() {
            unfold_into(cols.column(j).as_slice(), left, dk, right, &mut m, j * width);
        }
        m
    }
}
