//! Dense real tensors stored row-major, and pairwise contraction.

use std::fmt;

use crate::error::{Error, Result};

/// An order-k real tensor. `data` is laid out row-major with respect to
/// `shape`: the last index varies fastest.
#[derive(Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for DenseTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DenseTensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

pub(crate) fn num_entries(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub(crate) fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Advances a row-major multi-index in place. Returns false after the last
/// index has been visited.
pub(crate) fn advance(index: &mut [usize], shape: &[usize]) -> bool {
    for axis in (0..shape.len()).rev() {
        index[axis] += 1;
        if index[axis] < shape[axis] {
            return true;
        }
        index[axis] = 0;
    }
    false
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected = num_entries(&shape);
        if shape.contains(&0) || data.len() != expected {
            return Err(Error::ShapeMismatch {
                len: data.len(),
                expected,
                shape,
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        assert!(shape.iter().all(|&e| e > 0), "extents must be positive");
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; num_entries(shape)],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "vector must be non-empty");
        Self {
            shape: vec![values.len()],
            data: values,
        }
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut out = Self::zeros(shape);
        let mut index = vec![0; shape.len()];
        for slot in out.data.iter_mut() {
            *slot = f(&index);
            advance(&mut index, shape);
        }
        out
    }

    pub fn identity(dim: usize) -> Self {
        delta_tensor(2, dim)
    }

    /// Standard basis vector with a one at `position` (0-based).
    pub fn basis(dim: usize, position: usize) -> Self {
        assert!(position < dim);
        let mut v = vec![0.0; dim];
        v[position] = 1.0;
        Self::vector(v)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
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

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &e)| {
            debug_assert!(i < e);
            acc * e + i
        })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    /// Entrywise `self + factor * other`.
    pub fn add_scaled(&self, other: &Self, factor: f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                shape: self.shape.clone(),
                len: other.data.len(),
                expected: self.data.len(),
            });
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + factor * b).collect(),
        })
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    /// Reorders axes so that output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        let order = self.order();
        if axes.len() != order {
            return Err(Error::IndexOutOfRange {
                index: axes.len(),
                order,
            });
        }
        let mut seen = vec![false; order];
        for &a in axes {
            if a >= order {
                return Err(Error::IndexOutOfRange { index: a, order });
            }
            if seen[a] {
                return Err(Error::RepeatedIndex(a));
            }
            seen[a] = true;
        }
        if axes.iter().enumerate().all(|(i, &a)| i == a) {
            return Ok(self.clone());
        }

        let in_strides = row_major_strides(&self.shape);
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();

        let mut data = Vec::with_capacity(self.data.len());
        let mut index = vec![0; order];
        let mut src = 0usize;
        loop {
            data.push(self.data[src]);
            // odometer step with incremental source offset
            let mut axis = order;
            loop {
                if axis == 0 {
                    return Ok(Self { shape: out_shape, data });
                }
                axis -= 1;
                index[axis] += 1;
                src += src_strides[axis];
                if index[axis] < out_shape[axis] {
                    break;
                }
                src -= src_strides[axis] * out_shape[axis];
                index[axis] = 0;
            }
        }
    }

    /// Tensor product; the indices of `self` come first.
    pub fn outer(&self, other: &Self) -> Self {
        let mut shape = self.shape.clone();
        shape.extend_from_slice(&other.shape);
        let mut data = Vec::with_capacity(self.data.len() * other.data.len());
        for &a in &self.data {
            data.extend(other.data.iter().map(|&b| a * b));
        }
        Self { shape, data }
    }
}

/// Sums over the paired indices of `left` and `right`.
///
/// The result carries the free indices of `left` followed by the free indices
/// of `right`, each group in its original relative order.
pub fn contract(left: &DenseTensor, right: &DenseTensor, pairs: &[(usize, usize)]) -> Result<DenseTensor> {
    let (lo, ro) = (left.order(), right.order());
    let mut used_l = vec![false; lo];
    let mut used_r = vec![false; ro];
    for &(l, r) in pairs {
        if l >= lo {
            return Err(Error::IndexOutOfRange { index: l, order: lo });
        }
        if r >= ro {
            return Err(Error::IndexOutOfRange { index: r, order: ro });
        }
        if used_l[l] {
            return Err(Error::RepeatedIndex(l));
        }
        if used_r[r] {
            return Err(Error::RepeatedIndex(r));
        }
        used_l[l] = true;
        used_r[r] = true;
        if left.shape[l] != right.shape[r] {
            return Err(Error::DimensionMismatch {
                left: l,
                right: r,
                left_extent: left.shape[l],
                right_extent: right.shape[r],
            });
        }
    }

    let free_l: Vec<usize> = (0..lo).filter(|&i| !used_l[i]).collect();
    let free_r: Vec<usize> = (0..ro).filter(|&i| !used_r[i]).collect();

    let mut perm_l = free_l.clone();
    perm_l.extend(pairs.iter().map(|p| p.0));
    let mut perm_r: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    perm_r.extend(free_r.iter().copied());

    let a = left.permute(&perm_l)?;
    let b = right.permute(&perm_r)?;

    let m: usize = free_l.iter().map(|&i| left.shape[i]).product();
    let n: usize = free_r.iter().map(|&i| right.shape[i]).product();
    let k: usize = pairs.iter().map(|p| left.shape[p.0]).product();

    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a.data[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }

    let mut shape: Vec<usize> = free_l.iter().map(|&i| left.shape[i]).collect();
    shape.extend(free_r.iter().map(|&i| right.shape[i]));
    Ok(DenseTensor { shape, data: out })
}

/// Entrywise `|actual - expected|` divided by the largest `|expected|`, so
/// entries that nearly cancel are judged on the tensor's own scale.
pub fn relative_deviations(actual: &DenseTensor, expected: &DenseTensor) -> Result<Vec<f64>> {
    if actual.shape() != expected.shape() {
        return Err(Error::ShapeMismatch {
            shape: expected.shape().to_vec(),
            len: actual.len(),
            expected: expected.len(),
        });
    }
    let scale = expected.max_abs().max(f64::MIN_POSITIVE);
    Ok(actual
        .data()
        .iter()
        .zip(expected.data())
        .map(|(a, b)| (a - b).abs() / scale)
        .collect())
}

/// Order-`order` tensor with ones where all indices agree and zeros elsewhere.
pub fn delta_tensor(order: usize, dim: usize) -> DenseTensor {
    assert!(order >= 1 && dim >= 1, "delta tensor needs order >= 1 and dim >= 1");
    let shape = vec![dim; order];
    let mut t = DenseTensor::zeros(&shape);
    let diag_step: usize = row_major_strides(&shape).iter().sum();
    for i in 0..dim {
        t.data[i * diag_step] = 1.0;
    }
    t
}

/// Matrix-vector product for a row-major order-2 tensor.
pub(crate) fn matvec(matrix: &DenseTensor, v: &[f64]) -> Vec<f64> {
    let (rows, cols) = (matrix.shape[0], matrix.shape[1]);
    debug_assert_eq!(cols, v.len());
    (0..rows)
        .map(|i| {
            matrix.data[i * cols..(i + 1) * cols]
                .iter()
                .zip(v)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

/// Column `col` of a row-major order-2 tensor.
pub(crate) fn column(matrix: &DenseTensor, col: usize) -> Vec<f64> {
    let cols = matrix.shape[1];
    (0..matrix.shape[0]).map(|i| matrix.data[i * cols + col]).collect()
}
