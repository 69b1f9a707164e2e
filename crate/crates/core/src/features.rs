//! Layer inputs. Bag-of-words node features are mostly zeros, so the first
//! layer can read them from a row-compressed matrix; hidden layers always
//! see dense activations.

use std::borrow::Cow;

use rand::Rng;

use crate::error::{input_err, Result};
use crate::tensor::{dot, DenseMatrix};

/// Inputs at or below this fraction of nonzeros are stored sparse.
pub const SPARSE_DENSITY: f64 = 0.1;

/// What a layer needs from its input matrix.
pub trait Features {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `self · rhs`.
    fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix>;
    /// `selfᵀ · rhs`.
    fn matmul_tn(&self, rhs: &DenseMatrix) -> Result<DenseMatrix>;
    /// `row(i) · v`.
    fn row_dot(&self, i: usize, v: &[f64]) -> f64;
    /// `out += alpha · row(i)`.
    fn row_axpy(&self, i: usize, alpha: f64, out: &mut [f64]);
}

impl Features for DenseMatrix {
    fn rows(&self) -> usize {
        DenseMatrix::rows(self)
    }

    fn cols(&self) -> usize {
        DenseMatrix::cols(self)
    }

    fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        DenseMatrix::matmul(self, rhs)
    }

    fn matmul_tn(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        DenseMatrix::matmul_tn(self, rhs)
    }

    fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        dot(self.row(i), v)
    }

    fn row_axpy(&self, i: usize, alpha: f64, out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(self.row(i)) {
            *o += alpha * x;
        }
    }
}

/// Compressed sparse rows with explicit values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut row_ptr = Vec::with_capacity(m.rows() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(values.len());
        }
        Self {
            rows: m.rows(),
            cols: m.cols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row_entries(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `[self ∥ rhs]`, keeping only the nonzeros of `rhs`.
    pub fn hcat_dense(&self, rhs: &DenseMatrix) -> Result<SparseMatrix> {
        if self.rows != rhs.rows() {
            return input_err(format!(
                "hcat: row counts {} and {} differ",
                self.rows,
                rhs.rows()
            ));
        }
        let mut row_ptr = Vec::with_capacity(self.rows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz() + self.rows);
        let mut values = Vec::with_capacity(self.nnz() + self.rows);
        row_ptr.push(0);
        for i in 0..self.rows {
            for (j, v) in self.row_entries(i) {
                col_idx.push(j);
                values.push(v);
            }
            for (j, &v) in rhs.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(self.cols + j);
                    values.push(v);
                }
            }
            row_ptr.push(values.len());
        }
        Ok(SparseMatrix {
            rows: self.rows,
            cols: self.cols + rhs.cols(),
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Same pattern with every stored value multiplied by `mask`.
    pub fn scale_values(&self, mask: &[f64]) -> SparseMatrix {
        let mut out = self.clone();
        for (v, m) in out.values.iter_mut().zip(mask) {
            *v *= m;
        }
        out
    }

    /// `d ⊙ m` where `m` holds `mask` at the stored positions and 1 elsewhere.
    pub fn scale_dense_at_pattern(&self, d: &DenseMatrix, mask: &[f64]) -> DenseMatrix {
        let mut out = d.clone();
        for i in 0..self.rows {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            for (&j, &m) in self.col_idx[r.clone()].iter().zip(&mask[r]) {
                out[(i, j)] *= m;
            }
        }
        out
    }
}

impl Features for SparseMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows() {
            return input_err(format!(
                "matmul: ({}, {}) x {:?} inner dimensions disagree",
                self.rows,
                self.cols,
                rhs.shape()
            ));
        }
        let w = rhs.cols();
        let mut out = DenseMatrix::zeros(self.rows, w);
        for i in 0..self.rows {
            let dst = out.row_mut(i);
            for (k, a) in self.row_entries(i) {
                for (o, b) in dst.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    fn matmul_tn(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != rhs.rows() {
            return input_err(format!(
                "matmul_tn: ({}, {})ᵀ x {:?} inner dimensions disagree",
                self.rows,
                self.cols,
                rhs.shape()
            ));
        }
        let mut out = DenseMatrix::zeros(self.cols, rhs.cols());
        for i in 0..self.rows {
            let src = rhs.row(i);
            for (k, a) in self.row_entries(i) {
                for (o, b) in out.row_mut(k).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        self.row_entries(i).map(|(j, x)| x * v[j]).sum()
    }

    fn row_axpy(&self, i: usize, alpha: f64, out: &mut [f64]) {
        for (j, x) in self.row_entries(i) {
            out[j] += alpha * x;
        }
    }
}

/// A model input, borrowed or owned, in either storage.
#[derive(Debug, Clone)]
pub enum NodeFeatures<'a> {
    Dense(Cow<'a, DenseMatrix>),
    Sparse(Cow<'a, SparseMatrix>),
}

impl NodeFeatures<'static> {
    /// Sparse storage when at most [`SPARSE_DENSITY`] of the entries are
    /// nonzero.
    pub fn auto(x: DenseMatrix) -> Self {
        let total = (x.rows() * x.cols()).max(1);
        let nnz = x.as_slice().iter().filter(|v| **v != 0.0).count();
        if (nnz as f64) <= SPARSE_DENSITY * total as f64 {
            NodeFeatures::Sparse(Cow::Owned(SparseMatrix::from_dense(&x)))
        } else {
            NodeFeatures::Dense(Cow::Owned(x))
        }
    }
}

impl<'a> NodeFeatures<'a> {
    pub fn as_features(&self) -> &dyn Features {
        match self {
            NodeFeatures::Dense(d) => d.as_ref(),
            NodeFeatures::Sparse(s) => s.as_ref(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        let f = self.as_features();
        (f.rows(), f.cols())
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, NodeFeatures::Sparse(_))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            NodeFeatures::Dense(d) => d.as_ref().clone(),
            NodeFeatures::Sparse(s) => s.to_dense(),
        }
    }

    pub fn to_dense_owned(self) -> DenseMatrix {
        match self {
            NodeFeatures::Dense(d) => d.into_owned(),
            NodeFeatures::Sparse(s) => s.to_dense(),
        }
    }

    /// `[self ∥ extra]` in the storage of `self`.
    pub fn augment(&self, extra: &DenseMatrix) -> Result<NodeFeatures<'static>> {
        Ok(match self {
            NodeFeatures::Dense(d) => NodeFeatures::Dense(Cow::Owned(d.hcat(extra)?)),
            NodeFeatures::Sparse(s) => NodeFeatures::Sparse(Cow::Owned(s.hcat_dense(extra)?)),
        })
    }

    /// A borrowed view.
    pub fn view(&self) -> NodeFeatures<'_> {
        match self {
            NodeFeatures::Dense(d) => NodeFeatures::Dense(Cow::Borrowed(d.as_ref())),
            NodeFeatures::Sparse(s) => NodeFeatures::Sparse(Cow::Borrowed(s.as_ref())),
        }
    }

    /// Inverted dropout. Dense inputs get a full mask; sparse inputs only
    /// drop stored entries, so their mask has one value per nonzero.
    pub fn dropout<R: Rng + ?Sized>(
        &self,
        rate: f64,
        rng: &mut R,
    ) -> Result<(NodeFeatures<'static>, DropMask)> {
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let mut draw = || {
            if rng.random::<f64>() < keep {
                scale
            } else {
                0.0
            }
        };
        Ok(match self {
            NodeFeatures::Dense(d) => {
                let m = DenseMatrix::from_fn(d.rows(), d.cols(), |_, _| draw());
                (
                    NodeFeatures::Dense(Cow::Owned(d.hadamard(&m)?)),
                    DropMask::Dense(m),
                )
            }
            NodeFeatures::Sparse(s) => {
                let m: Vec<f64> = (0..s.nnz()).map(|_| draw()).collect();
                (
                    NodeFeatures::Sparse(Cow::Owned(s.scale_values(&m))),
                    DropMask::Sparse(m),
                )
            }
        })
    }
}

impl<'a> From<&'a DenseMatrix> for NodeFeatures<'a> {
    fn from(x: &'a DenseMatrix) -> Self {
        NodeFeatures::Dense(Cow::Borrowed(x))
    }
}

impl<'a> From<&'a NodeFeatures<'_>> for NodeFeatures<'a> {
    fn from(x: &'a NodeFeatures<'_>) -> Self {
        x.view()
    }
}

/// Dropout mask kept for the backward pass.
#[derive(Debug, Clone)]
pub enum DropMask {
    Dense(DenseMatrix),
    /// One factor per stored entry of a sparse input. Entries outside the
    /// pattern are never dropped, so their gradient passes through as is.
    Sparse(Vec<f64>),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::seeded_rng;

    fn sample() -> DenseMatrix {
        DenseMatrix::from_rows(&[
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![1.5, 0.0, -1.0],
        ])
        .unwrap()
    }

    #[test]
    fn sparse_products_match_dense() {
        let x = sample();
        let s = SparseMatrix::from_dense(&x);
        assert_eq!(s.nnz(), 3);
        assert_eq!(s.to_dense(), x);
        let w = DenseMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64 - 1.5);
        assert_eq!(Features::matmul(&s, &w).unwrap(), x.matmul(&w).unwrap());
        let d = DenseMatrix::from_fn(3, 2, |i, j| (i + 3 * j) as f64 * 0.5);
        assert_eq!(
            Features::matmul_tn(&s, &d).unwrap(),
            x.matmul_tn(&d).unwrap()
        );
        let v = [0.5, -1.0, 2.0];
        for i in 0..3 {
            assert_eq!(s.row_dot(i, &v), Features::row_dot(&x, i, &v));
        }
    }

    #[test]
    fn augment_keeps_storage() {
        let x = sample();
        let extra =
            DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let sparse = NodeFeatures::Sparse(Cow::Owned(SparseMatrix::from_dense(&x)));
        let a = sparse.augment(&extra).unwrap();
        assert!(a.is_sparse());
        assert_eq!(a.to_dense(), x.hcat(&extra).unwrap());
        assert!(!NodeFeatures::auto(DenseMatrix::filled(2, 2, 1.0)).is_sparse());
        let mut bow = DenseMatrix::zeros(4, 10);
        bow[(1, 3)] = 1.0;
        bow[(2, 7)] = 1.0;
        assert!(NodeFeatures::auto(bow).is_sparse());
    }

    #[test]
    fn sparse_dropout_touches_only_stored_entries() {
        let x = sample();
        let s = NodeFeatures::Sparse(Cow::Owned(SparseMatrix::from_dense(&x)));
        let (dropped, mask) = s.dropout(0.5, &mut seeded_rng(0, 0)).unwrap();
        let DropMask::Sparse(m) = mask else {
            panic!("sparse input gives a sparse mask")
        };
        assert_eq!(m.len(), 3);
        let d = dropped.to_dense();
        for i in 0..3 {
            for j in 0..3 {
                if x[(i, j)] == 0.0 {
                    assert_eq!(d[(i, j)], 0.0);
                } else {
                    assert!(d[(i, j)] == 0.0 || d[(i, j)] == 2.0 * x[(i, j)]);
                }
            }
        }
    }
}
