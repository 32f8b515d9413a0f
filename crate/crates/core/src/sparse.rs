//! Compressed sparse row matrices with deterministic triplet assembly.

use crate::scalar::Real;
use faer::sparse::{SparseColMat, Triplet};
use std::ops::Range;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

/// Unordered `(row, col, value)` entries; duplicates are summed in insertion order.
#[derive(Debug, Clone)]
pub struct TripletBuilder<T> {
    pub nrows: usize,
    pub ncols: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Real> TripletBuilder<T> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.nrows && j < self.ncols, "({i},{j}) outside {}x{}", self.nrows, self.ncols);
        self.entries.push((i, j, v));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn build(mut self) -> CsrMatrix<T> {
        self.entries.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<T> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in self.entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, values }
    }
}

impl<T: Real> CsrMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![T::one(); n])
    }

    pub fn from_diagonal(d: &[T]) -> Self {
        let mut t = TripletBuilder::new(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            t.push(i, i, v);
        }
        t.build()
    }

    pub fn from_dense(rows: &[Vec<T>]) -> Self {
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut t = TripletBuilder::new(rows.len(), ncols);
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if v != T::zero() {
                    t.push(i, j, v);
                }
            }
        }
        t.build()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols, "matvec dimension");
        (0..self.nrows).map(|i| self.row(i).fold(T::zero(), |acc, (j, v)| acc + v * x[j])).collect()
    }

    /// `Aᵀ x`
    pub fn tmatvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows, "transpose matvec dimension");
        let mut y = vec![T::zero(); self.ncols];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                y[j] += v * x[i];
            }
        }
        y
    }

    /// `yᵀ A x`
    pub fn bilinear(&self, y: &[T], x: &[T]) -> T {
        assert_eq!(y.len(), self.nrows, "bilinear row dimension");
        assert_eq!(x.len(), self.ncols, "bilinear column dimension");
        (0..self.nrows).fold(T::zero(), |acc, i| acc + y[i] * self.row(i).fold(T::zero(), |s, (j, v)| s + v * x[j]))
    }

    pub fn quad_form(&self, x: &[T]) -> T {
        self.bilinear(x, x)
    }

    pub fn transpose(&self) -> Self {
        let mut t = TripletBuilder::new(self.ncols, self.nrows);
        for (i, j, v) in self.triplets() {
            t.push(j, i, v);
        }
        t.build()
    }

    pub fn scale(&self, alpha: T) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= alpha);
        m
    }

    /// `self + alpha · other`
    pub fn add_scaled(&self, other: &Self, alpha: T) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols), "add dimension");
        let mut t = TripletBuilder::new(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            t.push(i, j, v);
        }
        for (i, j, v) in other.triplets() {
            t.push(i, j, alpha * v);
        }
        t.build()
    }

    /// Sum of `c_k · M_k` over equally sized matrices.
    pub fn linear_combination(terms: &[(T, &Self)]) -> Self {
        let (nr, nc) = (terms[0].1.nrows, terms[0].1.ncols);
        let mut t = TripletBuilder::new(nr, nc);
        for &(c, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nr, nc), "combination dimension");
            for (i, j, v) in m.triplets() {
                t.push(i, j, c * v);
            }
        }
        t.build()
    }

    pub fn symmetric_part(&self) -> Self {
        self.add_scaled(&self.transpose(), T::one()).scale(T::lit(0.5))
    }

    pub fn submatrix(&self, rows: Range<usize>, cols: Range<usize>) -> Self {
        let mut t = TripletBuilder::new(rows.len(), cols.len());
        for i in rows.clone() {
            for (j, v) in self.row(i) {
                if cols.contains(&j) {
                    t.push(i - rows.start, j - cols.start, v);
                }
            }
        }
        t.build()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Rows holding no nonzero entry.
    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.nrows).filter(|&i| self.row(i).all(|(_, v)| v == T::zero())).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            d[i][j] += v;
        }
        d
    }

    pub fn to_faer(&self) -> SparseColMat<usize, T> {
        let t: Vec<Triplet<usize, usize, T>> = self.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t).expect("valid sparse structure")
    }
}

/// Symmetric block assembly `[A Bᵀ; B -reg·I]` (the regularization only when positive).
pub fn kkt_matrix<T: Real>(a: &CsrMatrix<T>, b: &CsrMatrix<T>) -> CsrMatrix<T> {
    assert_eq!(a.nrows, a.ncols, "A must be square");
    assert_eq!(b.ncols, a.ncols, "B columns must match A");
    let (n, m) = (a.nrows, b.nrows);
    let mut t = TripletBuilder::new(n + m, n + m);
    for (i, j, v) in a.triplets() {
        t.push(i, j, v);
    }
    for (i, j, v) in b.triplets() {
        t.push(n + i, j, v);
        t.push(j, n + i, v);
    }
    t.build()
}
