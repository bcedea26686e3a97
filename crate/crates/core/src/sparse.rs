//! Minimal sparse matrix support: triplet assembly, CSR storage, matrix
//! products and transposes, and coordinate-format export.
//!
//! The assembly routines accumulate duplicate entries; `CsrMatrix::from_triplets`
//! sorts and compresses them. Column indices within each row are strictly
//! increasing, which makes all downstream algorithms (products, the LU
//! factorization in [`crate::lu`], the text export) deterministic.

use crate::scalar::Real;
use std::fmt::Write as _;

/// Triplet (COO) accumulator used during assembly.
#[derive(Clone, Debug)]
pub struct Triplets<T> {
    pub nrows: usize,
    pub ncols: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Real> Triplets<T> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Triplets { nrows, ncols, entries: Vec::new() }
    }

    pub fn push(&mut self, r: usize, c: usize, v: T) {
        debug_assert!(r < self.nrows && c < self.ncols);
        if v != T::zero() {
            self.entries.push((r, c, v));
        }
    }

    pub fn to_csr(&self) -> CsrMatrix<T> {
        CsrMatrix::from_triplets(self.nrows, self.ncols, &self.entries)
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, T)]) -> Self {
        let mut sorted: Vec<(usize, usize, T)> = entries.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(usize, usize, T)> = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx: merged.iter().map(|e| e.1).collect(),
            values: merged.iter().map(|e| e.2).collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![T::zero(); self.nrows];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut s = T::zero();
            for (c, v) in cols.iter().zip(vals) {
                s += *v * x[*c];
            }
            y[r] = s;
        }
        y
    }

    /// y = A^T x.
    pub fn matvec_transpose(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![T::zero(); self.ncols];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                y[*c] += *v * x[r];
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut entries = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                entries.push((*c, r, *v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, &entries)
    }

    /// Sparse product A * B.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut entries = Vec::new();
        let mut accum: Vec<T> = vec![T::zero(); other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (k, v) in cols.iter().zip(vals) {
                let (bcols, bvals) = other.row(*k);
                for (c, bv) in bcols.iter().zip(bvals) {
                    if accum[*c] == T::zero() {
                        touched.push(*c);
                    }
                    accum[*c] += *v * *bv;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                entries.push((r, c, accum[c]));
                accum[c] = T::zero();
            }
            touched.clear();
        }
        CsrMatrix::from_triplets(self.nrows, other.ncols, &entries)
    }

    /// Triple product S^T K R used to pull operators assembled on a field
    /// space back onto scheme unknowns.
    pub fn triple_product(s: &Self, k: &Self, r: &Self) -> Self {
        s.transpose().matmul(&k.matmul(r))
    }

    pub fn add_scaled(&self, other: &Self, alpha: T) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut entries = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                entries.push((r, *c, *v));
            }
            let (cols, vals) = other.row(r);
            for (c, v) in cols.iter().zip(vals) {
                entries.push((r, *c, *v * alpha));
            }
        }
        CsrMatrix::from_triplets(self.nrows, self.ncols, &entries)
    }

    /// x^T A y.
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| *a * *b).sum()
    }

    /// Dense copy for small oracle computations in tests.
    pub fn to_dense(&self) -> crate::smalldense::DMat<T> {
        let mut m = crate::smalldense::DMat::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                m[(r, *c)] = *v;
            }
        }
        m
    }

    /// Coordinate-format text export: a `nrows ncols nnz` header line, then
    /// one `row col value` line per stored entry (zero-based indices, row
    ///-major order).
    pub fn export_coordinate(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {} {}", self.nrows, self.ncols, self.nnz()).unwrap();
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(out, "{} {} {:.17e}", r, c, v).unwrap();
            }
        }
        out
    }
}

pub fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(a, b)| *a * *b).sum()
}

pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

pub fn norm2<T: Real>(x: &[T]) -> T {
    dot(x, x).sqrt()
}
