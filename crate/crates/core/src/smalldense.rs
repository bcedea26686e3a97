//! Minimal dense matrix routines for the small local solves that element
//! construction needs (6x6 Morley transforms, 12x12 companion DOF systems,
//! null spaces of reference constraint matrices).

use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Clone, Debug)]
pub struct DMat<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<T>,
}

impl<T: Real> DMat<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        DMat { nrows, ncols, data: vec![T::zero(); nrows * ncols] }
    }
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }
    pub fn matmul(&self, o: &DMat<T>) -> DMat<T> {
        assert_eq!(self.ncols, o.nrows);
        let mut out = DMat::zeros(self.nrows, o.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..o.ncols {
                    out[(i, j)] += a * o[(k, j)];
                }
            }
        }
        out
    }

    /// Solve `self * X = B` in place via LU with partial pivoting; `self` and
    /// `b` are consumed. Panics on singular input (local element matrices
    /// are unisolvent by construction).
    pub fn solve(mut self, mut b: DMat<T>) -> DMat<T> {
        let n = self.nrows;
        assert_eq!(n, self.ncols);
        assert_eq!(n, b.nrows);
        for k in 0..n {
            let mut piv = k;
            let mut best = self[(k, k)].abs();
            for i in k + 1..n {
                if self[(i, k)].abs() > best {
                    best = self[(i, k)].abs();
                    piv = i;
                }
            }
            assert!(best > T::zero(), "singular local matrix at pivot {k}");
            if piv != k {
                for j in 0..n {
                    self.data.swap(k * n + j, piv * n + j);
                }
                for j in 0..b.ncols {
                    b.data.swap(k * b.ncols + j, piv * b.ncols + j);
                }
            }
            let d = self[(k, k)];
            for i in k + 1..n {
                let f = self[(i, k)] / d;
                if f == T::zero() {
                    continue;
                }
                for j in k..n {
                    let v = self[(k, j)];
                    self[(i, j)] -= f * v;
                }
                for j in 0..b.ncols {
                    let v = b[(k, j)];
                    b[(i, j)] -= f * v;
                }
            }
        }
        for k in (0..n).rev() {
            for j in 0..b.ncols {
                let mut s = b[(k, j)];
                for i in k + 1..n {
                    s -= self[(k, i)] * b[(i, j)];
                }
                b[(k, j)] = s / self[(k, k)];
            }
        }
        b
    }

    pub fn inverse(self) -> DMat<T> {
        let n = self.nrows;
        self.solve(DMat::identity(n))
    }

    /// Orthonormalize the columns in place (modified Gram-Schmidt); the
    /// columns must be linearly independent.
    pub fn orthonormalize_cols(mut self) -> DMat<T> {
        for j in 0..self.ncols {
            for k in 0..j {
                let mut dot = T::zero();
                for i in 0..self.nrows {
                    dot += self[(i, j)] * self[(i, k)];
                }
                for i in 0..self.nrows {
                    let sub = dot * self[(i, k)];
                    self[(i, j)] -= sub;
                }
            }
            let mut norm = T::zero();
            for i in 0..self.nrows {
                norm += self[(i, j)] * self[(i, j)];
            }
            let norm = norm.sqrt();
            assert!(norm > T::zero(), "columns are linearly dependent");
            for i in 0..self.nrows {
                self[(i, j)] /= norm;
            }
        }
        self
    }

    /// Orthonormal-ish basis of the null space of `self`, via Gaussian
    /// elimination with partial pivoting and a relative rank tolerance.
    /// Returns a matrix whose columns span the kernel.
    pub fn kernel(mut self, tol: T) -> DMat<T> {
        let (m, n) = (self.nrows, self.ncols);
        let scale = self
            .data
            .iter()
            .fold(T::zero(), |a, &b| a.max(b.abs()))
            .max(T::one());
        let mut pivot_col = Vec::new();
        let mut row = 0usize;
        for col in 0..n {
            if row >= m {
                break;
            }
            let mut piv = row;
            let mut best = self[(row, col)].abs();
            for i in row + 1..m {
                if self[(i, col)].abs() > best {
                    best = self[(i, col)].abs();
                    piv = i;
                }
            }
            if best <= tol * scale {
                continue;
            }
            if piv != row {
                for j in 0..n {
                    self.data.swap(row * n + j, piv * n + j);
                }
            }
            let d = self[(row, col)];
            for i in 0..m {
                if i == row {
                    continue;
                }
                let f = self[(i, col)] / d;
                if f == T::zero() {
                    continue;
                }
                for j in col..n {
                    let v = self[(row, j)];
                    self[(i, j)] -= f * v;
                }
            }
            pivot_col.push((row, col));
            row += 1;
        }
        let free: Vec<usize> = (0..n)
            .filter(|c| !pivot_col.iter().any(|&(_, pc)| pc == *c))
            .collect();
        let mut ker = DMat::zeros(n, free.len());
        for (j, &fc) in free.iter().enumerate() {
            ker[(fc, j)] = T::one();
            for &(pr, pc) in &pivot_col {
                ker[(pc, j)] = -self[(pr, fc)] / self[(pr, pc)];
            }
        }
        ker
    }
}

impl<T: Real> std::ops::Index<(usize, usize)> for DMat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.ncols + j]
    }
}
impl<T: Real> std::ops::IndexMut<(usize, usize)> for DMat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.ncols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_roundtrip() {
        let mut a = DMat::<f64>::zeros(3, 3);
        let vals = [[4.0, 1.0, 0.5], [1.0, 3.0, -1.0], [0.5, -1.0, 5.0]];
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = vals[i][j];
            }
        }
        let inv = a.clone().inverse();
        let id = a.matmul(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn kernel_of_rank_deficient() {
        // Rows: [1 1 0], [2 2 0] -> rank 1, kernel dim 2.
        let mut a = DMat::<f64>::zeros(2, 3);
        a[(0, 0)] = 1.0;
        a[(0, 1)] = 1.0;
        a[(1, 0)] = 2.0;
        a[(1, 1)] = 2.0;
        let k = a.clone().kernel(1e-12);
        assert_eq!(k.ncols, 2);
        // Check A * k = 0.
        for j in 0..2 {
            for i in 0..2 {
                let mut s = 0.0;
                for c in 0..3 {
                    s += a[(i, c)] * k[(c, j)];
                }
                assert!(s.abs() < 1e-13);
            }
        }
    }
}
