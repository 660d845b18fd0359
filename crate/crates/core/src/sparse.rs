//! Compressed sparse row matrices built from triplets, plus a direct solver.
//!
//! Duplicate triplets are summed in insertion order after a stable sort, so
//! assembled values do not depend on thread scheduling.

use crate::error::{FpsiError, Result};
use faer::prelude::*;
use faer::sparse::SparseColMat;

/// Coordinate-format accumulator.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.entries.push((i, j, v));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn extend(&mut self, other: &Triplets) {
        self.entries.extend_from_slice(&other.entries);
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let mut idx: Vec<usize> = (0..self.entries.len()).collect();
        idx.sort_by_key(|&k| (self.entries[k].0, self.entries[k].1));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(idx.len());
        let mut values: Vec<f64> = Vec::with_capacity(idx.len());
        let mut last: Option<(usize, usize)> = None;
        for &k in &idx {
            let (i, j, v) = self.entries[k];
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.nrows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, indptr, indices, values }
    }
}

/// Row-compressed sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `y^T A x`.
    pub fn bilinear(&self, y: &[f64], x: &[f64]) -> f64 {
        let ax = self.matvec(x);
        ax.iter().zip(y).map(|(a, b)| a * b).sum()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Triplets::with_capacity(self.ncols, self.nrows, self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                t.push(j, i, v);
            }
        }
        t.to_csr()
    }

    /// Largest |A_ij - A_ji| relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - t.get(i, j)).abs());
            }
            for (j, v) in t.row(i) {
                worst = worst.max((v - self.get(i, j)).abs());
            }
        }
        worst / scale
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    /// Restrict to the given rows and columns (in the given order).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut colmap = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            colmap[c] = k;
        }
        let mut t = Triplets::new(rows.len(), cols.len());
        for (k, &r) in rows.iter().enumerate() {
            for (j, v) in self.row(r) {
                if colmap[j] != usize::MAX {
                    t.push(k, colmap[j], v);
                }
            }
        }
        t.to_csr()
    }

    pub fn factor(&self) -> Result<LuFactor> {
        LuFactor::new(self)
    }
}

/// Sparse LU factorization of a square matrix.
pub struct LuFactor {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl LuFactor {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(FpsiError::Solver(format!("matrix is {}x{}", a.nrows, a.ncols)));
        }
        faer::set_global_parallelism(faer::Parallelism::None);
        let mut trip = Vec::with_capacity(a.nnz());
        for i in 0..a.nrows {
            for (j, v) in a.row(i) {
                trip.push((i, j, v));
            }
        }
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows, a.ncols, &trip)
            .map_err(|e| FpsiError::Solver(format!("{e:?}")))?;
        let lu = m.sp_lu().map_err(|e| FpsiError::Solver(format!("{e:?}")))?;
        Ok(Self { n: a.nrows, lu })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.n);
        let rhs = faer::Col::<f64>::from_fn(self.n, |i| b[i]);
        let x = self.lu.solve(&rhs);
        let out: Vec<f64> = (0..self.n).map(|i| x[i]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(FpsiError::Solver("non-finite solution (singular matrix)".into()));
        }
        Ok(out)
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(1, 1, 2.0);
        t.push(0, 0, 0.5);
        t.push(0, 1, -1.0);
        let a = t.to_csr();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 0), 1.5);
        assert_eq!(a.matvec(&[1.0, 1.0]), vec![0.5, 2.0]);
    }

    #[test]
    fn lu_solves_small_system() {
        let mut t = Triplets::new(3, 3);
        for (i, j, v) in [(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, 2.0), (2, 0, 1.0)] {
            t.push(i, j, v);
        }
        let a = t.to_csr();
        let x = a.factor().unwrap().solve(&[1.0, 2.0, 3.0]).unwrap();
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((ri - bi).abs() < 1e-14);
        }
    }
}
