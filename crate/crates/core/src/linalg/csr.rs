use super::Scalar;
use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr<T> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> Csr<T> {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut counts = vec![0usize; rows + 1];
        for &(r, c, _) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::Assembly(format!(
                    "entry ({r}, {c}) outside a {rows}x{cols} matrix"
                )));
            }
            counts[r + 1] += 1;
        }
        for i in 0..rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols_tmp = vec![0usize; triplets.len()];
        let mut vals_tmp = vec![T::zero(); triplets.len()];
        for &(r, c, v) in triplets {
            cols_tmp[next[r]] = c;
            vals_tmp[next[r]] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        for r in 0..rows {
            let mut row: Vec<(usize, T)> = (counts[r]..counts[r + 1])
                .map(|k| (cols_tmp[k], vals_tmp[k]))
                .collect();
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if indices.len() > indptr[r] && *indices.last().unwrap() == c {
                    let last = values.last_mut().unwrap();
                    *last += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.row(r)
            .find(|&(j, _)| j == c)
            .map(|(_, v)| v)
            .unwrap_or_else(T::zero)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let mut s = T::zero();
                for (c, v) in self.row(r) {
                    s += v * x[c];
                }
                s
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.cols, self.rows, &t).expect("indices in range")
    }

    pub fn adjoint(&self) -> Self {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v.conjugate())).collect();
        Self::from_triplets(self.cols, self.rows, &t).expect("indices in range")
    }

    /// `D_l A D_r` for diagonal scalings.
    pub fn scaled(&self, left: &[f64], right: &[f64]) -> Self {
        let mut out = self.clone();
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                out.values[k] = self.values[k] * T::from_real(left[r] * right[c]);
            }
        }
        out
    }

    /// `A - z I` for square `A`.
    pub fn shifted(&self, z: T) -> Self {
        let mut t: Vec<_> = self.triplets().collect();
        t.extend((0..self.rows).map(|i| (i, i, -z)));
        Self::from_triplets(self.rows, self.cols, &t).expect("square matrix")
    }

    /// Largest `|A_ij - conj(A_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let adj = self.adjoint();
        let mut worst = 0.0f64;
        for (r, c, v) in self.triplets() {
            worst = worst.max((v - adj.get(r, c)).modulus());
        }
        for (r, c, v) in adj.triplets() {
            worst = worst.max((v - self.get(r, c)).modulus());
        }
        worst
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Csr<U> {
        Csr {
            rows: self.rows,
            cols: self.cols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<T> {
        let mut m = nalgebra::DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }
}
