use super::Scalar;
use crate::error::{Error, Result};

/// LU factorization with partial pivoting of a banded matrix.
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    // row i holds columns i - kl ..= i + ku + kl
    band: Vec<T>,
    lower: Vec<T>,
    pivots: Vec<usize>,
}

impl<T: Scalar> BandedLu<T> {
    /// Factors the `n x n` matrix given by `entries` (local indices) with
    /// lower/upper bandwidths `kl`, `ku`.
    pub fn factor(n: usize, kl: usize, ku: usize, entries: &[(usize, usize, T)]) -> Result<Self> {
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            band: vec![T::zero(); n * width],
            lower: vec![T::zero(); n * kl.max(1)],
            pivots: vec![0; n],
        };
        for &(i, j, v) in entries {
            if i >= n || j >= n || j + kl < i || j > i + ku {
                return Err(Error::Assembly(format!(
                    "entry ({i}, {j}) outside band ({kl}, {ku}) of size {n}"
                )));
            }
            let k = lu.idx(i, j);
            lu.band[k] += v;
        }
        let scale = lu
            .band
            .iter()
            .map(|v| v.modulus())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let reach = kl + ku;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.band[lu.idx(k, k)].modulus();
            for i in k + 1..=last_row {
                let v = lu.band[lu.idx(i, k)].modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-300 || best <= scale * 1e-15 * f64::EPSILON {
                return Err(Error::Solver {
                    message: format!("singular banded matrix at pivot {k}"),
                    residual: best,
                });
            }
            lu.pivots[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = lu.idx(k, j);
                    let b = lu.idx(p, j);
                    lu.band.swap(a, b);
                }
            }
            let pivot = lu.band[lu.idx(k, k)];
            for i in k + 1..=last_row {
                let ik = lu.idx(i, k);
                let l = lu.band[ik] / pivot;
                lu.band[ik] = T::zero();
                lu.lower[k * kl.max(1) + (i - k - 1)] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=last_col {
                    let kj = lu.band[lu.idx(k, j)];
                    let ij = lu.idx(i, j);
                    lu.band[ij] -= l * kj;
                }
            }
        }
        Ok(lu)
    }

    /// Factors a square sub-block given in local coordinates, computing the
    /// bandwidths from the entries.
    pub fn factor_auto(n: usize, entries: &[(usize, usize, T)]) -> Result<Self> {
        let (mut kl, mut ku) = (0, 0);
        for &(i, j, _) in entries {
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        Self::factor(n, kl, ku, entries)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        let kl = self.kl;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk == T::zero() {
                continue;
            }
            for i in k + 1..=(k + kl).min(n - 1) {
                let l = self.lower[k * kl.max(1) + (i - k - 1)];
                b[i] -= l * bk;
            }
        }
        let reach = self.kl + self.ku;
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + reach).min(n - 1) {
                s -= self.band[self.idx(k, j)] * b[j];
            }
            b[k] = s / self.band[self.idx(k, k)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn tridiag(n: usize) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for i in 0..n {
            // zero diagonal forces pivoting
            t.push((i, i, if i % 3 == 0 { 0.0 } else { 2.0 + i as f64 }));
            if i + 1 < n {
                t.push((i, i + 1, 1.0 + 0.1 * i as f64));
                t.push((i + 1, i, -1.5));
            }
        }
        t
    }

    #[test]
    fn matches_dense_solve() {
        let n = 17;
        let t = tridiag(n);
        let lu = BandedLu::factor_auto(n, &t).unwrap();
        assert_eq!(lu.bandwidths(), (1, 1));
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for &(i, j, v) in &t {
            dense[(i, j)] += v;
        }
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = rhs.clone();
        lu.solve_in_place(&mut x);
        let r = &dense * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(rhs);
        assert!(r.norm() < 1e-12);
    }

    #[test]
    fn singular_detected() {
        let t = vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)];
        assert!(BandedLu::factor_auto(2, &t).is_err());
    }
}
