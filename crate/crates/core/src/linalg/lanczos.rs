use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Ritz values of a Hermitian operator.
#[derive(Debug, Clone)]
pub struct LanczosResult {
    /// Converged Ritz values, largest magnitude first.
    pub values: Vec<f64>,
    /// Residual bounds `|beta_m s_{m,i}|` matching `values`.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn nrm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Lanczos with full reorthogonalization for the `nev` eigenvalues of
/// largest magnitude of a Hermitian operator on `C^n`. The start vector is
/// fixed, so results are reproducible.
pub fn lanczos_extremal(
    n: usize,
    nev: usize,
    max_iter: usize,
    rtol: f64,
    mut op: impl FnMut(&[Complex64]) -> Result<Vec<Complex64>>,
) -> Result<LanczosResult> {
    if n == 0 || nev == 0 || nev > n {
        return Err(Error::Parameter(format!("cannot extract {nev} eigenvalues from dimension {n}")));
    }
    let max_iter = max_iter.min(n).max(nev);
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| {
            let t = i as f64 + 1.0;
            Complex64::new(1.0 + 0.5 * (0.7 * t).sin(), 0.25 * (1.3 * t).cos())
        })
        .collect();
    let s = nrm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    let mut basis: Vec<Vec<Complex64>> = vec![v];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last = None;
    for k in 0..max_iter {
        let mut w = op(&basis[k])?;
        let a = dot(&basis[k], &w).re;
        alpha.push(a);
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let b = nrm(&w);
        let m = alpha.len();
        let check = m >= nev && (m % 5 == 0 || m == max_iter || b < 1e-13 * a.abs().max(1.0));
        if check {
            let mut t = DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alpha[i];
                if i + 1 < m {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[j].abs().total_cmp(&eig.eigenvalues[i].abs()));
            let values: Vec<f64> = order[..nev].iter().map(|&i| eig.eigenvalues[i]).collect();
            let residuals: Vec<f64> = order[..nev]
                .iter()
                .map(|&i| (b * eig.eigenvectors[(m - 1, i)]).abs())
                .collect();
            let converged = values
                .iter()
                .zip(&residuals)
                .all(|(v, r)| *r <= rtol * v.abs().max(f64::MIN_POSITIVE));
            let result = LanczosResult {
                values,
                residuals,
                iterations: m,
            };
            if converged || b < 1e-13 * a.abs().max(1.0) || m == n {
                return Ok(result);
            }
            last = Some(result);
        }
        if b < 1e-300 {
            break;
        }
        beta.push(b);
        w.iter_mut().for_each(|x| *x /= b);
        basis.push(w);
    }
    let r = last.map(|l| l.residuals.iter().cloned().fold(0.0, f64::max)).unwrap_or(f64::NAN);
    Err(Error::NonConvergence {
        iterations: alpha.len(),
        residual: r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_operator() {
        let d: Vec<f64> = (0..200).map(|i| 1.0 + i as f64 * 0.01).collect();
        let d2 = d.clone();
        let r = lanczos_extremal(200, 2, 200, 1e-10, move |x| {
            Ok(x.iter().zip(&d2).map(|(a, b)| a * b).collect())
        })
        .unwrap();
        assert!((r.values[0] - 2.99).abs() < 1e-8);
        assert!((r.values[1] - 2.98).abs() < 1e-8);
    }

    #[test]
    fn negative_dominant_value() {
        let r = lanczos_extremal(3, 1, 3, 1e-12, |x| {
            Ok(vec![x[0] * -5.0, x[1] * 2.0, x[2]])
        })
        .unwrap();
        assert!((r.values[0] + 5.0).abs() < 1e-12);
    }
}
