use nalgebra::{DMatrix, DVector};

use super::{norm2, BandedLu, Csr, Scalar};
use crate::error::{Error, Result};

/// Split of the unknowns into a few dense junction unknowns and banded
/// chains that couple to each other only through the junctions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub junctions: Vec<usize>,
    pub chains: Vec<Vec<usize>>,
}

impl Partition {
    pub fn size(&self) -> usize {
        self.junctions.len() + self.chains.iter().map(Vec::len).sum::<usize>()
    }

    fn locate(&self, n: usize) -> Result<Vec<(usize, usize)>> {
        // (block, local index); block 0 is the junction set
        let mut where_ = vec![(usize::MAX, 0); n];
        let mut place = |i: usize, b: usize, l: usize| -> Result<()> {
            if i >= n || where_[i].0 != usize::MAX {
                return Err(Error::Assembly(format!("partition index {i} repeated or out of range")));
            }
            where_[i] = (b, l);
            Ok(())
        };
        for (l, &i) in self.junctions.iter().enumerate() {
            place(i, 0, l)?;
        }
        for (c, chain) in self.chains.iter().enumerate() {
            for (l, &i) in chain.iter().enumerate() {
                place(i, c + 1, l)?;
            }
        }
        if where_.iter().any(|w| w.0 == usize::MAX) {
            return Err(Error::Assembly("partition does not cover every unknown".into()));
        }
        Ok(where_)
    }
}

struct ChainFactor<T> {
    indices: Vec<usize>,
    lu: BandedLu<T>,
    // chain-to-junction coupling solved through the chain: A_cc^{-1} A_cj
    x: Vec<Vec<T>>,
    // junction rows restricted to this chain: (junction, local, value)
    c: Vec<(usize, usize, T)>,
}

/// Direct solver for a bordered block-banded sparse matrix (Schur
/// complement on the junction unknowns).
pub struct BorderedLu<T: Scalar> {
    n: usize,
    junctions: Vec<usize>,
    chains: Vec<ChainFactor<T>>,
    schur: Option<nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl<T: Scalar> BorderedLu<T> {
    pub fn factor(a: &Csr<T>, part: &Partition) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n || part.size() != n {
            return Err(Error::Dimension {
                expected: n,
                got: part.size(),
            });
        }
        let loc = part.locate(n)?;
        let nj = part.junctions.len();
        let mut chain_entries: Vec<Vec<(usize, usize, T)>> = vec![Vec::new(); part.chains.len()];
        let mut chain_to_j: Vec<Vec<(usize, usize, T)>> = vec![Vec::new(); part.chains.len()];
        let mut j_to_chain: Vec<Vec<(usize, usize, T)>> = vec![Vec::new(); part.chains.len()];
        let mut s = DMatrix::<T>::zeros(nj, nj);
        for (r, c, v) in a.triplets() {
            let (br, lr) = loc[r];
            let (bc, lc) = loc[c];
            match (br, bc) {
                (0, 0) => s[(lr, lc)] += v,
                (0, b) => j_to_chain[b - 1].push((lr, lc, v)),
                (b, 0) => chain_to_j[b - 1].push((lr, lc, v)),
                (b1, b2) if b1 == b2 => chain_entries[b1 - 1].push((lr, lc, v)),
                _ => {
                    return Err(Error::Assembly(format!(
                        "entry ({r}, {c}) couples two chains directly"
                    )))
                }
            }
        }
        let mut chains = Vec::with_capacity(part.chains.len());
        for (ci, chain) in part.chains.iter().enumerate() {
            let lu = BandedLu::factor_auto(chain.len(), &chain_entries[ci])?;
            let mut x = vec![vec![T::zero(); chain.len()]; nj];
            for &(lr, lc, v) in &chain_to_j[ci] {
                x[lc][lr] += v;
            }
            for col in x.iter_mut() {
                if col.iter().any(|v| *v != T::zero()) {
                    lu.solve_in_place(col);
                }
            }
            for &(jr, lc, v) in &j_to_chain[ci] {
                for (jc, col) in x.iter().enumerate() {
                    s[(jr, jc)] -= v * col[lc];
                }
            }
            chains.push(ChainFactor {
                indices: chain.clone(),
                lu,
                x,
                c: j_to_chain[ci].clone(),
            });
        }
        let schur = if nj > 0 {
            let lu = s.lu();
            if !lu.is_invertible() {
                return Err(Error::Solver {
                    message: "singular junction block".into(),
                    residual: 0.0,
                });
            }
            Some(lu)
        } else {
            None
        };
        Ok(Self {
            n,
            junctions: part.junctions.clone(),
            chains,
            schur,
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.n);
        let nj = self.junctions.len();
        let mut ys: Vec<Vec<T>> = Vec::with_capacity(self.chains.len());
        let mut rj = DVector::<T>::from_iterator(nj, self.junctions.iter().map(|&i| b[i]));
        for ch in &self.chains {
            let mut y: Vec<T> = ch.indices.iter().map(|&i| b[i]).collect();
            ch.lu.solve_in_place(&mut y);
            for &(jr, lc, v) in &ch.c {
                rj[jr] -= v * y[lc];
            }
            ys.push(y);
        }
        let xj = match &self.schur {
            Some(lu) => lu.solve(&rj).expect("invertible junction block"),
            None => rj,
        };
        let mut out = vec![T::zero(); self.n];
        for (k, &i) in self.junctions.iter().enumerate() {
            out[i] = xj[k];
        }
        for (ch, mut y) in self.chains.iter().zip(ys) {
            for (jc, col) in ch.x.iter().enumerate() {
                let xv = xj[jc];
                if xv == T::zero() {
                    continue;
                }
                for (yl, cl) in y.iter_mut().zip(col) {
                    *yl -= *cl * xv;
                }
            }
            for (l, &i) in ch.indices.iter().enumerate() {
                out[i] = y[l];
            }
        }
        out
    }

    /// Solve followed by iterative refinement until the relative residual
    /// drops below `rtol`; returns the solution and the achieved residual.
    pub fn solve_refined(&self, a: &Csr<T>, b: &[T], rtol: f64, max_steps: usize) -> (Vec<T>, f64) {
        let bnorm = norm2(b).max(f64::MIN_POSITIVE);
        let mut x = self.solve(b);
        let mut rel = f64::INFINITY;
        for _ in 0..=max_steps {
            let ax = a.matvec(&x);
            let r: Vec<T> = b.iter().zip(&ax).map(|(bi, ai)| *bi - *ai).collect();
            rel = norm2(&r) / bnorm;
            if rel <= rtol {
                break;
            }
            let d = self.solve(&r);
            for (xi, di) in x.iter_mut().zip(d) {
                *xi += di;
            }
        }
        (x, rel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    // star-like matrix: node 0 couples to the first entry of three chains
    fn star_matrix(len: usize) -> (Csr<Complex64>, Partition) {
        let mut t = Vec::new();
        let mut chains = Vec::new();
        let n = 1 + 3 * len;
        t.push((0, 0, Complex64::new(0.5, 0.1)));
        for c in 0..3 {
            let base = 1 + c * len;
            chains.push((base..base + len).collect::<Vec<_>>());
            t.push((0, base, Complex64::new(1.0, -0.3)));
            t.push((base, 0, Complex64::new(0.7, 0.2)));
            for k in 0..len {
                let i = base + k;
                t.push((i, i, Complex64::new(if k % 2 == 0 { 0.0 } else { 3.0 }, 0.4)));
                if k + 1 < len {
                    t.push((i, i + 1, Complex64::new(1.0, 0.0)));
                    t.push((i + 1, i, Complex64::new(-1.0, 0.5)));
                }
            }
        }
        (
            Csr::from_triplets(n, n, &t).unwrap(),
            Partition {
                junctions: vec![0],
                chains,
            },
        )
    }

    #[test]
    fn matches_dense_lu() {
        let (a, part) = star_matrix(9);
        let lu = BorderedLu::factor(&a, &part).unwrap();
        let b: Vec<Complex64> = (0..a.rows())
            .map(|i| Complex64::new((i as f64).cos(), (i as f64 * 0.3).sin()))
            .collect();
        let x = lu.solve(&b);
        let r: f64 = a
            .matvec(&x)
            .iter()
            .zip(&b)
            .map(|(p, q)| (p - q).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(r < 1e-12, "residual {r}");
        let (_, rel) = lu.solve_refined(&a, &b, 1e-14, 3);
        assert!(rel < 1e-14);
    }

    #[test]
    fn cross_chain_coupling_rejected() {
        let (a, mut part) = star_matrix(4);
        let first = part.chains[0].remove(3);
        part.chains[1].push(first);
        assert!(BorderedLu::factor(&a, &part).is_err());
    }

    #[test]
    fn incomplete_partition_rejected() {
        let (a, mut part) = star_matrix(4);
        part.chains[2].pop();
        assert!(BorderedLu::factor(&a, &part).is_err());
    }
}
