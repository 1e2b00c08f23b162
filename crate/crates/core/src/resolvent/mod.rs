//! Resolvent of the Dirac operator on the 3-star (c = 1): the closed-form
//! kernel, its quadrature application, and the nonrelativistic limit.
//!
//! The kernel is the free line Green's function on each edge plus a
//! vertex-localized correction `e^{i lambda (x + y)} C_ef` fixed by the
//! vertex conditions (continuity of the first component, zero sum of the
//! second).

use std::io::Write;

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::error::{Error, Result};

mod apply;
mod limits;

pub use apply::{apply_kernel, correction_coefficients, edge_moments, identity_residual, KernelApplication};
pub use limits::{
    loglog_slope, nonrel_sweep, propagator_check, resdecomp_check, resdecomp_discrepancy, NonrelSweep,
    PropagatorRow, ResdecompReport, SweepRow,
};

pub type Block = Matrix2<Complex64>;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Spectral parameter `k` with the derived `lambda`, `k^2 = m^2 + lambda^2`,
/// `Im lambda > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventQuery {
    pub k: Complex64,
    pub m: f64,
    pub lambda: Complex64,
}

impl ResolventQuery {
    pub fn new(k: Complex64, m: f64) -> Result<Self> {
        let lambda = lambda_of_k(k, m)?;
        let q = Self { k, m, lambda };
        let scale = 1.0 + k.norm() + m;
        for (name, v) in [("m + k + lambda", m + k + lambda), ("m - k - lambda", m - k - lambda)] {
            if v.norm() < 1e-12 * scale {
                return Err(Error::DegenerateQuery(format!("{name} vanishes at k = {k}")));
            }
        }
        Ok(q)
    }

    /// Free-line matrix `[[m + k, lambda s], [lambda s, -m + k]]`.
    fn free_matrix(&self, s: f64) -> Block {
        let (m, k, l) = (self.m, self.k, self.lambda);
        Block::new(m + k, l * s, l * s, k - m)
    }
}

/// `lambda` with `lambda^2 = k^2 - m^2` and `Im lambda > 0`.
pub fn lambda_of_k(k: Complex64, m: f64) -> Result<Complex64> {
    if !(m >= 0.0 && m.is_finite()) || !k.re.is_finite() || !k.im.is_finite() {
        return Err(Error::Parameter(format!("bad resolvent query k = {k}, m = {m}")));
    }
    let mut l = (k * k - m * m).sqrt();
    if l.im < 0.0 {
        l = -l;
    }
    if l.im <= 0.0 {
        return Err(Error::DegenerateQuery(format!(
            "k = {k} lies on the spectrum of the free operator (m = {m})"
        )));
    }
    Ok(l)
}

fn sign(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Green's function of `D - k` on the line.
pub fn line_green(x: f64, y: f64, q: &ResolventQuery) -> Block {
    let pre = I / (2.0 * q.lambda) * (I * q.lambda * (x - y).abs()).exp();
    q.free_matrix(sign(x - y)) * pre
}

/// Which vertex correction to use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelVariant {
    /// Correction solved from the vertex conditions.
    Derived,
    /// The three-matrix form `B1 + B2 + B3` with a chosen scalar in front of
    /// `B2` (`B2 = b2_prefactor * e^{i lambda (x+y)} / (6 lambda) * P`).
    Printed { b2_prefactor: Complex64 },
}

impl KernelVariant {
    pub const PRINTED_READING: KernelVariant = KernelVariant::Printed {
        b2_prefactor: Complex64::new(0.0, -1.0),
    };
}

/// Constant 6x6 correction matrix `C` (blocks `C_ef`), so that the
/// correction is `e^{i lambda x} C_ef e^{i lambda y}`.
pub fn correction_matrix(q: &ResolventQuery, variant: KernelVariant) -> [[Block; 3]; 3] {
    let (m, k, l) = (q.m, q.k, q.lambda);
    let mut out = [[Block::zeros(); 3]; 3];
    match variant {
        KernelVariant::Derived => {
            let mb = Block::new(m + k, -l, l, m - k);
            for (e, row) in out.iter_mut().enumerate() {
                for (f, b) in row.iter_mut().enumerate() {
                    let d = if e == f { 0.5 } else { 0.0 };
                    *b = mb * (I / l * (1.0 / 3.0 - d));
                }
            }
        }
        KernelVariant::Printed { b2_prefactor } => {
            let c1 = I * (m + k + l) / (6.0 * l * (m - k - l));
            let c2 = b2_prefactor / (6.0 * l);
            let c3 = I * (k - m + l) / (6.0 * l * (m + k + l));
            // own-edge and cross-edge first rows of the B2 pattern
            let p_own = [-2.0 * (m + k), 2.0 * l];
            let p_other = [m + k, l];
            let r1 = [-l, k - m];
            for (e, row) in out.iter_mut().enumerate() {
                for (f, b) in row.iter_mut().enumerate() {
                    let p = if e == f { p_own } else { p_other };
                    for col in 0..2 {
                        b[(0, col)] = c1 * r1[col] + c2 * p[col];
                        b[(1, col)] = c2 * r1[col] + c3 * p[col];
                    }
                }
            }
        }
    }
    out
}

fn check_edge(e: usize) -> Result<()> {
    if e >= 3 {
        return Err(Error::UnknownEdge(e));
    }
    Ok(())
}

/// `(e, f)` block of the 3-star kernel at `(x, y)`; edges are `0..3`.
pub fn star3_kernel(x: f64, e: usize, y: f64, f: usize, q: &ResolventQuery, variant: KernelVariant) -> Result<Block> {
    check_edge(e)?;
    check_edge(f)?;
    let c = correction_matrix(q, variant)[e][f];
    let corr = c * (I * q.lambda * (x + y)).exp();
    Ok(if e == f { line_green(x, y, q) + corr } else { corr })
}

/// One kernel sample point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSample {
    pub x: f64,
    pub e: usize,
    pub y: f64,
    pub f: usize,
}

/// Writes `x,e,y,f` and the block entries (row major, re/im pairs).
pub fn write_kernel_dump<W: Write>(
    samples: &[KernelSample],
    q: &ResolventQuery,
    variant: KernelVariant,
    mut w: W,
) -> Result<()> {
    writeln!(w, "x,e,y,f,re_11,im_11,re_12,im_12,re_21,im_21,re_22,im_22")?;
    for s in samples {
        let b = star3_kernel(s.x, s.e, s.y, s.f, q, variant)?;
        write!(w, "{},{},{},{}", s.x, s.e, s.y, s.f)?;
        for r in 0..2 {
            for c in 0..2 {
                write!(w, ",{},{}", b[(r, c)].re, b[(r, c)].im)?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn lambda_examples() {
        assert!((lambda_of_k(c(0.0, 1.0), 1.0).unwrap() - c(0.0, 2f64.sqrt())).norm() < 1e-14);
        assert!((lambda_of_k(c(0.0, 0.0), 1.0).unwrap() - c(0.0, 1.0)).norm() < 1e-14);
        assert!((lambda_of_k(c(0.0, 2.0), 0.0).unwrap() - c(0.0, 2.0)).norm() < 1e-14);
    }

    #[test]
    fn lambda_rejects_spectrum() {
        for k in [c(1.0, 0.0), c(-1.0, 0.0), c(2.5, 0.0)] {
            assert!(matches!(lambda_of_k(k, 1.0), Err(Error::DegenerateQuery(_))));
        }
        assert!(lambda_of_k(c(0.5, 0.0), 1.0).is_ok());
    }

    #[test]
    fn line_green_at_coincidence() {
        let q = ResolventQuery::new(c(0.3, 0.7), 1.0).unwrap();
        let g = line_green(1.0, 1.0, &q);
        let pre = I / (2.0 * q.lambda);
        assert!((g[(0, 0)] - pre * (1.0 + q.k)).norm() < 1e-15);
        assert!((g[(1, 1)] - pre * (q.k - 1.0)).norm() < 1e-15);
        assert_eq!(g[(0, 1)], c(0.0, 0.0));
        let a = line_green(0.2, 1.1, &q);
        let b = line_green(1.1, 0.2, &q);
        assert!((a[(0, 1)] + b[(0, 1)]).norm() < 1e-15);
        assert!((a[(0, 0)] - b[(0, 0)]).norm() < 1e-15);
    }

    #[test]
    fn correction_satisfies_vertex_conditions() {
        // kernel columns at x = 0 for a source at y on edge f
        let q = ResolventQuery::new(c(0.2, 0.9), 1.0).unwrap();
        for f in 0..3 {
            let cols: Vec<Block> = (0..3)
                .map(|e| star3_kernel(0.0, e, 0.7, f, &q, KernelVariant::Derived).unwrap())
                .collect();
            for col in 0..2 {
                let sum: Complex64 = cols.iter().map(|b| b[(1, col)]).sum();
                assert!(sum.norm() < 1e-14);
                assert!((cols[0][(0, col)] - cols[1][(0, col)]).norm() < 1e-14);
                assert!((cols[1][(0, col)] - cols[2][(0, col)]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn printed_reading_breaks_vertex_conditions() {
        let q = ResolventQuery::new(c(0.2, 0.9), 1.0).unwrap();
        let v = KernelVariant::PRINTED_READING;
        let cols: Vec<Block> = (0..3).map(|e| star3_kernel(0.0, e, 0.7, 0, &q, v).unwrap()).collect();
        let sum: Complex64 = cols.iter().map(|b| b[(1, 0)]).sum();
        let gap = (cols[0][(0, 0)] - cols[1][(0, 0)]).norm();
        assert!(sum.norm() + gap > 1e-3);
    }

    #[test]
    fn permutation_symmetry() {
        let q = ResolventQuery::new(c(0.0, 1.0), 1.0).unwrap();
        let perm = [2, 0, 1];
        for e in 0..3 {
            for f in 0..3 {
                let a = star3_kernel(0.4, e, 1.3, f, &q, KernelVariant::Derived).unwrap();
                let b = star3_kernel(0.4, perm[e], 1.3, perm[f], &q, KernelVariant::Derived).unwrap();
                assert!((a - b).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn far_field_is_free() {
        let q = ResolventQuery::new(c(0.0, 1.0), 1.0).unwrap();
        let a = star3_kernel(15.0, 1, 15.0, 1, &q, KernelVariant::Derived).unwrap();
        let tol = (-2.0 * q.lambda.im * 15.0).exp();
        assert!((a - line_green(15.0, 15.0, &q)).norm() < tol);
        let off = star3_kernel(15.0, 0, 15.0, 2, &q, KernelVariant::Derived).unwrap();
        assert!(off.norm() < tol);
    }

    #[test]
    fn rejects_bad_edges() {
        let q = ResolventQuery::new(c(0.0, 1.0), 1.0).unwrap();
        assert!(matches!(
            star3_kernel(0.0, 3, 0.0, 0, &q, KernelVariant::Derived),
            Err(Error::UnknownEdge(3))
        ));
    }

    #[test]
    fn dump_has_twelve_columns() {
        let q = ResolventQuery::new(c(0.0, 1.0), 1.0).unwrap();
        let s = [KernelSample { x: 0.5, e: 0, y: 1.0, f: 2 }];
        let mut buf = Vec::new();
        write_kernel_dump(&s, &q, KernelVariant::Derived, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].split(',').count(), 12);
    }
}
