//! Quadrature application of the 3-star kernel to grid data.
//!
//! Data are interpolated piecewise linearly between the points `t_k = k h/2`
//! (integer and half nodes). The free part is accumulated by forward and
//! backward exponential recursions, so one application is `O(n)`.

use std::sync::Arc;

use num_complex::Complex64;

use super::{correction_matrix, KernelVariant, ResolventQuery, I};
use crate::error::{Error, Result};
use crate::fields::{half_trace, Grid, SpinorField, TraceOrder};
use crate::operators::HermitianOperator;

type Pair = [Complex64; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

// 4-point Gauss-Legendre on [0, 1]
const GL_X: [f64; 4] = [
    0.069_431_844_202_973_71,
    0.330_009_478_207_571_87,
    0.669_990_521_792_428_1,
    0.930_568_155_797_026_3,
];
const GL_W: [f64; 4] = [
    0.173_927_422_568_726_93,
    0.326_072_577_431_273_07,
    0.326_072_577_431_273_07,
    0.173_927_422_568_726_93,
];

/// Result of [`apply_kernel`].
#[derive(Debug, Clone)]
pub struct KernelApplication {
    pub field: SpinorField,
    /// Largest difference of first components across edges at the vertex.
    pub continuity_gap: f64,
    /// `|sum_e chi_e(0)|`.
    pub chi_sum: f64,
}

fn check_star3(grid: &Grid) -> Result<()> {
    let n = grid.graph().require_star()?;
    if n != 3 {
        return Err(Error::InvalidTopology(format!("the closed-form kernel needs a 3-star, got {n} edges")));
    }
    if grid.edge_grids().iter().any(|g| !g.free_end) {
        return Err(Error::InvalidGrid("star edges must be truncated half-lines".into()));
    }
    Ok(())
}

/// Values at `t_k = k h/2`, `k = 0..=2M`.
fn samples(psi: &SpinorField, e: usize) -> Vec<Pair> {
    let g = psi.grid().edge(e);
    let m = g.cells;
    let mut out = Vec::with_capacity(2 * m + 1);
    for k in 0..=2 * m {
        let j = k / 2;
        let (phi, chi) = if k % 2 == 0 {
            let chi = if j == 0 {
                half_trace(psi.chi(e, 0), psi.chi(e, 1), TraceOrder::Second)
            } else if j == m {
                half_trace(psi.chi(e, m - 1), psi.chi(e, m - 2), TraceOrder::Second)
            } else {
                0.5 * (psi.chi(e, j - 1) + psi.chi(e, j))
            };
            (psi.phi(e, j), chi)
        } else {
            (0.5 * (psi.phi(e, j) + psi.phi(e, j + 1)), psi.chi(e, j))
        };
        out.push([phi, chi]);
    }
    out
}

struct Recursion {
    /// `e^{i lambda d}` over one sub-interval.
    step: Complex64,
    /// Weights for `int e^{i lambda (d - s)} f(s) ds` at the Gauss points.
    fwd: [Complex64; 4],
    /// Weights for `int e^{i lambda s} f(s) ds`.
    bwd: [Complex64; 4],
}

impl Recursion {
    fn new(lambda: Complex64, d: f64) -> Self {
        let mut fwd = [ZERO; 4];
        let mut bwd = [ZERO; 4];
        for q in 0..4 {
            let s = GL_X[q] * d;
            fwd[q] = GL_W[q] * d * (I * lambda * (d - s)).exp();
            bwd[q] = GL_W[q] * d * (I * lambda * s).exp();
        }
        Self {
            step: (I * lambda * d).exp(),
            fwd,
            bwd,
        }
    }

    fn interval(w: &[Complex64; 4], a: Pair, b: Pair) -> Pair {
        let mut out = [ZERO; 2];
        for q in 0..4 {
            for c in 0..2 {
                out[c] += w[q] * (a[c] + (b[c] - a[c]) * GL_X[q]);
            }
        }
        out
    }

    /// `F_k = int_0^{t_k} e^{i lambda (t_k - y)} psi` and
    /// `B_k = int_{t_k}^L e^{i lambda (y - t_k)} psi`.
    fn run(&self, v: &[Pair]) -> (Vec<Pair>, Vec<Pair>) {
        let n = v.len();
        let mut f = vec![[ZERO; 2]; n];
        let mut b = vec![[ZERO; 2]; n];
        for k in 0..n - 1 {
            let add = Self::interval(&self.fwd, v[k], v[k + 1]);
            for c in 0..2 {
                f[k + 1][c] = self.step * f[k][c] + add[c];
            }
        }
        for k in (0..n - 1).rev() {
            let add = Self::interval(&self.bwd, v[k], v[k + 1]);
            for c in 0..2 {
                b[k][c] = self.step * b[k + 1][c] + add[c];
            }
        }
        (f, b)
    }
}

/// `int_0^L e^{i lambda y} (phi_e, chi_e)(y) dy` per edge.
pub fn edge_moments(psi: &SpinorField, q: &ResolventQuery) -> Result<Vec<Pair>> {
    check_star3(psi.grid())?;
    Ok((0..3)
        .map(|e| {
            let rec = Recursion::new(q.lambda, 0.5 * psi.grid().edge(e).h);
            rec.run(&samples(psi, e)).1[0]
        })
        .collect())
}

/// Coefficients `alpha_e` of the correction
/// `(i / 2 lambda) e^{i lambda x} alpha_e (m + k + lambda, lambda - m + k)`.
pub fn correction_coefficients(psi: &SpinorField, q: &ResolventQuery) -> Result<[Complex64; 3]> {
    let kk = edge_moments(psi, q)?;
    let (m, k, l) = (q.m, q.k, q.lambda);
    let j: Vec<Complex64> = kk.iter().map(|v| (m + k) * v[0] - l * v[1]).collect();
    let s: Complex64 = kk.iter().map(|v| -l * v[0] + (k - m) * v[1]).sum();
    let mut out = [ZERO; 3];
    for (e, a) in out.iter_mut().enumerate() {
        let (o1, o2) = ((e + 1) % 3, (e + 2) % 3);
        *a = s / (3.0 * (m - k - l)) - (2.0 * j[e] - j[o1] - j[o2]) / (3.0 * (m + k + l));
    }
    Ok(out)
}

/// Applies the kernel `A + B` of `variant` to `psi` (c = 1). The shared
/// vertex value is the mean of the three edge limits.
pub fn apply_kernel(psi: &SpinorField, q: &ResolventQuery, variant: KernelVariant) -> Result<KernelApplication> {
    let grid: &Arc<Grid> = psi.grid();
    check_star3(grid)?;
    let pre = I / (2.0 * q.lambda);
    let mp = q.free_matrix(1.0);
    let mm = q.free_matrix(-1.0);
    let cm = correction_matrix(q, variant);

    let mut free = Vec::with_capacity(3);
    let mut moments = Vec::with_capacity(3);
    for e in 0..3 {
        let rec = Recursion::new(q.lambda, 0.5 * grid.edge(e).h);
        let (f, b) = rec.run(&samples(psi, e));
        moments.push(b[0]);
        free.push((f, b));
    }

    let mut out = SpinorField::zeros(grid.clone());
    let mut at_vertex = [[ZERO; 2]; 3];
    for e in 0..3 {
        let g = grid.edge(e);
        let h2 = 0.5 * g.h;
        let mut corr = [ZERO; 2];
        for (f, kf) in moments.iter().enumerate() {
            let c = cm[e][f];
            corr[0] += c[(0, 0)] * kf[0] + c[(0, 1)] * kf[1];
            corr[1] += c[(1, 0)] * kf[0] + c[(1, 1)] * kf[1];
        }
        let (fw, bw) = &free[e];
        let value = |k: usize| -> Pair {
            let (f, b) = (fw[k], bw[k]);
            let ex = (I * q.lambda * (k as f64 * h2)).exp();
            let mut u = [ZERO; 2];
            for r in 0..2 {
                u[r] = pre * (mp[(r, 0)] * f[0] + mp[(r, 1)] * f[1] + mm[(r, 0)] * b[0] + mm[(r, 1)] * b[1])
                    + ex * corr[r];
            }
            u
        };
        at_vertex[e] = value(0);
        let data = out.as_mut_slice();
        for j in 1..=g.cells {
            data[grid.phi_index(e, j)] = value(2 * j)[0];
        }
        for j in 0..g.cells {
            data[grid.chi_index(e, j)] = value(2 * j + 1)[1];
        }
    }
    let v = grid.graph().edges()[0].head;
    out.as_mut_slice()[v] = at_vertex.iter().map(|u| u[0]).sum::<Complex64>() / 3.0;
    let mut gap = 0.0f64;
    for a in 0..3 {
        for b in a + 1..3 {
            gap = gap.max((at_vertex[a][0] - at_vertex[b][0]).norm());
        }
    }
    let chi_sum = at_vertex.iter().map(|u| u[1]).sum::<Complex64>().norm();
    Ok(KernelApplication {
        field: out,
        continuity_gap: gap,
        chi_sum,
    })
}

/// Relative weighted L2 norm of `(D - k) u - psi`.
pub fn identity_residual(
    dirac: &HermitianOperator,
    k: Complex64,
    u: &SpinorField,
    psi: &SpinorField,
) -> Result<f64> {
    let du = dirac.apply(u.as_slice())?;
    let r: Vec<Complex64> = du
        .iter()
        .zip(u.as_slice())
        .zip(psi.as_slice())
        .map(|((d, u), p)| d - k * u - p)
        .collect();
    let r = SpinorField::from_vec(u.grid().clone(), r)?;
    let n = psi.l2_norm();
    Ok(if n == 0.0 { r.l2_norm() } else { r.l2_norm() / n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{MetricGraph, StarSpec};
    use crate::operators::{assemble_dirac, PhysParams};
    use crate::resolvent::star3_kernel;

    fn grid(l: f64, h: f64) -> Arc<Grid> {
        Arc::new(Grid::uniform(MetricGraph::star(&StarSpec::new(3, l)).unwrap(), l, h).unwrap())
    }

    fn bump(grid: &Arc<Grid>) -> SpinorField {
        SpinorField::from_fn(
            grid.clone(),
            |e, x| Complex64::new(x * x * (-(x - 2.0).powi(2)).exp() * (1.0 + 0.2 * e as f64), 0.0),
            |e, x| x * (-(x - 1.5).powi(2)).exp() * Complex64::new(0.5, -0.3 * e as f64),
        )
    }

    fn symmetric(grid: &Arc<Grid>) -> SpinorField {
        SpinorField::from_fn(
            grid.clone(),
            |_, x| Complex64::new((-(x - 1.0).powi(2)).exp(), 0.0),
            |_, x| Complex64::new(0.0, x * (-x * x).exp()),
        )
    }

    fn q() -> ResolventQuery {
        ResolventQuery::new(Complex64::new(1.0, 0.5), 1.0).unwrap()
    }

    #[test]
    fn zero_in_zero_out() {
        let g = grid(10.0, 0.1);
        let z = SpinorField::zeros(g.clone());
        let r = apply_kernel(&z, &q(), KernelVariant::Derived).unwrap();
        assert_eq!(r.field.l2_norm(), 0.0);
        assert_eq!(correction_coefficients(&z, &q()).unwrap(), [ZERO; 3]);
    }

    #[test]
    fn symmetric_data_give_equal_alphas() {
        let g = grid(10.0, 0.1);
        let psi = symmetric(&g);
        let a = correction_coefficients(&psi, &q()).unwrap();
        assert!((a[0] - a[1]).norm() < 1e-13 * a[0].norm());
        assert!((a[1] - a[2]).norm() < 1e-13 * a[0].norm());
        let qq = q();
        let (m, k, l) = (qq.m, qq.k, qq.lambda);
        let kk = edge_moments(&psi, &qq).unwrap();
        let s: Complex64 = kk.iter().map(|v| -l * v[0] + (k - m) * v[1]).sum();
        assert!((a[0] - s / (3.0 * (m - k - l))).norm() < 1e-13 * a[0].norm());
    }

    #[test]
    fn alpha_route_matches_matrix_route() {
        let g = grid(10.0, 0.1);
        let psi = bump(&g);
        let qq = q();
        let a = correction_coefficients(&psi, &qq).unwrap();
        let kk = edge_moments(&psi, &qq).unwrap();
        let cm = correction_matrix(&qq, KernelVariant::Derived);
        let (m, k, l) = (qq.m, qq.k, qq.lambda);
        for e in 0..3 {
            let mut v = [ZERO; 2];
            for f in 0..3 {
                let c = cm[e][f];
                v[0] += c[(0, 0)] * kk[f][0] + c[(0, 1)] * kk[f][1];
                v[1] += c[(1, 0)] * kk[f][0] + c[(1, 1)] * kk[f][1];
            }
            let pre = I / (2.0 * l) * a[e];
            let w = [pre * (m + k + l), pre * (l - m + k)];
            assert!((v[0] - w[0]).norm() < 1e-8 && (v[1] - w[1]).norm() < 1e-8);
        }
    }

    #[test]
    fn matches_pointwise_quadrature() {
        // O(n^2) trapezoid oracle straight from the kernel blocks
        let g = grid(8.0, 0.02);
        let psi = bump(&g);
        let qq = q();
        let fast = apply_kernel(&psi, &qq, KernelVariant::Derived).unwrap();
        let h = 0.02;
        let m = g.edge(0).cells;
        let eval = |e: usize, x: f64| -> Pair {
            let mut acc = [ZERO; 2];
            for f in 0..3 {
                // fine midpoint rule on a quarter grid
                let n = 4 * m;
                let dy = 8.0 / n as f64;
                for i in 0..n {
                    let y = (i as f64 + 0.5) * dy;
                    let k = star3_kernel(x, e, y, f, &qq, KernelVariant::Derived).unwrap();
                    let p = Complex64::new(y * y * (-(y - 2.0).powi(2)).exp() * (1.0 + 0.2 * f as f64), 0.0);
                    let c = y * (-(y - 1.5).powi(2)).exp() * Complex64::new(0.5, -0.3 * f as f64);
                    acc[0] += (k[(0, 0)] * p + k[(0, 1)] * c) * dy;
                    acc[1] += (k[(1, 0)] * p + k[(1, 1)] * c) * dy;
                }
            }
            acc
        };
        for (e, j) in [(0usize, 40usize), (1, 100), (2, 7)] {
            let u = eval(e, j as f64 * h);
            let d0 = (u[0] - fast.field.phi(e, j)).norm() / u[0].norm();
            let u = eval(e, (j as f64 + 0.5) * h);
            let d1 = (u[1] - fast.field.chi(e, j)).norm() / u[1].norm();
            assert!(d0 < 5e-4 && d1 < 5e-4, "{e} {j}: {d0:e} {d1:e}");
        }
    }

    #[test]
    fn agrees_with_shifted_solve() {
        let qq = q();
        let mut errs = Vec::new();
        for h in [0.1, 0.05] {
            let g = grid(12.0, h);
            let psi = bump(&g);
            let d = assemble_dirac(&g, PhysParams::new(1.0, 1.0).unwrap()).unwrap();
            let r = d.shifted_solve(qq.k, psi.as_slice()).unwrap();
            let k = apply_kernel(&psi, &qq, KernelVariant::Derived).unwrap();
            let diff: Vec<Complex64> = r.iter().zip(k.field.as_slice()).map(|(a, b)| a - b).collect();
            let diff = SpinorField::from_vec(g.clone(), diff).unwrap();
            errs.push(diff.l2_norm() / k.field.l2_norm());
            assert!(k.continuity_gap < 1e-3 && k.chi_sum < 1e-3);
        }
        assert!(errs[1] < 1e-3, "{errs:?}");
        assert!(errs[1] < errs[0], "{errs:?}");
    }

    #[test]
    fn printed_reading_fails_identity() {
        let qq = q();
        let g = grid(12.0, 0.05);
        let psi = bump(&g);
        let d = assemble_dirac(&g, PhysParams::new(1.0, 1.0).unwrap()).unwrap();
        let good = apply_kernel(&psi, &qq, KernelVariant::Derived).unwrap();
        let bad = apply_kernel(&psi, &qq, KernelVariant::PRINTED_READING).unwrap();
        let rg = identity_residual(&d, qq.k, &good.field, &psi).unwrap();
        let rb = identity_residual(&d, qq.k, &bad.field, &psi).unwrap();
        assert!(rg < 1e-2, "{rg}");
        assert!(rb > 10.0 * rg, "{rb} vs {rg}");
    }
}
