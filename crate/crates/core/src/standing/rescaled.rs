//! Real-reduced rescaled stationary system on the staggered grid.
//!
//! With `phi = alpha u(sqrt(eps) x)`, `chi = -i beta w(sqrt(eps) x)` the
//! stationary equation at `omega = m - eps` becomes
//!
//! ```text
//! R1:  -w' + u - G u = 0              (integer nodes)
//! R2:   u' - (2m - eps) w - eps G w = 0  (half-nodes)
//! ```
//!
//! with `G = (u^2 + eps w^2)^{(p-2)/2}`. The discretization mirrors the
//! Dirac assembly exactly: `u` lives in the first-component slots of a
//! spinor layout, `w` in the second-component slots, the vertex row is the
//! weak oriented-sum row, and `G` is the Kerr coefficient of the density
//! quadrature. A discrete solution therefore maps to an exact discrete
//! stationary state on the image grid `h / sqrt(eps)`.

use std::sync::Arc;

use num_complex::Complex64;

use super::SolitonSpec;
use crate::error::{Error, Result};
use crate::fields::{Grid, NodeKind, ScalarField};
use crate::graph::{MetricGraph, StarSpec};
use crate::linalg::{lanczos_extremal, BorderedLu, Csr, Partition};

/// `(u, w)` pair of the rescaled problem at a given `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledState {
    pub eps: f64,
    pub spec: SolitonSpec,
    grid: Arc<Grid>,
    x: Vec<f64>,
}

/// Default truncation: the smallest multiple of `h` at least `30/delta`.
pub fn default_truncation(spec: &SolitonSpec, h: f64) -> f64 {
    (30.0 / spec.delta() / h).ceil() * h
}

fn chi_mask(grid: &Grid) -> Vec<bool> {
    let mut mask = vec![false; grid.spinor_len()];
    for (e, g) in grid.edge_grids().iter().enumerate() {
        for j in 0..g.cells {
            mask[grid.chi_index(e, j)] = true;
        }
    }
    mask
}

/// Staggered cells `(chi slot, left phi slot, right phi slot, h)`.
fn cells(grid: &Grid) -> Vec<(usize, usize, usize, f64)> {
    let mut out = Vec::new();
    for (e, g) in grid.edge_grids().iter().enumerate() {
        for j in 0..g.cells {
            out.push((grid.chi_index(e, j), grid.phi_index(e, j), grid.phi_index(e, j + 1), g.h));
        }
    }
    out
}

fn partition(grid: &Grid) -> Partition {
    Partition {
        junctions: (0..grid.graph().vertex_count()).collect(),
        chains: (0..grid.edge_grids().len()).map(|e| grid.spinor_chain(e).collect()).collect(),
    }
}

impl RescaledState {
    pub fn from_parts(eps: f64, spec: SolitonSpec, grid: Arc<Grid>, x: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if grid.graph().require_star().map(|n| n != spec.n).unwrap_or(true) {
            return Err(Error::InvalidTopology(format!(
                "rescaled states live on a {}-star",
                spec.n
            )));
        }
        if x.len() != grid.spinor_len() {
            return Err(Error::Dimension {
                expected: grid.spinor_len(),
                got: x.len(),
            });
        }
        Ok(Self { eps, spec, grid, x })
    }

    pub fn zeros(eps: f64, spec: SolitonSpec, grid: Arc<Grid>) -> Result<Self> {
        let n = grid.spinor_len();
        Self::from_parts(eps, spec, grid, vec![0.0; n])
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Unknowns in spinor layout (`u` in first-component slots).
    pub fn values(&self) -> &[f64] {
        &self.x
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.x
    }

    pub fn u(&self, e: usize, j: usize) -> f64 {
        self.x[self.grid.phi_index(e, j)]
    }

    pub fn w(&self, e: usize, j: usize) -> f64 {
        self.x[self.grid.chi_index(e, j)]
    }

    pub fn u_field(&self) -> ScalarField<f64> {
        let mut f = ScalarField::zeros(self.grid.clone(), NodeKind::Integer);
        for (e, g) in self.grid.edge_grids().iter().enumerate() {
            for j in 0..=g.cells {
                f.set(e, j, self.u(e, j));
            }
        }
        f
    }

    pub fn w_field(&self) -> ScalarField<f64> {
        let mut f = ScalarField::zeros(self.grid.clone(), NodeKind::Half);
        for (e, g) in self.grid.edge_grids().iter().enumerate() {
            for j in 0..g.cells {
                f.set(e, j, self.w(e, j));
            }
        }
        f
    }

    pub fn sup_u(&self) -> f64 {
        let mask = chi_mask(&self.grid);
        self.x.iter().zip(&mask).filter(|(_, c)| !**c).map(|(v, _)| v.abs()).fold(0.0, f64::max)
    }

    pub fn sup_w(&self) -> f64 {
        let mask = chi_mask(&self.grid);
        self.x.iter().zip(&mask).filter(|(_, c)| **c).map(|(v, _)| v.abs()).fold(0.0, f64::max)
    }

    /// Oriented sum of second-order `w` traces at the vertex.
    pub fn vertex_trace_sum(&self) -> f64 {
        (0..self.spec.n)
            .map(|e| 0.5 * (3.0 * self.w(e, 0) - self.w(e, 1)))
            .sum()
    }

    /// Euclidean distance between the unknown vectors.
    pub fn distance(&self, other: &Self) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// `u = U`, `w = U'/(2m)` at `eps = 0` on a star truncated at `truncation`
/// (default [`default_truncation`]).
pub fn seed_state(spec: &SolitonSpec, h: f64, truncation: Option<f64>) -> Result<RescaledState> {
    spec.validate()?;
    let l = truncation.unwrap_or_else(|| default_truncation(spec, h));
    let graph = MetricGraph::star(&StarSpec::new(spec.n, l))?;
    let grid = Arc::new(Grid::uniform(graph, l, h)?);
    let mut x = vec![0.0; grid.spinor_len()];
    for (e, g) in grid.edge_grids().iter().enumerate() {
        for j in 0..=g.cells {
            x[grid.phi_index(e, j)] = spec.eval(e, grid.position(NodeKind::Integer, e, j))?;
        }
        for j in 0..g.cells {
            let xh = grid.position(NodeKind::Half, e, j);
            x[grid.chi_index(e, j)] = spec.eval_derivative(e, xh)? / (2.0 * spec.m);
        }
    }
    RescaledState::from_parts(0.0, *spec, grid, x)
}

struct Kerr {
    g: Vec<f64>,
    // per density node: weight * G'(s)
    dg: Vec<f64>,
}

fn kerr(grid: &Grid, x: &[f64], sigma: &[f64], p: f64) -> Kerr {
    let q = 0.5 * (p - 2.0);
    let w = grid.spinor_weights();
    let mut g = vec![0.0; x.len()];
    let mut dg = Vec::with_capacity(grid.density_nodes().len());
    for node in grid.density_nodes() {
        let s: f64 = node.terms().iter().map(|&(i, c)| c * sigma[i] * x[i] * x[i]).sum();
        let (gn, dgn) = if s > 1e-300 {
            (s.powf(q), q * s.powf(q - 1.0))
        } else {
            (0.0, if q == 1.0 { 1.0 } else { 0.0 })
        };
        for &(i, c) in node.terms() {
            g[i] += node.weight * c * gn;
        }
        dg.push(node.weight * dgn);
    }
    for (gi, wi) in g.iter_mut().zip(w) {
        *gi /= wi;
    }
    Kerr { g, dg }
}

fn sigma_and_scale(mask: &[bool], eps: f64) -> (Vec<f64>, Vec<f64>) {
    // sigma weights the density, scale multiplies the Kerr term of each row
    let sigma = mask.iter().map(|&c| if c { eps } else { 1.0 }).collect();
    let scale = mask.iter().map(|&c| if c { eps } else { 1.0 }).collect();
    (sigma, scale)
}

/// Stacked residual in spinor layout: R1 at first-component slots (weak
/// oriented-sum row at the vertex), R2 at second-component slots.
pub fn rescaled_residual(state: &RescaledState) -> Vec<f64> {
    let grid = &state.grid;
    let x = &state.x;
    let (m, eps) = (state.spec.m, state.eps);
    let w = grid.spinor_weights();
    let mask = chi_mask(grid);
    let mut r: Vec<f64> = x.iter().zip(&mask).map(|(v, c)| if *c { 0.0 } else { *v }).collect();
    for (c, left, right, h) in cells(grid) {
        r[c] += (x[right] - x[left]) / h - (2.0 * m - eps) * x[c];
        r[left] -= x[c] / w[left];
        r[right] += x[c] / w[right];
    }
    let (sigma, scale) = sigma_and_scale(&mask, eps);
    let k = kerr(grid, x, &sigma, state.spec.p);
    for i in 0..x.len() {
        r[i] -= scale[i] * k.g[i] * x[i];
    }
    r
}

/// Analytic Jacobian of [`rescaled_residual`] with respect to the unknowns.
pub fn rescaled_jacobian(state: &RescaledState) -> Csr<f64> {
    let grid = &state.grid;
    let x = &state.x;
    let (m, eps) = (state.spec.m, state.eps);
    let w = grid.spinor_weights();
    let mask = chi_mask(grid);
    let mut t: Vec<(usize, usize, f64)> = Vec::new();
    for (i, c) in mask.iter().enumerate() {
        if !c {
            t.push((i, i, 1.0));
        }
    }
    for (c, left, right, h) in cells(grid) {
        t.push((c, right, 1.0 / h));
        t.push((c, left, -1.0 / h));
        t.push((c, c, -(2.0 * m - eps)));
        t.push((left, c, -1.0 / w[left]));
        t.push((right, c, 1.0 / w[right]));
    }
    let (sigma, scale) = sigma_and_scale(&mask, eps);
    let k = kerr(grid, x, &sigma, state.spec.p);
    for i in 0..x.len() {
        t.push((i, i, -scale[i] * k.g[i]));
    }
    for (node, dgn) in grid.density_nodes().iter().zip(&k.dg) {
        if *dgn == 0.0 {
            continue;
        }
        for &(i, ci) in node.terms() {
            for &(kk, ck) in node.terms() {
                let v = -scale[i] * x[i] * ci * dgn * 2.0 * ck * sigma[kk] * x[kk] / w[i];
                if v != 0.0 {
                    t.push((i, kk, v));
                }
            }
        }
    }
    Csr::from_triplets(x.len(), x.len(), &t).expect("indices from the grid")
}

/// Complex stationary system for the pair `(u, v)` (no real reduction):
/// `-i v' + u - G u` and `-i u' - (2m - eps) v - eps G v` with
/// `G = (|u|^2 + eps |v|^2)^{(p-2)/2}`.
pub fn systaux_residual(
    grid: &Grid,
    z: &[Complex64],
    eps: f64,
    m: f64,
    p: f64,
) -> Vec<Complex64> {
    let i = Complex64::i();
    let w = grid.spinor_weights();
    let mask = chi_mask(grid);
    let mut r: Vec<Complex64> = z
        .iter()
        .zip(&mask)
        .map(|(v, c)| if *c { Complex64::new(0.0, 0.0) } else { *v })
        .collect();
    for (c, left, right, h) in cells(grid) {
        r[c] += -i * (z[right] - z[left]) / h - z[c] * (2.0 * m - eps);
        r[left] += -i * z[c] / w[left];
        r[right] -= -i * z[c] / w[right];
    }
    let scaled: Vec<Complex64> = z
        .iter()
        .zip(&mask)
        .map(|(v, c)| if *c { v * eps.sqrt() } else { *v })
        .collect();
    let g = grid.nonlinear_coefficients(&scaled, p);
    for k in 0..z.len() {
        let s = if mask[k] { eps } else { 1.0 };
        r[k] -= z[k] * (s * g[k]);
    }
    r
}

fn sup(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual: f64,
    /// Sup-norm residual before each iteration and after the last.
    pub history: Vec<f64>,
}

/// Newton's method for the rescaled system at `eps`, starting from
/// `initial` (its own `eps` is ignored).
pub fn newton_solve(
    initial: &RescaledState,
    eps: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(RescaledState, NewtonReport)> {
    let mut state = initial.clone();
    state.eps = eps;
    let part = partition(&state.grid);
    let mut history = Vec::new();
    for it in 0..=max_iter {
        let r = rescaled_residual(&state);
        let res = sup(&r);
        history.push(res);
        if !res.is_finite() {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: res,
            });
        }
        if res <= tol {
            return Ok((
                state,
                NewtonReport {
                    iterations: it,
                    residual: res,
                    history,
                },
            ));
        }
        if it == max_iter {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: res,
            });
        }
        let j = rescaled_jacobian(&state);
        let lu = BorderedLu::factor(&j, &part)?;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let (dx, _) = lu.solve_refined(&j, &rhs, 1e-14, 2);
        for (xi, di) in state.x.iter_mut().zip(dx) {
            *xi += di;
        }
    }
    unreachable!("loop returns")
}

/// Smallest singular value of the Jacobian at `state` (Euclidean norms),
/// from Lanczos on `(J^T J)^{-1}`. Returns 0 for a singular Jacobian.
pub fn jacobian_min_singular_value(state: &RescaledState) -> Result<f64> {
    let j = rescaled_jacobian(state);
    let part = partition(&state.grid);
    let (lu, lut) = match (BorderedLu::factor(&j, &part), BorderedLu::factor(&j.transpose(), &part)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(Error::Solver { .. }), _) | (_, Err(Error::Solver { .. })) => return Ok(0.0),
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    let jt = j.transpose();
    let apply = |v: &[f64]| -> Vec<f64> {
        let y = lut.solve_refined(&jt, v, 1e-14, 1).0;
        lu.solve_refined(&j, &y, 1e-14, 1).0
    };
    let n = j.rows();
    let r = lanczos_extremal(n, 1, n.min(400), 1e-9, |z| {
        let re: Vec<f64> = z.iter().map(|c| c.re).collect();
        let im: Vec<f64> = z.iter().map(|c| c.im).collect();
        let (a, b) = (apply(&re), apply(&im));
        Ok(a.into_iter().zip(b).map(|(x, y)| Complex64::new(x, y)).collect())
    })?;
    Ok(1.0 / r.values[0].abs().sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub eps: f64,
    pub state: RescaledState,
    pub newton_iters: usize,
    pub residual: f64,
    pub min_singular_value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
}

/// Continuation stopped before reaching `eps_max`.
#[derive(Debug, thiserror::Error)]
#[error("continuation stopped at eps = {eps}: {source}")]
pub struct BranchFailure {
    pub eps: f64,
    #[source]
    pub source: Error,
    pub partial: Branch,
}

/// Natural-parameter continuation from the seed (polished at `eps = 0`) to
/// `eps_max`, predictor = previous solution, halving the step on Newton
/// failure down to `1e-4`.
pub fn continue_branch(
    seed: &RescaledState,
    eps_max: f64,
    eps_step: f64,
    tol: f64,
) -> std::result::Result<Branch, BranchFailure> {
    const MAX_ITER: usize = 25;
    const MIN_STEP: f64 = 1e-4;
    let mut branch = Branch::default();
    let fail = |eps: f64, source: Error, partial: Branch| BranchFailure { eps, source, partial };
    if !(eps_step > 0.0 && eps_step.is_finite()) || !eps_max.is_finite() {
        return Err(fail(
            0.0,
            Error::Parameter(format!("invalid continuation range ({eps_max}, step {eps_step})")),
            branch,
        ));
    }
    let record = |state: RescaledState, report: NewtonReport| -> Result<BranchPoint> {
        let smin = jacobian_min_singular_value(&state)?;
        Ok(BranchPoint {
            eps: state.eps,
            newton_iters: report.iterations,
            residual: report.residual,
            min_singular_value: smin,
            state,
        })
    };
    let first = newton_solve(seed, 0.0, tol, MAX_ITER).and_then(|(s, r)| record(s, r));
    let mut current = match first {
        Ok(p) => p,
        Err(e) => return Err(fail(0.0, e, branch)),
    };
    let dir = eps_max.signum();
    let mut step = eps_step;
    branch.points.push(current.clone());
    while (eps_max - current.eps) * dir > 1e-12 {
        let mut target = current.eps + dir * step;
        if (target - eps_max) * dir > -1e-9 * step {
            target = eps_max;
        }
        target = (target * 1e12).round() / 1e12;
        match newton_solve(&current.state, target, tol, MAX_ITER) {
            Ok((s, r)) => match record(s, r) {
                Ok(p) => {
                    current = p;
                    branch.points.push(current.clone());
                    step = (2.0 * step).min(eps_step);
                }
                Err(e) => return Err(fail(target, e, branch)),
            },
            Err(e) => {
                step *= 0.5;
                if step < MIN_STEP {
                    return Err(fail(target, e, branch));
                }
            }
        }
    }
    Ok(branch)
}
