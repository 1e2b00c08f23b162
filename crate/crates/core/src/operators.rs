//! Discrete Dirac operator and Laplacians with their vertex conditions.
//!
//! Every operator is stored as `S^{-1} H S^{-1}` where `H` is the
//! quadrature-weighted (stiffness) matrix and `S` the square roots of the
//! quadrature weights. That matrix is Hermitian entrywise, and Euclidean
//! norms in `S`-coordinates are discrete L2 norms.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{Grid, NodeKind};
use crate::linalg::{lanczos_extremal, BorderedLu, Csr, Partition};

/// Mass and speed of light.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams {
    pub m: f64,
    pub c: f64,
}

impl PhysParams {
    pub fn new(m: f64, c: f64) -> Result<Self> {
        let p = Self { m, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::Parameter(format!("mass must be positive, got {}", self.m)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Parameter(format!("c must be positive, got {}", self.c)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Dirac,
    KirchhoffLaplacian,
    DeltaPrimeLaplacian,
    /// Kirchhoff Laplacian on the first component, delta-prime Laplacian on
    /// the second.
    BigLaplacian,
}

/// What an operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Spinor,
    Scalar(NodeKind),
}

/// Closure of the Kirchhoff Laplacian at truncation points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FarEnd {
    /// Natural (Neumann) closure.
    #[default]
    Free,
    /// Zero value one cell beyond the truncation point.
    Dirichlet,
}

/// Which part of the spectrum `extremal_eigs` returns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EigWhich {
    /// `count` eigenvalues closest to zero, ascending by magnitude.
    SmallestMagnitude,
    /// `count` eigenvalues closest to `target`.
    NearestTo(f64),
    /// Largest negative and smallest positive eigenvalue (in that order).
    GapEdges,
    /// `count` eigenvalues of largest magnitude.
    LargestMagnitude,
}

/// Self-adjoint operator on a grid (see module docs for the storage).
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    kind: OperatorKind,
    layout: Layout,
    grid: Arc<Grid>,
    sym: Csr<Complex64>,
    sqrt_w: Vec<f64>,
    partition: Partition,
}

struct Builder {
    n: usize,
    t: Vec<(usize, usize, Complex64)>,
}

impl Builder {
    fn new(n: usize) -> Self {
        Self { n, t: Vec::new() }
    }

    fn add(&mut self, i: usize, j: usize, v: Complex64) {
        self.t.push((i, j, v));
    }

    fn add_real(&mut self, i: usize, j: usize, v: f64) {
        self.add(i, j, Complex64::new(v, 0.0));
    }

    fn finish(self) -> Result<Csr<Complex64>> {
        Csr::from_triplets(self.n, self.n, &self.t)
    }
}

fn spinor_partition(grid: &Grid, junction_chi: bool) -> Partition {
    let nv = grid.graph().vertex_count();
    let mut junctions: Vec<usize> = (0..nv).collect();
    let mut chains = Vec::new();
    for (e, g) in grid.edge_grids().iter().enumerate() {
        let mut skip = Vec::new();
        if junction_chi {
            skip.push(grid.chi_index(e, 0));
            if !g.free_end {
                skip.push(grid.chi_index(e, g.cells - 1));
            }
            junctions.extend(&skip);
        }
        chains.push(grid.spinor_chain(e).filter(|i| !skip.contains(i)).collect());
    }
    Partition { junctions, chains }
}

fn scalar_partition(grid: &Grid, kind: NodeKind) -> Partition {
    match kind {
        NodeKind::Integer => {
            let nv = grid.graph().vertex_count();
            let chains = grid
                .edge_grids()
                .iter()
                .enumerate()
                .map(|(e, g)| {
                    let last = if g.free_end { g.cells } else { g.cells - 1 };
                    (1..=last).map(|j| grid.scalar_index(kind, e, j)).collect()
                })
                .collect();
            Partition {
                junctions: (0..nv).collect(),
                chains,
            }
        }
        NodeKind::Half => {
            let mut junctions = Vec::new();
            let mut chains = Vec::new();
            for (e, g) in grid.edge_grids().iter().enumerate() {
                let first = 1;
                let last = if g.free_end { g.cells - 1 } else { g.cells - 2 };
                junctions.push(grid.scalar_index(kind, e, 0));
                if !g.free_end {
                    junctions.push(grid.scalar_index(kind, e, g.cells - 1));
                }
                chains.push((first..=last).map(|j| grid.scalar_index(kind, e, j)).collect());
            }
            Partition { junctions, chains }
        }
    }
}

/// Kirchhoff form `sum_cells |u_{j+1} - u_j|^2 / (2 mu h)` with integer-node
/// indices given by `idx`.
fn kirchhoff_form(
    b: &mut Builder,
    grid: &Grid,
    mass_scale: f64,
    far: FarEnd,
    idx: impl Fn(usize, usize) -> usize,
) {
    for (e, g) in grid.edge_grids().iter().enumerate() {
        let k = 1.0 / (2.0 * mass_scale * g.h);
        for j in 0..g.cells {
            let (a, c) = (idx(e, j), idx(e, j + 1));
            b.add_real(a, a, k);
            b.add_real(c, c, k);
            b.add_real(a, c, -k);
            b.add_real(c, a, -k);
        }
        if g.free_end && far == FarEnd::Dirichlet {
            let a = idx(e, g.cells);
            b.add_real(a, a, k);
        }
    }
}

/// Delta-prime form `sum_n |a_n . chi|^2 / (2 mu w_n)`, where `a_n chi` is
/// the discrete derivative at integer node `n` (an oriented sum of the
/// adjacent half-node values at a vertex, a zero ghost beyond a free end).
fn delta_prime_form(
    b: &mut Builder,
    grid: &Grid,
    mass_scale: f64,
    idx: impl Fn(usize, usize) -> usize,
) {
    let push = |b: &mut Builder, w: f64, terms: &[(usize, f64)]| {
        let k = 1.0 / (2.0 * mass_scale * w);
        for &(i, si) in terms {
            for &(j, sj) in terms {
                b.add_real(i, j, k * si * sj);
            }
        }
    };
    for v in grid.graph().vertices() {
        let terms: Vec<(usize, f64)> = v
            .incidences
            .iter()
            .map(|inc| {
                let j = if inc.sign > 0 { 0 } else { grid.edge(inc.edge).cells - 1 };
                (idx(inc.edge, j), f64::from(inc.sign))
            })
            .collect();
        push(b, grid.vertex_weight(v.id), &terms);
    }
    for (e, g) in grid.edge_grids().iter().enumerate() {
        for j in 1..g.cells {
            push(b, g.h, &[(idx(e, j), 1.0), (idx(e, j - 1), -1.0)]);
        }
        if g.free_end {
            push(b, 0.5 * g.h, &[(idx(e, g.cells - 1), -1.0)]);
        }
    }
}

impl HermitianOperator {
    fn from_stiffness(
        kind: OperatorKind,
        layout: Layout,
        grid: Arc<Grid>,
        stiffness: Csr<Complex64>,
        weights: &[f64],
        partition: Partition,
    ) -> Self {
        let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let inv: Vec<f64> = sqrt_w.iter().map(|s| 1.0 / s).collect();
        let sym = stiffness.scaled(&inv, &inv);
        Self {
            kind,
            layout,
            grid,
            sym,
            sqrt_w,
            partition,
        }
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.sqrt_w.len()
    }

    /// Symmetrized matrix `S^{-1} H S^{-1}`.
    pub fn symmetric_matrix(&self) -> &Csr<Complex64> {
        &self.sym
    }

    /// Square roots of the quadrature weights.
    pub fn sqrt_weights(&self) -> &[f64] {
        &self.sqrt_w
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Physical matrix `W^{-1} H` acting on nodal values.
    pub fn matrix(&self) -> Csr<Complex64> {
        let inv: Vec<f64> = self.sqrt_w.iter().map(|s| 1.0 / s).collect();
        self.sym.scaled(&inv, &self.sqrt_w)
    }

    /// Largest entrywise deviation from Hermitian symmetry of the stored
    /// matrix.
    pub fn hermitian_defect(&self) -> f64 {
        self.sym.hermitian_defect()
    }

    pub fn to_scaled(&self, x: &[Complex64]) -> Vec<Complex64> {
        x.iter().zip(&self.sqrt_w).map(|(a, s)| a * *s).collect()
    }

    pub fn from_scaled(&self, y: &[Complex64]) -> Vec<Complex64> {
        y.iter().zip(&self.sqrt_w).map(|(a, s)| a / *s).collect()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: n,
            });
        }
        Ok(())
    }

    /// `A x` on nodal values.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(x.len())?;
        Ok(self.from_scaled(&self.sym.matvec(&self.to_scaled(x))))
    }

    /// Weighted quadratic form `<x, A x>`.
    pub fn quadratic_form(&self, x: &[Complex64]) -> Result<Complex64> {
        self.check_len(x.len())?;
        let y = self.to_scaled(x);
        let ay = self.sym.matvec(&y);
        Ok(y.iter().zip(&ay).map(|(a, b)| a.conj() * b).sum())
    }

    /// `A - s I` (same domain and weights).
    pub fn with_shift(&self, s: f64) -> HermitianOperator {
        Self {
            sym: self.sym.shifted(Complex64::new(s, 0.0)),
            ..self.clone()
        }
    }

    /// Factors `A - z` for repeated solves.
    pub fn factor_shifted(&self, z: Complex64) -> Result<ShiftedSolver> {
        let shifted = self.sym.shifted(z);
        let lu = BorderedLu::factor(&shifted, &self.partition)?;
        Ok(ShiftedSolver {
            z,
            shifted,
            lu,
            sqrt_w: self.sqrt_w.clone(),
        })
    }

    /// Solves `(A - z) x = b` to relative residual `1e-10` in the L2 norm.
    pub fn shifted_solve(&self, z: Complex64, b: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(b.len())?;
        self.factor_shifted(z)?.solve(b)
    }

    /// Eigenvalues by shift-invert Lanczos on the symmetrized matrix,
    /// converged to relative accuracy `1e-8`.
    pub fn extremal_eigs(&self, count: usize, which: EigWhich) -> Result<Vec<f64>> {
        let n = self.dim();
        if count == 0 || count > n {
            return Err(Error::Parameter(format!("cannot compute {count} of {n} eigenvalues")));
        }
        let max_iter = n.min(60 + 20 * count);
        match which {
            EigWhich::LargestMagnitude => {
                let r = lanczos_extremal(n, count, max_iter, 1e-10, |x| Ok(self.sym.matvec(x)))?;
                Ok(r.values)
            }
            EigWhich::SmallestMagnitude => self.nearest(0.0, count, max_iter),
            EigWhich::NearestTo(t) => self.nearest(t, count, max_iter),
            EigWhich::GapEdges => {
                let mut k = count.max(6).min(n);
                loop {
                    let vals = self.nearest(0.0, k, n.min(60 + 20 * k))?;
                    let neg = vals.iter().cloned().filter(|v| *v < 0.0).fold(f64::NAN, f64::max);
                    let pos = vals.iter().cloned().filter(|v| *v > 0.0).fold(f64::NAN, f64::min);
                    if (!neg.is_nan() && !pos.is_nan()) || k == n {
                        return Ok(vec![neg, pos]);
                    }
                    k = (2 * k).min(n);
                }
            }
        }
    }

    fn nearest(&self, target: f64, count: usize, max_iter: usize) -> Result<Vec<f64>> {
        let scale = self
            .sym
            .triplets()
            .map(|(_, _, v)| v.norm())
            .fold(0.0, f64::max)
            .max(1.0);
        let mut shift = target;
        let mut factor = self.factor_shifted(Complex64::new(shift, 0.0));
        if factor.is_err() {
            // exactly singular at the target: step off it
            shift = target - 1e-7 * scale;
            factor = self.factor_shifted(Complex64::new(shift, 0.0));
        }
        let factor = factor?;
        let r = lanczos_extremal(self.dim(), count, max_iter, 1e-10, |x| {
            Ok(factor.lu.solve_refined(&factor.shifted, x, 1e-13, 2).0)
        })?;
        let mut vals: Vec<f64> = r.values.iter().map(|t| shift + 1.0 / t).collect();
        vals.sort_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()));
        Ok(vals)
    }

    /// Writes the physical matrix as `row,col,re,im` lines.
    pub fn write_coo<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,col,re,im")?;
        for (r, c, v) in self.matrix().triplets() {
            writeln!(w, "{r},{c},{},{}", v.re, v.im)?;
        }
        Ok(())
    }
}

/// Pre-factored `A - z`.
pub struct ShiftedSolver {
    z: Complex64,
    shifted: Csr<Complex64>,
    lu: BorderedLu<Complex64>,
    sqrt_w: Vec<f64>,
}

impl ShiftedSolver {
    pub const RTOL: f64 = 1e-10;

    pub fn shift(&self) -> Complex64 {
        self.z
    }

    pub fn solve(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        self.solve_tol(b, Self::RTOL)
    }

    /// As [`solve`](Self::solve) with a caller-chosen relative tolerance.
    pub fn solve_tol(&self, b: &[Complex64], rtol: f64) -> Result<Vec<Complex64>> {
        if b.len() != self.sqrt_w.len() {
            return Err(Error::Dimension {
                expected: self.sqrt_w.len(),
                got: b.len(),
            });
        }
        let sb: Vec<Complex64> = b.iter().zip(&self.sqrt_w).map(|(a, s)| a * *s).collect();
        if sb.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
            return Ok(vec![Complex64::new(0.0, 0.0); b.len()]);
        }
        let (y, rel) = self.lu.solve_refined(&self.shifted, &sb, rtol * 0.1, 3);
        if !(rel <= rtol) {
            return Err(Error::Solver {
                message: format!("shifted solve at z = {} missed tolerance", self.z),
                residual: rel,
            });
        }
        Ok(y.iter().zip(&self.sqrt_w).map(|(a, s)| a / *s).collect())
    }
}

/// Dirac operator `-i c sigma_1 d/dx + m c^2 sigma_3` with continuity of the
/// first component (shared vertex unknown), the oriented sum of second
/// components imposed weakly through the vertex row, and a zero ghost for
/// the second component beyond truncation points.
pub fn assemble_dirac(grid: &Arc<Grid>, params: PhysParams) -> Result<HermitianOperator> {
    params.validate()?;
    let (m, c) = (params.m, params.c);
    let mc2 = m * c * c;
    let ic = Complex64::new(0.0, c);
    let w = grid.spinor_weights();
    let mut b = Builder::new(grid.spinor_len());
    for (i, wi) in w.iter().enumerate().take(grid.graph().vertex_count()) {
        b.add_real(i, i, mc2 * wi);
    }
    for (e, g) in grid.edge_grids().iter().enumerate() {
        for j in 0..g.cells {
            let chi = grid.chi_index(e, j);
            let left = grid.phi_index(e, j);
            let right = grid.phi_index(e, j + 1);
            b.add_real(chi, chi, -mc2 * g.h);
            b.add(chi, right, -ic);
            b.add(chi, left, ic);
            b.add(right, chi, ic);
            b.add(left, chi, -ic);
        }
        let last = if g.free_end { g.cells } else { g.cells - 1 };
        for j in 1..=last {
            let i = grid.phi_index(e, j);
            b.add_real(i, i, mc2 * w[i]);
        }
    }
    Ok(HermitianOperator::from_stiffness(
        OperatorKind::Dirac,
        Layout::Spinor,
        grid.clone(),
        b.finish()?,
        w,
        spinor_partition(grid, false),
    ))
}

/// `-u''/(2 mass_scale)` on integer nodes with Kirchhoff vertex conditions
/// (flux-sum vertex row).
pub fn assemble_kirchhoff_laplacian(
    grid: &Arc<Grid>,
    mass_scale: f64,
    far: FarEnd,
) -> Result<HermitianOperator> {
    check_mass(mass_scale)?;
    let mut b = Builder::new(grid.len(NodeKind::Integer));
    kirchhoff_form(&mut b, grid, mass_scale, far, |e, j| {
        grid.scalar_index(NodeKind::Integer, e, j)
    });
    Ok(HermitianOperator::from_stiffness(
        OperatorKind::KirchhoffLaplacian,
        Layout::Scalar(NodeKind::Integer),
        grid.clone(),
        b.finish()?,
        &grid.weights(NodeKind::Integer),
        scalar_partition(grid, NodeKind::Integer),
    ))
}

/// `-u''/(2 mass_scale)` on half-nodes with homogeneous delta-prime vertex
/// conditions (oriented value sum zero, common derivative).
pub fn assemble_delta_prime_laplacian(grid: &Arc<Grid>, mass_scale: f64) -> Result<HermitianOperator> {
    check_mass(mass_scale)?;
    let mut b = Builder::new(grid.len(NodeKind::Half));
    delta_prime_form(&mut b, grid, mass_scale, |e, j| grid.scalar_index(NodeKind::Half, e, j));
    Ok(HermitianOperator::from_stiffness(
        OperatorKind::DeltaPrimeLaplacian,
        Layout::Scalar(NodeKind::Half),
        grid.clone(),
        b.finish()?,
        &grid.weights(NodeKind::Half),
        scalar_partition(grid, NodeKind::Half),
    ))
}

/// Kirchhoff Laplacian on the first spinor component and delta-prime
/// Laplacian on the second. With `mass_scale = 1/2` its image under
/// `c^2 (.) + m^2 c^4` is the square of the Dirac operator.
pub fn assemble_big_laplacian(grid: &Arc<Grid>, mass_scale: f64) -> Result<HermitianOperator> {
    check_mass(mass_scale)?;
    let mut b = Builder::new(grid.spinor_len());
    kirchhoff_form(&mut b, grid, mass_scale, FarEnd::Free, |e, j| grid.phi_index(e, j));
    delta_prime_form(&mut b, grid, mass_scale, |e, j| grid.chi_index(e, j));
    Ok(HermitianOperator::from_stiffness(
        OperatorKind::BigLaplacian,
        Layout::Spinor,
        grid.clone(),
        b.finish()?,
        grid.spinor_weights(),
        spinor_partition(grid, true),
    ))
}

fn check_mass(mass_scale: f64) -> Result<()> {
    if !(mass_scale > 0.0 && mass_scale.is_finite()) {
        return Err(Error::Parameter(format!("mass scale must be positive, got {mass_scale}")));
    }
    Ok(())
}
