//! Staggered discretization of graph fields.
//!
//! On every edge the first spinor component lives on integer nodes
//! `x_j = j h` and the second on half-nodes `x_{j+1/2} = (j + 1/2) h`.
//! Values at finite vertices are stored once and shared by all incident
//! edges, so continuity of the first component holds by construction.
//!
//! Flat spinor layout: one slot per finite vertex, then for each edge the
//! interleaved chain `chi_0, phi_1, chi_1, ..., phi_{M-1}, chi_{M-1}`
//! followed by `phi_M` when the edge ends at a truncation point.

use std::io::Write;
use std::sync::Arc;

use nalgebra::ComplexField;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::graph::{EdgeId, EdgeLength, Endpoint, MetricGraph, VertexId};

/// Discretization of one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeGrid {
    pub h: f64,
    /// Number of cells `M`; integer nodes are `0..=M`.
    pub cells: usize,
    /// True for truncated half-lines: node `M` is an ordinary unknown.
    pub free_end: bool,
}

impl EdgeGrid {
    pub fn length(&self) -> f64 {
        self.h * self.cells as f64
    }
}

/// Which node family a scalar field lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Integer,
    Half,
}

/// One quadrature node of the pointwise density `|psi|^2`:
/// `rho = sum coef * |psi_i|^2` with quadrature weight `weight`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityNode {
    pub weight: f64,
    pub terms: [(usize, f64); 3],
    pub len: usize,
}

impl DensityNode {
    fn new(weight: f64, terms: &[(usize, f64)]) -> Self {
        let mut t = [(0, 0.0); 3];
        t[..terms.len()].copy_from_slice(terms);
        Self {
            weight,
            terms: t,
            len: terms.len(),
        }
    }

    pub fn terms(&self) -> &[(usize, f64)] {
        &self.terms[..self.len]
    }

    pub fn rho(&self, data: &[Complex64]) -> f64 {
        self.terms().iter().map(|&(i, c)| c * data[i].norm_sqr()).sum()
    }
}

/// Grid on a metric graph (per-edge spacing and node counts plus the flat
/// layouts derived from them).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    graph: MetricGraph,
    edges: Vec<EdgeGrid>,
    spinor_offsets: Vec<usize>,
    spinor_len: usize,
    integer_offsets: Vec<usize>,
    integer_len: usize,
    half_offsets: Vec<usize>,
    half_len: usize,
    spinor_weights: Vec<f64>,
    density: Vec<DensityNode>,
}

impl Grid {
    /// Uniform spacing `h` on every edge; half-lines are cut at `truncation`.
    pub fn uniform(graph: MetricGraph, truncation: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        let edges = graph
            .edges()
            .iter()
            .map(|e| {
                let length = match e.length {
                    EdgeLength::Bounded(l) => l,
                    EdgeLength::Unbounded => truncation,
                };
                let cells = (length / h).round();
                if (cells * h - length).abs() > 1e-9 * length.max(1.0) {
                    return Err(Error::InvalidGrid(format!(
                        "edge {} of length {length} is not a multiple of h = {h}",
                        e.id
                    )));
                }
                Ok(EdgeGrid {
                    h,
                    cells: cells as usize,
                    free_end: !e.is_bounded(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(graph, edges)
    }

    pub fn new(graph: MetricGraph, edges: Vec<EdgeGrid>) -> Result<Self> {
        if edges.len() != graph.edge_count() {
            return Err(Error::Dimension {
                expected: graph.edge_count(),
                got: edges.len(),
            });
        }
        for (g, e) in edges.iter().zip(graph.edges()) {
            if !(g.h > 0.0) || g.cells < 4 {
                return Err(Error::InvalidGrid(format!(
                    "edge {} needs h > 0 and at least 4 cells (h = {}, M = {})",
                    e.id, g.h, g.cells
                )));
            }
            if g.free_end == e.is_bounded() {
                return Err(Error::InvalidGrid(format!(
                    "edge {}: free ends exactly on half-lines",
                    e.id
                )));
            }
            if let EdgeLength::Bounded(l) = e.length {
                if (g.length() - l).abs() > 1e-9 * l.max(1.0) {
                    return Err(Error::InvalidGrid(format!(
                        "edge {}: M h = {} differs from length {l}",
                        e.id,
                        g.length()
                    )));
                }
            }
        }
        let nv = graph.vertex_count();
        let mut spinor_offsets = Vec::with_capacity(edges.len());
        let mut integer_offsets = Vec::with_capacity(edges.len());
        let mut half_offsets = Vec::with_capacity(edges.len());
        let (mut s, mut i, mut hf) = (nv, nv, 0);
        for g in &edges {
            spinor_offsets.push(s);
            integer_offsets.push(i);
            half_offsets.push(hf);
            s += 2 * g.cells - 1 + usize::from(g.free_end);
            i += g.cells - 1 + usize::from(g.free_end);
            hf += g.cells;
        }
        let mut grid = Self {
            graph,
            edges,
            spinor_offsets,
            spinor_len: s,
            integer_offsets,
            integer_len: i,
            half_offsets,
            half_len: hf,
            spinor_weights: Vec::new(),
            density: Vec::new(),
        };
        grid.spinor_weights = grid.build_spinor_weights();
        grid.density = grid.build_density();
        Ok(grid)
    }

    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    pub fn edge(&self, e: EdgeId) -> &EdgeGrid {
        &self.edges[e]
    }

    pub fn edge_grids(&self) -> &[EdgeGrid] {
        &self.edges
    }

    pub fn spinor_len(&self) -> usize {
        self.spinor_len
    }

    pub fn len(&self, kind: NodeKind) -> usize {
        match kind {
            NodeKind::Integer => self.integer_len,
            NodeKind::Half => self.half_len,
        }
    }

    /// Spinor-layout index of `phi` at integer node `j` of edge `e`.
    pub fn phi_index(&self, e: EdgeId, j: usize) -> usize {
        let g = &self.edges[e];
        let edge = &self.graph.edges()[e];
        debug_assert!(j <= g.cells);
        if j == 0 {
            edge.head
        } else if j == g.cells && !g.free_end {
            match edge.tail {
                Endpoint::Vertex(v) => v,
                Endpoint::Infinity => unreachable!("bounded edge ends at a vertex"),
            }
        } else {
            self.spinor_offsets[e] + 2 * j - 1
        }
    }

    /// Spinor-layout index of `chi` at half-node `j` (position `(j+1/2)h`).
    pub fn chi_index(&self, e: EdgeId, j: usize) -> usize {
        debug_assert!(j < self.edges[e].cells);
        self.spinor_offsets[e] + 2 * j
    }

    /// Global positions of one edge's chain inside the spinor layout.
    pub fn spinor_chain(&self, e: EdgeId) -> std::ops::Range<usize> {
        let g = &self.edges[e];
        let start = self.spinor_offsets[e];
        start..start + 2 * g.cells - 1 + usize::from(g.free_end)
    }

    /// Index into a scalar field of the given kind.
    pub fn scalar_index(&self, kind: NodeKind, e: EdgeId, j: usize) -> usize {
        let g = &self.edges[e];
        match kind {
            NodeKind::Half => self.half_offsets[e] + j,
            NodeKind::Integer => {
                let edge = &self.graph.edges()[e];
                if j == 0 {
                    edge.head
                } else if j == g.cells && !g.free_end {
                    match edge.tail {
                        Endpoint::Vertex(v) => v,
                        Endpoint::Infinity => unreachable!(),
                    }
                } else {
                    self.integer_offsets[e] + j - 1
                }
            }
        }
    }

    /// Vertex incident to an end of edge `e` (`at_head` selects `x = 0`).
    pub fn end_vertex(&self, e: EdgeId, at_head: bool) -> Option<VertexId> {
        let edge = &self.graph.edges()[e];
        if at_head {
            Some(edge.head)
        } else {
            match edge.tail {
                Endpoint::Vertex(v) => Some(v),
                Endpoint::Infinity => None,
            }
        }
    }

    /// Quadrature weight of a finite vertex: half a cell per incident end.
    pub fn vertex_weight(&self, v: VertexId) -> f64 {
        self.graph.vertices()[v]
            .incidences
            .iter()
            .map(|inc| 0.5 * self.edges[inc.edge].h)
            .sum()
    }

    fn build_spinor_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.spinor_len];
        for v in 0..self.graph.vertex_count() {
            w[v] = self.vertex_weight(v);
        }
        for (e, g) in self.edges.iter().enumerate() {
            for j in 0..g.cells {
                w[self.chi_index(e, j)] = g.h;
            }
            for j in 1..g.cells {
                w[self.phi_index(e, j)] = g.h;
            }
            if g.free_end {
                w[self.phi_index(e, g.cells)] = 0.5 * g.h;
            }
        }
        w
    }

    /// Trapezoid weights on integer nodes (shared vertices included).
    pub fn weights(&self, kind: NodeKind) -> Vec<f64> {
        match kind {
            NodeKind::Half => {
                let mut w = vec![0.0; self.half_len];
                for (e, g) in self.edges.iter().enumerate() {
                    for j in 0..g.cells {
                        w[self.half_offsets[e] + j] = g.h;
                    }
                }
                w
            }
            NodeKind::Integer => {
                let mut w = vec![0.0; self.integer_len];
                for v in 0..self.graph.vertex_count() {
                    w[v] = self.vertex_weight(v);
                }
                for (e, g) in self.edges.iter().enumerate() {
                    for j in 1..g.cells {
                        w[self.scalar_index(NodeKind::Integer, e, j)] = g.h;
                    }
                    if g.free_end {
                        w[self.scalar_index(NodeKind::Integer, e, g.cells)] = 0.5 * g.h;
                    }
                }
                w
            }
        }
    }

    /// Quadrature weights of the spinor layout (trapezoid for the first
    /// component, midpoint for the second).
    pub fn spinor_weights(&self) -> &[f64] {
        &self.spinor_weights
    }

    fn build_density(&self) -> Vec<DensityNode> {
        let mut nodes = Vec::new();
        for (e, g) in self.edges.iter().enumerate() {
            let m = g.cells;
            nodes.push(DensityNode::new(
                0.5 * g.h,
                &[(self.phi_index(e, 0), 1.0), (self.chi_index(e, 0), 1.0)],
            ));
            for j in 1..m {
                nodes.push(DensityNode::new(
                    g.h,
                    &[
                        (self.phi_index(e, j), 1.0),
                        (self.chi_index(e, j - 1), 0.5),
                        (self.chi_index(e, j), 0.5),
                    ],
                ));
            }
            let tail_chi = if g.free_end { 0.5 } else { 1.0 };
            nodes.push(DensityNode::new(
                0.5 * g.h,
                &[(self.phi_index(e, m), 1.0), (self.chi_index(e, m - 1), tail_chi)],
            ));
        }
        nodes
    }

    /// Density quadrature nodes on integer nodes. The second component enters
    /// through the mean of the squared moduli at the two adjacent half-nodes
    /// (the nearest one at a vertex, zero beyond a truncation wall).
    pub fn density_nodes(&self) -> &[DensityNode] {
        &self.density
    }

    /// Pointwise coefficient `g_i` of the discrete Kerr term
    /// `|psi|^{p-2} psi`, i.e. `(1/w_i) dV/d|psi_i|^2 * 2` for
    /// `V = (1/p) sum W rho^{p/2}`. Depends on moduli only.
    pub fn nonlinear_coefficients(&self, data: &[Complex64], p: f64) -> Vec<f64> {
        let q = 0.5 * (p - 2.0);
        let mut g = vec![0.0; self.spinor_len];
        for node in &self.density {
            let rho = node.rho(data);
            if rho <= 0.0 {
                continue;
            }
            let r = node.weight * rho.powf(q);
            for &(i, c) in node.terms() {
                g[i] += c * r;
            }
        }
        for (gi, wi) in g.iter_mut().zip(&self.spinor_weights) {
            *gi /= wi;
        }
        g
    }

    pub fn position(&self, kind: NodeKind, e: EdgeId, j: usize) -> f64 {
        let h = self.edges[e].h;
        match kind {
            NodeKind::Integer => j as f64 * h,
            NodeKind::Half => (j as f64 + 0.5) * h,
        }
    }
}

/// Two-component complex field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    grid: Arc<Grid>,
    data: Vec<Complex64>,
}

/// Per-vertex vertex-condition diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexResidual {
    pub vertex: VertexId,
    pub continuity_max: f64,
    pub kirchhoff_sum: Complex64,
}

/// Extrapolation order for half-node traces at a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceOrder {
    First,
    Second,
}

/// `(3 f_{1/2} - f_{3/2}) / 2` or `f_{1/2}`, oriented from the vertex inward.
pub(crate) fn half_trace<T: ComplexField<RealField = f64> + Copy>(
    near: T,
    next: T,
    order: TraceOrder,
) -> T {
    match order {
        TraceOrder::First => near,
        TraceOrder::Second => (near * T::from_real(3.0) - next) * T::from_real(0.5),
    }
}

impl SpinorField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.spinor_len();
        Self {
            grid,
            data: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_vec(grid: Arc<Grid>, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.spinor_len() {
            return Err(Error::Dimension {
                expected: grid.spinor_len(),
                got: data.len(),
            });
        }
        Ok(Self { grid, data })
    }

    /// Samples `phi(e, x)` on integer nodes and `chi(e, x)` on half-nodes.
    /// Shared vertex values are taken from the first incident edge.
    pub fn from_fn(
        grid: Arc<Grid>,
        phi: impl Fn(EdgeId, f64) -> Complex64,
        chi: impl Fn(EdgeId, f64) -> Complex64,
    ) -> Self {
        let mut f = Self::zeros(grid.clone());
        let mut vertex_set = vec![false; grid.graph().vertex_count()];
        for (e, g) in grid.edge_grids().iter().enumerate() {
            for j in 0..=g.cells {
                let idx = grid.phi_index(e, j);
                if idx < vertex_set.len() {
                    if vertex_set[idx] {
                        continue;
                    }
                    vertex_set[idx] = true;
                }
                f.data[idx] = phi(e, grid.position(NodeKind::Integer, e, j));
            }
            for j in 0..g.cells {
                f.data[grid.chi_index(e, j)] = chi(e, grid.position(NodeKind::Half, e, j));
            }
        }
        f
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn phi(&self, e: EdgeId, j: usize) -> Complex64 {
        self.data[self.grid.phi_index(e, j)]
    }

    pub fn chi(&self, e: EdgeId, j: usize) -> Complex64 {
        self.data[self.grid.chi_index(e, j)]
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.data.len(),
                got: other.data.len(),
            })
        }
    }

    /// Weighted inner product `<self, other>` (antilinear in `self`).
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.check_same_grid(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .zip(self.grid.spinor_weights())
            .map(|((a, b), w)| a.conj() * b * *w)
            .sum())
    }

    pub fn l2_norm(&self) -> f64 {
        self.mass().sqrt()
    }

    /// Squared L2 norm.
    pub fn mass(&self) -> f64 {
        self.data
            .iter()
            .zip(self.grid.spinor_weights())
            .map(|(a, w)| a.norm_sqr() * w)
            .sum()
    }

    /// Quadrature of `int |psi|^p`, with `|psi|` the pointwise C^2 modulus.
    pub fn lp_power_integral(&self, p: f64) -> Result<f64> {
        if !(p > 2.0) {
            return Err(Error::Parameter(format!("need p > 2, got {p}")));
        }
        Ok(self
            .grid
            .density_nodes()
            .iter()
            .map(|n| n.weight * n.rho(&self.data).powf(0.5 * p))
            .sum())
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest `|phi|` over integer nodes.
    pub fn sup_phi(&self) -> f64 {
        let g = &self.grid;
        let mut best = 0.0f64;
        for (e, eg) in g.edge_grids().iter().enumerate() {
            for j in 0..=eg.cells {
                best = best.max(self.phi(e, j).norm());
            }
        }
        best
    }

    /// Trace of `chi` at one end of an edge.
    pub fn chi_trace(&self, e: EdgeId, at_head: bool, order: TraceOrder) -> Complex64 {
        let m = self.grid.edge(e).cells;
        if at_head {
            half_trace(self.chi(e, 0), self.chi(e, 1), order)
        } else {
            half_trace(self.chi(e, m - 1), self.chi(e, m - 2), order)
        }
    }

    pub fn vertex_residuals(&self, order: TraceOrder) -> Vec<VertexResidual> {
        let grid = &self.grid;
        grid.graph()
            .vertices()
            .iter()
            .map(|v| {
                let mut continuity_max = 0.0f64;
                let mut kirchhoff_sum = Complex64::new(0.0, 0.0);
                let mut reference: Option<Complex64> = None;
                for inc in &v.incidences {
                    let at_head = inc.sign > 0;
                    let j = if at_head { 0 } else { grid.edge(inc.edge).cells };
                    let value = self.phi(inc.edge, j);
                    match reference {
                        None => reference = Some(value),
                        Some(r) => continuity_max = continuity_max.max((value - r).norm()),
                    }
                    kirchhoff_sum +=
                        self.chi_trace(inc.edge, at_head, order) * f64::from(inc.sign);
                }
                VertexResidual {
                    vertex: v.id,
                    continuity_max,
                    kirchhoff_sum,
                }
            })
            .collect()
    }

    pub fn scale(&mut self, a: Complex64) {
        for z in &mut self.data {
            *z *= a;
        }
    }

    /// Writes `edge_id,node_kind,x,re_phi,im_phi,re_chi,im_chi`; the
    /// component not stored at a node is left empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "edge_id,node_kind,x,re_phi,im_phi,re_chi,im_chi")?;
        for (e, g) in self.grid.edge_grids().iter().enumerate() {
            for j in 0..=g.cells {
                let z = self.phi(e, j);
                let x = self.grid.position(NodeKind::Integer, e, j);
                writeln!(w, "{e},int,{x},{},{},,", z.re, z.im)?;
                if j < g.cells {
                    let z = self.chi(e, j);
                    let x = self.grid.position(NodeKind::Half, e, j);
                    writeln!(w, "{e},half,{x},,,{},{}", z.re, z.im)?;
                }
            }
        }
        Ok(())
    }
}

/// Scalar field on integer nodes (shared vertex values) or half-nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    grid: Arc<Grid>,
    kind: NodeKind,
    data: Vec<T>,
}

impl<T: ComplexField<RealField = f64> + Copy> ScalarField<T> {
    pub fn zeros(grid: Arc<Grid>, kind: NodeKind) -> Self {
        let n = grid.len(kind);
        Self {
            grid,
            kind,
            data: vec![T::zero(); n],
        }
    }

    pub fn from_vec(grid: Arc<Grid>, kind: NodeKind, data: Vec<T>) -> Result<Self> {
        if data.len() != grid.len(kind) {
            return Err(Error::Dimension {
                expected: grid.len(kind),
                got: data.len(),
            });
        }
        Ok(Self { grid, kind, data })
    }

    pub fn from_fn(grid: Arc<Grid>, kind: NodeKind, f: impl Fn(EdgeId, f64) -> T) -> Self {
        let mut out = Self::zeros(grid.clone(), kind);
        for (e, g) in grid.edge_grids().iter().enumerate().rev() {
            let range = match kind {
                NodeKind::Integer => 0..g.cells + 1,
                NodeKind::Half => 0..g.cells,
            };
            for j in range {
                out.data[grid.scalar_index(kind, e, j)] = f(e, grid.position(kind, e, j));
            }
        }
        out
    }

    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn get(&self, e: EdgeId, j: usize) -> T {
        self.data[self.grid.scalar_index(self.kind, e, j)]
    }

    pub fn set(&mut self, e: EdgeId, j: usize, value: T) {
        let i = self.grid.scalar_index(self.kind, e, j);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn l2_norm(&self) -> f64 {
        self.data
            .iter()
            .zip(self.grid.weights(self.kind))
            .map(|(a, w)| a.modulus_squared() * w)
            .sum::<f64>()
            .sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().map(|a| a.modulus()).fold(0.0, f64::max)
    }

    /// Largest jump between the edge views of a shared vertex value; zero
    /// for integer-node fields by construction.
    pub fn continuity_max(&self) -> f64 {
        if self.kind == NodeKind::Half {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for v in self.grid.graph().vertices() {
            let values: Vec<T> = v
                .incidences
                .iter()
                .map(|inc| {
                    let j = if inc.sign > 0 { 0 } else { self.grid.edge(inc.edge).cells };
                    self.get(inc.edge, j)
                })
                .collect();
            for w in values.windows(2) {
                worst = worst.max((w[1] - w[0]).modulus());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::StarSpec;

    fn star_grid(n: usize, l: f64, h: f64) -> Arc<Grid> {
        Arc::new(Grid::uniform(MetricGraph::star(&StarSpec::new(n, l)).unwrap(), l, h).unwrap())
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn sech(x: f64) -> f64 {
        1.0 / x.cosh()
    }

    #[test]
    fn layout_is_a_bijection() {
        let grid = star_grid(3, 2.0, 0.25);
        let mut seen = vec![0usize; grid.spinor_len()];
        for (e, g) in grid.edge_grids().iter().enumerate() {
            for j in 0..=g.cells {
                if j > 0 {
                    seen[grid.phi_index(e, j)] += 1;
                }
            }
            for j in 0..g.cells {
                seen[grid.chi_index(e, j)] += 1;
            }
        }
        seen[0] += 1;
        assert!(seen.iter().all(|&s| s == 1));
        let w: f64 = grid.spinor_weights().iter().sum();
        // both components integrate 1 over three edges of length 2
        assert!((w - 12.0).abs() < 1e-12);
    }

    #[test]
    fn grid_validation() {
        let g = MetricGraph::star(&StarSpec::new(3, 1.0)).unwrap();
        assert!(Grid::uniform(g.clone(), 1.0, 0.3).is_err());
        assert!(Grid::uniform(g.clone(), 1.0, 0.5).is_err());
        assert!(Grid::uniform(g, 1.0, 0.25).is_ok());
    }

    #[test]
    fn zero_field_norms() {
        let grid = star_grid(3, 5.0, 0.1);
        let f = SpinorField::zeros(grid);
        assert_eq!(f.l2_norm(), 0.0);
        assert_eq!(f.lp_power_integral(4.0).unwrap(), 0.0);
        assert!(f.lp_power_integral(2.0).is_err());
    }

    #[test]
    fn constant_field_on_a_half_line() {
        let grid = Arc::new(Grid::uniform(MetricGraph::half_line(), 10.0, 0.1).unwrap());
        let f = SpinorField::from_fn(grid, |_, _| c(1.0), |_, _| c(0.0));
        assert!((f.l2_norm() - 10f64.sqrt()).abs() < 1e-12);
        assert!((f.lp_power_integral(4.0).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn soliton_norms_converge_at_second_order() {
        // phi = exp(-x) on each of three half-lines:
        // int |phi|^2 = 3/2 and int |phi|^4 = 3/4.
        let mut errs2 = Vec::new();
        let mut errs4 = Vec::new();
        for h in [0.1, 0.05, 0.025] {
            let grid = star_grid(3, 40.0, h);
            let f = SpinorField::from_fn(
                grid,
                |_, x| c((-x).exp()),
                |_, _| c(0.0),
            );
            errs2.push((f.mass() - 1.5).abs());
            errs4.push((f.lp_power_integral(4.0).unwrap() - 0.75).abs());
        }
        for errs in [errs2, errs4] {
            for w in errs.windows(2) {
                let ratio = w[0] / w[1];
                assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
            }
        }
    }

    #[test]
    fn vertex_residuals_of_even_profiles() {
        // chi = -i phi'/2m with phi even: the trace sum vanishes as h -> 0.
        let mut sums = Vec::new();
        for h in [0.1, 0.05] {
            let grid = star_grid(3, 20.0, h);
            let f = SpinorField::from_fn(
                grid,
                |_, x| c(sech(x)),
                |_, x| Complex64::new(0.0, sech(x) * x.tanh()),
            );
            let r = f.vertex_residuals(TraceOrder::Second);
            assert_eq!(r.len(), 1);
            assert_eq!(r[0].continuity_max, 0.0);
            sums.push(r[0].kirchhoff_sum.norm());
        }
        assert!(sums[0] < 1e-2);
        // odd traces vanish to third order
        assert!(sums[0] / sums[1] > 3.5);
    }

    #[test]
    fn shifted_pair_satisfies_kirchhoff() {
        // N = 4: phi(x - a) on two edges and phi(x + a) on the other two.
        let a = 1.0;
        let grid = star_grid(4, 20.0, 0.05);
        let dphi = |x: f64| -sech(x) * x.tanh();
        let f = SpinorField::from_fn(
            grid,
            |e, x| c(if e < 2 { sech(x - a) } else { sech(x + a) }),
            |e, x| c(if e < 2 { dphi(x - a) } else { dphi(x + a) }),
        );
        let r = f.vertex_residuals(TraceOrder::Second)[0];
        assert!(r.kirchhoff_sum.norm() < 1e-3, "{}", r.kirchhoff_sum);
        assert_eq!(r.continuity_max, 0.0);
        let first = f.vertex_residuals(TraceOrder::First)[0];
        assert!(first.kirchhoff_sum.norm() > r.kirchhoff_sum.norm());
    }

    #[test]
    fn csv_header_and_rows() {
        let grid = star_grid(2, 1.0, 0.25);
        let f = SpinorField::zeros(grid);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "edge_id,node_kind,x,re_phi,im_phi,re_chi,im_chi"
        );
        // 2 edges x (5 integer + 4 half) rows
        assert_eq!(lines.count(), 18);
    }

    #[test]
    fn scalar_field_continuity_is_structural() {
        let grid = star_grid(3, 2.0, 0.25);
        let u = ScalarField::<f64>::from_fn(grid.clone(), NodeKind::Integer, |e, x| {
            e as f64 + x
        });
        assert_eq!(u.continuity_max(), 0.0);
        let w = ScalarField::<f64>::from_fn(grid, NodeKind::Half, |_, x| x);
        assert!((w.l2_norm() - (3.0 * 8.0 / 3.0f64 - 3.0 * 0.25 * 0.25 * 2.0 / 12.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_coefficients_interior_are_local_densities() {
        let grid = star_grid(3, 2.0, 0.25);
        let f = SpinorField::from_fn(grid.clone(), |_, _| c(2.0), |_, _| c(1.0));
        let g = grid.nonlinear_coefficients(f.as_slice(), 4.0);
        // interior phi node: rho = 4 + 1
        assert!((g[grid.phi_index(0, 3)] - 5.0).abs() < 1e-12);
        assert!((g[grid.chi_index(0, 3)] - 5.0).abs() < 1e-12);
    }
}
