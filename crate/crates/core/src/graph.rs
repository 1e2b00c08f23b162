//! Metric-graph topology: edges parametrized by intervals or half-lines,
//! finite vertices with incidence lists, and the orientation signs used by
//! the vertex conditions.

use crate::error::{Error, Result};

pub type VertexId = usize;
pub type EdgeId = usize;

/// Length of an edge. Half-lines keep `Unbounded` even though every
/// discretization truncates them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeLength {
    Bounded(f64),
    Unbounded,
}

/// The far endpoint of an edge: a finite vertex or the vertex at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Vertex(VertexId),
    Infinity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub length: EdgeLength,
    /// Vertex at `x = 0`.
    pub head: VertexId,
    /// Vertex at `x = length`; `Infinity` exactly for unbounded edges.
    pub tail: Endpoint,
}

impl Edge {
    pub fn is_bounded(&self) -> bool {
        matches!(self.length, EdgeLength::Bounded(_))
    }

    /// +1 if the trace at `v` is taken at `x = 0`, -1 if at `x = length`.
    /// A loop edge contributes both signs; this returns the head sign for it.
    pub fn orientation_sign_at(&self, v: VertexId) -> Option<i8> {
        if self.head == v {
            Some(1)
        } else if self.tail == Endpoint::Vertex(v) {
            Some(-1)
        } else {
            None
        }
    }
}

/// One end of an edge incident to a finite vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub edge: EdgeId,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: VertexId,
    pub incidences: Vec<Incidence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    edges: Vec<Edge>,
    vertices: Vec<Vertex>,
    compact_core: Vec<EdgeId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarSpec {
    /// Number of half-lines.
    pub n: usize,
    /// Numerical cutoff of every half-line.
    pub truncation_length: f64,
}

impl StarSpec {
    pub fn new(n: usize, truncation_length: f64) -> Self {
        Self {
            n,
            truncation_length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidTopology(format!(
                "a star graph needs at least 2 half-lines, got {}",
                self.n
            )));
        }
        if !(self.truncation_length > 0.0 && self.truncation_length.is_finite()) {
            return Err(Error::Parameter(format!(
                "truncation length must be positive, got {}",
                self.truncation_length
            )));
        }
        Ok(())
    }
}

impl MetricGraph {
    /// Builds a graph from `(length, head, tail)` triples over `vertex_count`
    /// finite vertices.
    pub fn new(vertex_count: usize, edges: &[(EdgeLength, VertexId, Endpoint)]) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::InvalidTopology("graph has no finite vertex".into()));
        }
        let mut vertices: Vec<Vertex> = (0..vertex_count)
            .map(|id| Vertex {
                id,
                incidences: Vec::new(),
            })
            .collect();
        let mut out = Vec::with_capacity(edges.len());
        for (id, &(length, head, tail)) in edges.iter().enumerate() {
            if head >= vertex_count {
                return Err(Error::UnknownVertex(head));
            }
            match (length, tail) {
                (EdgeLength::Bounded(l), Endpoint::Vertex(t)) => {
                    if !(l > 0.0 && l.is_finite()) {
                        return Err(Error::InvalidTopology(format!(
                            "edge {id} has non-positive length {l}"
                        )));
                    }
                    if t >= vertex_count {
                        return Err(Error::UnknownVertex(t));
                    }
                }
                (EdgeLength::Unbounded, Endpoint::Infinity) => {}
                _ => {
                    return Err(Error::InvalidTopology(format!(
                        "edge {id}: unbounded edges end at infinity, bounded edges at a vertex"
                    )))
                }
            }
            vertices[head].incidences.push(Incidence { edge: id, sign: 1 });
            if let Endpoint::Vertex(t) = tail {
                vertices[t].incidences.push(Incidence { edge: id, sign: -1 });
            }
            out.push(Edge {
                id,
                length,
                head,
                tail,
            });
        }
        let compact_core = out
            .iter()
            .filter(|e| e.is_bounded())
            .map(|e| e.id)
            .collect();
        let graph = Self {
            edges: out,
            vertices,
            compact_core,
        };
        graph.check_connected()?;
        Ok(graph)
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.vertices.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for inc in &self.vertices[v].incidences {
                let e = &self.edges[inc.edge];
                let mut others = vec![e.head];
                if let Endpoint::Vertex(t) = e.tail {
                    others.push(t);
                }
                for w in others {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidTopology(format!("vertex {v} is disconnected")));
        }
        if self.vertices.iter().any(|v| v.incidences.is_empty()) {
            return Err(Error::InvalidTopology("isolated vertex".into()));
        }
        Ok(())
    }

    /// Infinite N-star graph: one vertex, `n` half-lines starting at it.
    pub fn star(spec: &StarSpec) -> Result<Self> {
        spec.validate()?;
        let edges: Vec<_> = (0..spec.n)
            .map(|_| (EdgeLength::Unbounded, 0, Endpoint::Infinity))
            .collect();
        Self::new(1, &edges)
    }

    /// The real line, seen as a 2-star split at the origin.
    pub fn line() -> Self {
        Self::new(
            1,
            &[
                (EdgeLength::Unbounded, 0, Endpoint::Infinity),
                (EdgeLength::Unbounded, 0, Endpoint::Infinity),
            ],
        )
        .expect("line graph is valid")
    }

    /// A single half-line.
    pub fn half_line() -> Self {
        Self::new(1, &[(EdgeLength::Unbounded, 0, Endpoint::Infinity)])
            .expect("half-line graph is valid")
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> Result<&Edge> {
        self.edges.get(id).ok_or(Error::UnknownEdge(id))
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Bounded edges.
    pub fn compact_core(&self) -> &[EdgeId] {
        &self.compact_core
    }

    /// `(edge, sign)` for every edge end at `at`; empty at infinity, where no
    /// condition is imposed.
    pub fn incidence_signs(&self, at: Endpoint) -> Result<Vec<(EdgeId, i8)>> {
        match at {
            Endpoint::Infinity => Ok(Vec::new()),
            Endpoint::Vertex(v) => {
                let vertex = self.vertices.get(v).ok_or(Error::UnknownVertex(v))?;
                Ok(vertex
                    .incidences
                    .iter()
                    .map(|inc| (inc.edge, inc.sign))
                    .collect())
            }
        }
    }

    /// `Some(n)` if this is an N-star (single vertex, only half-lines).
    pub fn star_arity(&self) -> Option<usize> {
        (self.vertices.len() == 1 && self.compact_core.is_empty()).then_some(self.edges.len())
    }

    pub fn require_star(&self) -> Result<usize> {
        self.star_arity()
            .filter(|&n| n >= 2)
            .ok_or_else(|| Error::InvalidTopology("operation requires an N-star graph".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_star() {
        let g = MetricGraph::star(&StarSpec::new(3, 20.0)).unwrap();
        assert_eq!(g.vertex_count(), 1);
        assert_eq!(g.edge_count(), 3);
        assert!(g.edges().iter().all(|e| !e.is_bounded()));
        assert!(g.compact_core().is_empty());
        assert_eq!(
            g.incidence_signs(Endpoint::Vertex(0)).unwrap(),
            vec![(0, 1), (1, 1), (2, 1)]
        );
        assert_eq!(g.star_arity(), Some(3));
    }

    #[test]
    fn two_star_is_the_line() {
        let g = MetricGraph::star(&StarSpec::new(2, 20.0)).unwrap();
        assert_eq!(g, MetricGraph::line());
    }

    #[test]
    fn twelve_star() {
        let g = MetricGraph::star(&StarSpec::new(12, 10.0)).unwrap();
        assert_eq!(g.vertices()[0].incidences.len(), 12);
    }

    #[test]
    fn rejects_small_star() {
        assert!(matches!(
            MetricGraph::star(&StarSpec::new(1, 10.0)),
            Err(Error::InvalidTopology(_))
        ));
        assert!(MetricGraph::star(&StarSpec::new(3, 0.0)).is_err());
    }

    #[test]
    fn bounded_edge_signs() {
        // 0 --e0--> 1, plus a half-line at each vertex
        let g = MetricGraph::new(
            2,
            &[
                (EdgeLength::Bounded(2.0), 0, Endpoint::Vertex(1)),
                (EdgeLength::Unbounded, 0, Endpoint::Infinity),
                (EdgeLength::Unbounded, 1, Endpoint::Infinity),
            ],
        )
        .unwrap();
        assert_eq!(
            g.incidence_signs(Endpoint::Vertex(1)).unwrap(),
            vec![(0, -1), (2, 1)]
        );
        assert_eq!(g.edges()[0].orientation_sign_at(1), Some(-1));
        assert_eq!(g.compact_core(), &[0]);
        assert!(g.incidence_signs(Endpoint::Infinity).unwrap().is_empty());
        assert!(matches!(
            g.incidence_signs(Endpoint::Vertex(5)),
            Err(Error::UnknownVertex(5))
        ));
        assert!(g.require_star().is_err());
    }

    #[test]
    fn incidence_count_matches_finite_endpoints() {
        let g = MetricGraph::new(
            3,
            &[
                (EdgeLength::Bounded(1.0), 0, Endpoint::Vertex(1)),
                (EdgeLength::Bounded(1.5), 1, Endpoint::Vertex(2)),
                (EdgeLength::Bounded(0.5), 2, Endpoint::Vertex(0)),
                (EdgeLength::Unbounded, 2, Endpoint::Infinity),
            ],
        )
        .unwrap();
        let incidences: usize = g.vertices().iter().map(|v| v.incidences.len()).sum();
        let finite_ends: usize = g
            .edges()
            .iter()
            .map(|e| 1 + usize::from(e.is_bounded()))
            .sum();
        assert_eq!(incidences, finite_ends);
    }

    #[test]
    fn disconnected_rejected() {
        let r = MetricGraph::new(
            2,
            &[
                (EdgeLength::Unbounded, 0, Endpoint::Infinity),
                (EdgeLength::Unbounded, 1, Endpoint::Infinity),
            ],
        );
        assert!(matches!(r, Err(Error::InvalidTopology(_))));
    }

    #[test]
    fn star_is_deterministic() {
        let s = StarSpec::new(5, 7.5);
        assert_eq!(MetricGraph::star(&s).unwrap(), MetricGraph::star(&s).unwrap());
    }
}
