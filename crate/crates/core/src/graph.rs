//! Finite oriented graphs underlying a discourse sheaf.
//!
//! Edges carry a fixed orientation chosen at construction: each edge is an
//! ordered `(tail, head)` pair. The coboundary convention downstream is
//! head-minus-tail, so flipping an orientation only negates the corresponding
//! edge block of the coboundary and leaves the Laplacian unchanged.

use std::collections::HashMap;

use crate::error::{Result, SheafError};

/// Index of a vertex in its [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub usize);

/// Index of an edge in its [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone)]
pub struct Edge {
    pub label: String,
    pub tail: VertexId,
    pub head: VertexId,
}

#[derive(Debug, Clone)]
pub struct Graph {
    vertex_labels: Vec<String>,
    edges: Vec<Edge>,
    vertex_by_label: HashMap<String, VertexId>,
    edge_by_label: HashMap<String, EdgeId>,
}

impl Graph {
    /// Builds a graph from vertex labels and `(edge label, tail, head)` triples.
    ///
    /// Rejects duplicate labels, self-loops and dangling endpoints. Edge
    /// orientation is the declared `(tail, head)` order and is immutable.
    pub fn new<S: Into<String>>(vertices: Vec<S>, edges: Vec<(S, S, S)>) -> Result<Self> {
        let vertex_labels: Vec<String> = vertices.into_iter().map(Into::into).collect();
        let mut vertex_by_label = HashMap::new();
        for (i, label) in vertex_labels.iter().enumerate() {
            if vertex_by_label.insert(label.clone(), VertexId(i)).is_some() {
                return Err(SheafError::Graph(format!(
                    "duplicate vertex label {label:?}"
                )));
            }
        }
        let mut edge_by_label = HashMap::new();
        let mut built = Vec::with_capacity(edges.len());
        for (i, (label, tail, head)) in edges.into_iter().enumerate() {
            let label: String = label.into();
            let tail_label: String = tail.into();
            let head_label: String = head.into();
            let tail = *vertex_by_label.get(&tail_label).ok_or_else(|| {
                SheafError::Graph(format!(
                    "edge {label:?}: unknown tail vertex {tail_label:?}"
                ))
            })?;
            let head = *vertex_by_label.get(&head_label).ok_or_else(|| {
                SheafError::Graph(format!(
                    "edge {label:?}: unknown head vertex {head_label:?}"
                ))
            })?;
            if tail == head {
                return Err(SheafError::Graph(format!("edge {label:?} is a self-loop")));
            }
            if edge_by_label.insert(label.clone(), EdgeId(i)).is_some() {
                return Err(SheafError::Graph(format!("duplicate edge label {label:?}")));
            }
            built.push(Edge { label, tail, head });
        }
        Ok(Self {
            vertex_labels,
            edges: built,
            vertex_by_label,
            edge_by_label,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertex_labels.len()).map(VertexId)
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        (0..self.edges.len()).map(EdgeId)
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.0]
    }

    pub fn vertex_label(&self, v: VertexId) -> &str {
        &self.vertex_labels[v.0]
    }

    pub fn edge_label(&self, e: EdgeId) -> &str {
        &self.edges[e.0].label
    }

    pub fn vertex_by_label(&self, label: &str) -> Option<VertexId> {
        self.vertex_by_label.get(label).copied()
    }

    pub fn edge_by_label(&self, label: &str) -> Option<EdgeId> {
        self.edge_by_label.get(label).copied()
    }

    /// True when `v` is an endpoint of `e`.
    pub fn is_incidence(&self, v: VertexId, e: EdgeId) -> bool {
        let edge = &self.edges[e.0];
        edge.tail == v || edge.head == v
    }

    /// Coboundary sign of the incidence: `+1` at the head, `-1` at the tail.
    pub fn incidence_sign(&self, v: VertexId, e: EdgeId) -> Option<i8> {
        let edge = &self.edges[e.0];
        if edge.head == v {
            Some(1)
        } else if edge.tail == v {
            Some(-1)
        } else {
            None
        }
    }

    /// All `(vertex, edge)` incidences, ordered by `(vertex, edge)` index.
    pub fn incidences(&self) -> Vec<(VertexId, EdgeId)> {
        let mut pairs = Vec::with_capacity(2 * self.edges.len());
        for v in self.vertices() {
            for e in self.edges() {
                if self.is_incidence(v, e) {
                    pairs.push((v, e));
                }
            }
        }
        pairs
    }

    /// Edges incident to `v`, in edge order.
    pub fn incident_edges(&self, v: VertexId) -> Vec<EdgeId> {
        self.edges().filter(|&e| self.is_incidence(v, e)).collect()
    }

    /// Connectivity of the underlying undirected graph.
    pub fn is_connected(&self) -> bool {
        if self.vertex_labels.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.vertex_labels.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for edge in &self.edges {
                let (a, b) = (edge.tail.0, edge.head.0);
                let other = if a == v {
                    Some(b)
                } else if b == v {
                    Some(a)
                } else {
                    None
                };
                if let Some(w) = other {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Same graph with the orientation of one edge reversed.
    pub fn with_flipped_edge(&self, e: EdgeId) -> Graph {
        let mut flipped = self.clone();
        let edge = &mut flipped.edges[e.0];
        std::mem::swap(&mut edge.tail, &mut edge.head);
        flipped
    }
}
