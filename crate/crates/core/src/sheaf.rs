//! Cellular sheaves on graphs: stalks, restriction maps, cochains, the
//! coboundary operator and the sheaf Laplacian.
//!
//! A sheaf assigns a real inner product space to every vertex (the private
//! opinion space) and every edge (the shared discourse space), plus one
//! restriction map per incidence expressing a vertex opinion into the edge
//! space. The coboundary takes head-minus-tail differences of the expressed
//! values; its kernel is the space of global sections, configurations whose
//! expressed opinions agree on every edge.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SheafError};
use crate::graph::{EdgeId, Graph, VertexId};
use crate::linalg;
use crate::operator::{BlockLayout, LinearOperator};
use crate::scalar::{real, Real};

/// Assignment of a vector to each vertex stalk.
#[derive(Debug, Clone, PartialEq)]
pub struct Cochain0<T: Real> {
    blocks: Vec<DVector<T>>,
}

/// Assignment of a vector to each edge stalk.
#[derive(Debug, Clone, PartialEq)]
pub struct Cochain1<T: Real> {
    blocks: Vec<DVector<T>>,
}

macro_rules! cochain_impl {
    ($name:ident, $id:ident) => {
        impl<T: Real> $name<T> {
            pub fn from_blocks(blocks: Vec<DVector<T>>) -> Self {
                Self { blocks }
            }

            pub fn block(&self, id: $id) -> &DVector<T> {
                &self.blocks[id.0]
            }

            pub fn block_mut(&mut self, id: $id) -> &mut DVector<T> {
                &mut self.blocks[id.0]
            }

            pub fn blocks(&self) -> &[DVector<T>] {
                &self.blocks
            }

            /// Block-sum inner product.
            pub fn dot(&self, other: &Self) -> T {
                let mut acc = T::zero();
                for (a, b) in self.blocks.iter().zip(&other.blocks) {
                    acc += a.dot(b);
                }
                acc
            }

            pub fn norm_squared(&self) -> T {
                self.dot(self)
            }

            pub fn norm(&self) -> T {
                self.norm_squared().sqrt()
            }

            pub fn is_zero(&self, tol: T) -> bool {
                self.norm() <= tol
            }

            /// Concatenation of the blocks in id order.
            pub fn to_flat(&self) -> DVector<T> {
                let total: usize = self.blocks.iter().map(|b| b.len()).sum();
                let mut flat = DVector::zeros(total);
                let mut at = 0;
                for b in &self.blocks {
                    flat.rows_mut(at, b.len()).copy_from(b);
                    at += b.len();
                }
                flat
            }
        }
    };
}

cochain_impl!(Cochain0, VertexId);
cochain_impl!(Cochain1, EdgeId);

/// A cellular sheaf on a finite oriented graph.
#[derive(Debug, Clone)]
pub struct Sheaf<T: Real> {
    graph: Graph,
    vertex_dims: Vec<usize>,
    edge_dims: Vec<usize>,
    restrictions: BTreeMap<(VertexId, EdgeId), DMatrix<T>>,
    vertex_blocks: BlockLayout,
    edge_blocks: BlockLayout,
}

impl<T: Real> Sheaf<T> {
    /// Builds a sheaf and validates the restriction-map inventory: exactly one
    /// map per incidence, with shape `edge_dim x vertex_dim`. Zero-dimensional
    /// stalks are allowed and contribute empty blocks.
    pub fn new(
        graph: Graph,
        vertex_dims: Vec<usize>,
        edge_dims: Vec<usize>,
        restrictions: BTreeMap<(VertexId, EdgeId), DMatrix<T>>,
    ) -> Result<Self> {
        if vertex_dims.len() != graph.vertex_count() {
            return Err(SheafError::Conformance {
                location: "vertex dimension table".into(),
                expected: graph.vertex_count(),
                found: vertex_dims.len(),
            });
        }
        if edge_dims.len() != graph.edge_count() {
            return Err(SheafError::Conformance {
                location: "edge dimension table".into(),
                expected: graph.edge_count(),
                found: edge_dims.len(),
            });
        }
        for (&(v, e), m) in &restrictions {
            if !graph.is_incidence(v, e) {
                return Err(SheafError::NotAnIncidence {
                    vertex: graph.vertex_label(v).into(),
                    edge: graph.edge_label(e).into(),
                });
            }
            if m.nrows() != edge_dims[e.0] || m.ncols() != vertex_dims[v.0] {
                return Err(SheafError::Restriction {
                    vertex: graph.vertex_label(v).into(),
                    edge: graph.edge_label(e).into(),
                    reason: format!(
                        "shape {}x{}, expected {}x{}",
                        m.nrows(),
                        m.ncols(),
                        edge_dims[e.0],
                        vertex_dims[v.0]
                    ),
                });
            }
        }
        for e in graph.edges() {
            let edge = graph.edge(e);
            for v in [edge.tail, edge.head] {
                if !restrictions.contains_key(&(v, e)) {
                    return Err(SheafError::Restriction {
                        vertex: graph.vertex_label(v).into(),
                        edge: graph.edge_label(e).into(),
                        reason: "missing restriction map".into(),
                    });
                }
            }
        }
        if restrictions.len() != 2 * graph.edge_count() {
            return Err(SheafError::Graph(format!(
                "expected exactly {} restriction maps, got {}",
                2 * graph.edge_count(),
                restrictions.len()
            )));
        }
        let vertex_blocks = BlockLayout::new(vertex_dims.clone());
        let edge_blocks = BlockLayout::new(edge_dims.clone());
        Ok(Self {
            graph,
            vertex_dims,
            edge_dims,
            restrictions,
            vertex_blocks,
            edge_blocks,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn vertex_dim(&self, v: VertexId) -> usize {
        self.vertex_dims[v.0]
    }

    pub fn edge_dim(&self, e: EdgeId) -> usize {
        self.edge_dims[e.0]
    }

    pub fn vertex_dims(&self) -> &[usize] {
        &self.vertex_dims
    }

    pub fn edge_dims(&self) -> &[usize] {
        &self.edge_dims
    }

    /// Dimension of the 0-cochain space.
    pub fn total_vertex_dim(&self) -> usize {
        self.vertex_blocks.total()
    }

    /// Dimension of the 1-cochain space.
    pub fn total_edge_dim(&self) -> usize {
        self.edge_blocks.total()
    }

    pub fn vertex_blocks(&self) -> &BlockLayout {
        &self.vertex_blocks
    }

    pub fn edge_blocks(&self) -> &BlockLayout {
        &self.edge_blocks
    }

    pub fn restriction(&self, v: VertexId, e: EdgeId) -> &DMatrix<T> {
        &self.restrictions[&(v, e)]
    }

    pub fn restrictions(&self) -> &BTreeMap<(VertexId, EdgeId), DMatrix<T>> {
        &self.restrictions
    }

    /// Same graph and stalks with some restriction maps replaced.
    pub fn with_restrictions(
        &self,
        replacements: &BTreeMap<(VertexId, EdgeId), DMatrix<T>>,
    ) -> Result<Sheaf<T>> {
        let mut maps = self.restrictions.clone();
        for (key, m) in replacements {
            if !maps.contains_key(key) {
                return Err(SheafError::NotAnIncidence {
                    vertex: self.graph.vertex_label(key.0).into(),
                    edge: self.graph.edge_label(key.1).into(),
                });
            }
            maps.insert(*key, m.clone());
        }
        Sheaf::new(
            self.graph.clone(),
            self.vertex_dims.clone(),
            self.edge_dims.clone(),
            maps,
        )
    }

    /// Same sheaf data over the graph with one edge orientation reversed.
    pub fn with_flipped_edge(&self, e: EdgeId) -> Sheaf<T> {
        Sheaf {
            graph: self.graph.with_flipped_edge(e),
            vertex_dims: self.vertex_dims.clone(),
            edge_dims: self.edge_dims.clone(),
            restrictions: self.restrictions.clone(),
            vertex_blocks: self.vertex_blocks.clone(),
            edge_blocks: self.edge_blocks.clone(),
        }
    }

    pub fn zero_cochain0(&self) -> Cochain0<T> {
        Cochain0::from_blocks(
            self.vertex_dims
                .iter()
                .map(|&d| DVector::zeros(d))
                .collect(),
        )
    }

    pub fn zero_cochain1(&self) -> Cochain1<T> {
        Cochain1::from_blocks(self.edge_dims.iter().map(|&d| DVector::zeros(d)).collect())
    }

    pub fn cochain0_from_flat(&self, flat: &DVector<T>) -> Result<Cochain0<T>> {
        if flat.len() != self.total_vertex_dim() {
            return Err(SheafError::Conformance {
                location: "flat 0-cochain".into(),
                expected: self.total_vertex_dim(),
                found: flat.len(),
            });
        }
        let blocks = self
            .graph
            .vertices()
            .map(|v| {
                let r = self.vertex_blocks.range(v.0);
                flat.rows(r.start, r.len()).into_owned()
            })
            .collect();
        Ok(Cochain0::from_blocks(blocks))
    }

    pub fn cochain1_from_flat(&self, flat: &DVector<T>) -> Result<Cochain1<T>> {
        if flat.len() != self.total_edge_dim() {
            return Err(SheafError::Conformance {
                location: "flat 1-cochain".into(),
                expected: self.total_edge_dim(),
                found: flat.len(),
            });
        }
        let blocks = self
            .graph
            .edges()
            .map(|e| {
                let r = self.edge_blocks.range(e.0);
                flat.rows(r.start, r.len()).into_owned()
            })
            .collect();
        Ok(Cochain1::from_blocks(blocks))
    }

    /// Checks that `x` has one block per vertex with the right length.
    pub fn check_cochain0(&self, x: &Cochain0<T>) -> Result<()> {
        if x.blocks().len() != self.graph.vertex_count() {
            return Err(SheafError::Conformance {
                location: "0-cochain block count".into(),
                expected: self.graph.vertex_count(),
                found: x.blocks().len(),
            });
        }
        for v in self.graph.vertices() {
            if x.block(v).len() != self.vertex_dims[v.0] {
                return Err(SheafError::Conformance {
                    location: format!("0-cochain block at vertex {}", self.graph.vertex_label(v)),
                    expected: self.vertex_dims[v.0],
                    found: x.block(v).len(),
                });
            }
        }
        Ok(())
    }

    /// Coboundary: for each oriented edge `u -> v`,
    /// `(dx)_e = R_{v,e} x_v - R_{u,e} x_u`.
    pub fn coboundary(&self, x: &Cochain0<T>) -> Result<Cochain1<T>> {
        self.check_cochain0(x)?;
        let mut out = Vec::with_capacity(self.graph.edge_count());
        for e in self.graph.edges() {
            let edge = self.graph.edge(e);
            let head = self.restriction(edge.head, e) * x.block(edge.head);
            let tail = self.restriction(edge.tail, e) * x.block(edge.tail);
            out.push(head - tail);
        }
        Ok(Cochain1::from_blocks(out))
    }

    /// Dense coboundary matrix with edge-row / vertex-column block structure.
    pub fn coboundary_matrix(&self) -> LinearOperator<T> {
        let mut m = DMatrix::zeros(self.total_edge_dim(), self.total_vertex_dim());
        for e in self.graph.edges() {
            let edge = self.graph.edge(e);
            let er = self.edge_blocks.range(e.0);
            for (v, sign) in [(edge.head, T::one()), (edge.tail, -T::one())] {
                let vr = self.vertex_blocks.range(v.0);
                let restriction = self.restriction(v, e);
                let mut view = m.view_mut((er.start, vr.start), (er.len(), vr.len()));
                for i in 0..er.len() {
                    for j in 0..vr.len() {
                        view[(i, j)] += sign * restriction[(i, j)];
                    }
                }
            }
        }
        LinearOperator::new(m, self.edge_blocks.clone(), self.vertex_blocks.clone())
            .expect("layouts match by construction")
    }

    /// Sheaf Laplacian `L = d^T d`, symmetric positive semidefinite.
    pub fn laplacian(&self) -> LinearOperator<T> {
        let d = self.coboundary_matrix();
        let l = d.matrix().transpose() * d.matrix();
        LinearOperator::new(l, self.vertex_blocks.clone(), self.vertex_blocks.clone())
            .expect("layouts match by construction")
    }

    /// Diagonal block of the Laplacian at `v`: sum of `R^T R` over incident
    /// edges.
    pub fn laplacian_vertex_block(&self, v: VertexId) -> DMatrix<T> {
        let d = self.vertex_dims[v.0];
        let mut block = DMatrix::zeros(d, d);
        for e in self.graph.incident_edges(v) {
            let r = self.restriction(v, e);
            block += r.transpose() * r;
        }
        block
    }

    /// Orthonormal basis of the global section space `H^0 = ker(d) = ker(L)`,
    /// computed from the Laplacian kernel. `tol` is the singular-value cutoff
    /// on the coboundary scale (eigenvalues of `L` below `tol^2`-ish count as
    /// zero); pass `None` for the numerical-rank default.
    pub fn global_sections(&self, tol: Option<T>) -> Vec<Cochain0<T>> {
        let l = self.laplacian();
        // The user tolerance lives on the coboundary scale; squared it can
        // fall below the roundoff floor of the assembled Laplacian, so the
        // numerical-rank cutoff acts as a floor.
        let cutoff = tol.map(|t| (t * t).max(linalg::default_cutoff(l.matrix())));
        let basis = linalg::kernel_basis(l.matrix(), cutoff);
        (0..basis.ncols())
            .map(|j| {
                self.cochain0_from_flat(&basis.column(j).into_owned())
                    .expect("kernel basis conforms")
            })
            .collect()
    }

    /// Total disagreement energy `0.5 * ||d x||^2`.
    pub fn disagreement_energy(&self, x: &Cochain0<T>) -> Result<T> {
        Ok(self.coboundary(x)?.norm_squared() * real::<T>(0.5))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn single_edge_identity() -> Sheaf<f64> {
        let graph = Graph::new(vec!["u", "v"], vec![("e", "u", "v")]).unwrap();
        let u = graph.vertex_by_label("u").unwrap();
        let v = graph.vertex_by_label("v").unwrap();
        let e = graph.edge_by_label("e").unwrap();
        let mut maps = BTreeMap::new();
        maps.insert((u, e), DMatrix::identity(1, 1));
        maps.insert((v, e), DMatrix::identity(1, 1));
        Sheaf::new(graph, vec![1, 1], vec![1], maps).unwrap()
    }

    #[test]
    fn identity_edge_reduces_to_graph_laplacian() {
        let sheaf = single_edge_identity();
        let l = sheaf.laplacian();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert!((l.matrix() - expected).norm() < 1e-15);
    }

    #[test]
    fn coboundary_of_zero_is_zero() {
        let sheaf = single_edge_identity();
        let z = sheaf.zero_cochain0();
        let dz = sheaf.coboundary(&z).unwrap();
        assert_eq!(dz.norm(), 0.0);
    }

    #[test]
    fn conformance_error_names_the_offending_vertex() {
        let sheaf = single_edge_identity();
        let bad = Cochain0::from_blocks(vec![
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_vec(vec![0.0]),
        ]);
        let err = sheaf.coboundary(&bad).unwrap_err();
        match err {
            SheafError::Conformance { location, .. } => assert!(location.contains('u')),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn single_precision_instantiation_works() {
        let graph = Graph::new(vec!["u", "v"], vec![("e", "u", "v")]).unwrap();
        let u = graph.vertex_by_label("u").unwrap();
        let v = graph.vertex_by_label("v").unwrap();
        let e = graph.edge_by_label("e").unwrap();
        let mut maps = BTreeMap::new();
        maps.insert((u, e), DMatrix::<f32>::identity(1, 1));
        maps.insert((v, e), DMatrix::<f32>::identity(1, 1));
        let sheaf = Sheaf::new(graph, vec![1, 1], vec![1], maps).unwrap();
        let x = Cochain0::from_blocks(vec![
            DVector::from_vec(vec![1.0_f32]),
            DVector::from_vec(vec![3.0_f32]),
        ]);
        assert!((sheaf.disagreement_energy(&x).unwrap() - 2.0).abs() < 1e-6);
        assert_eq!(sheaf.global_sections(None).len(), 1);
    }

    #[test]
    fn zero_dimensional_stalks_are_permitted() {
        let graph = Graph::new(vec!["u", "v"], vec![("e", "u", "v")]).unwrap();
        let u = graph.vertex_by_label("u").unwrap();
        let v = graph.vertex_by_label("v").unwrap();
        let e = graph.edge_by_label("e").unwrap();
        let mut maps = BTreeMap::new();
        maps.insert((u, e), DMatrix::<f64>::zeros(0, 1));
        maps.insert((v, e), DMatrix::<f64>::zeros(0, 1));
        let sheaf = Sheaf::new(graph, vec![1, 1], vec![0], maps).unwrap();
        let x = Cochain0::from_blocks(vec![
            DVector::from_vec(vec![3.0]),
            DVector::from_vec(vec![-1.0]),
        ]);
        assert_eq!(sheaf.disagreement_energy(&x).unwrap(), 0.0);
        assert_eq!(sheaf.global_sections(None).len(), 2);
    }
}
