//! Selective learning of expression maps against a fixed opinion profile.
//!
//! A designated set of incidences may adapt its restriction maps while the
//! rest stay frozen. For fixed opinions `x` the edge discrepancy is affine in
//! the adapting maps, `d(rho) = A rho + c`; gradient flow on `0.5 ||d||^2`
//! converges to the Frobenius-nearest minimizer. The same data assembles into
//! an honest cellular sheaf (the sheaf of free structures) whose coboundary is
//! exactly `A`, which is what makes the opinion and structure dynamics two
//! instances of one construction.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SheafError};
use crate::graph::{EdgeId, Graph, VertexId};
use crate::linalg;
use crate::operator::{BlockLayout, LinearOperator};
use crate::scalar::{real, Real};
use crate::sheaf::{Cochain0, Sheaf};

/// Edge adaptation symmetry: both incidences share adaptation status, or
/// exactly one adapts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeAdaptation {
    /// Type S: both incidences adapt or both are frozen.
    Symmetric,
    /// Type A: exactly one incidence adapts.
    Asymmetric,
}

/// The set of adapting incidences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdaptationSpec {
    incidences: BTreeSet<(VertexId, EdgeId)>,
}

impl AdaptationSpec {
    pub fn new(graph: &Graph, pairs: impl IntoIterator<Item = (VertexId, EdgeId)>) -> Result<Self> {
        let mut incidences = BTreeSet::new();
        for (v, e) in pairs {
            if !graph.is_incidence(v, e) {
                return Err(SheafError::NotAnIncidence {
                    vertex: graph.vertex_label(v).into(),
                    edge: graph.edge_label(e).into(),
                });
            }
            incidences.insert((v, e));
        }
        Ok(Self { incidences })
    }

    /// Every incidence adapts.
    pub fn all(graph: &Graph) -> Self {
        Self {
            incidences: graph.incidences().into_iter().collect(),
        }
    }

    /// Nothing adapts.
    pub fn frozen() -> Self {
        Self {
            incidences: BTreeSet::new(),
        }
    }

    /// Complement within the graph's incidences.
    pub fn inverted(&self, graph: &Graph) -> Self {
        Self {
            incidences: graph
                .incidences()
                .into_iter()
                .filter(|pair| !self.incidences.contains(pair))
                .collect(),
        }
    }

    pub fn contains(&self, v: VertexId, e: EdgeId) -> bool {
        self.incidences.contains(&(v, e))
    }

    pub fn incidences(&self) -> impl Iterator<Item = (VertexId, EdgeId)> + '_ {
        self.incidences.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.incidences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.incidences.is_empty()
    }

    /// Edges with at least one adapting incidence, in edge order.
    pub fn adapting_edges(&self, graph: &Graph) -> Vec<EdgeId> {
        graph
            .edges()
            .filter(|&e| {
                let edge = graph.edge(e);
                self.contains(edge.tail, e) || self.contains(edge.head, e)
            })
            .collect()
    }

    pub fn edge_adaptation(&self, graph: &Graph, e: EdgeId) -> EdgeAdaptation {
        let edge = graph.edge(e);
        let tail = self.contains(edge.tail, e);
        let head = self.contains(edge.head, e);
        if tail == head {
            EdgeAdaptation::Symmetric
        } else {
            EdgeAdaptation::Asymmetric
        }
    }

    /// Edges with asymmetric adaptation, in edge order.
    pub fn asymmetric_edges(&self, graph: &Graph) -> Vec<EdgeId> {
        graph
            .edges()
            .filter(|&e| self.edge_adaptation(graph, e) == EdgeAdaptation::Asymmetric)
            .collect()
    }
}

/// Assignment of a candidate restriction map to every adapting incidence,
/// with the blockwise Frobenius inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureCochain<T: Real> {
    blocks: BTreeMap<(VertexId, EdgeId), DMatrix<T>>,
}

impl<T: Real> StructureCochain<T> {
    pub fn from_blocks(blocks: BTreeMap<(VertexId, EdgeId), DMatrix<T>>) -> Self {
        Self { blocks }
    }

    pub fn block(&self, v: VertexId, e: EdgeId) -> Option<&DMatrix<T>> {
        self.blocks.get(&(v, e))
    }

    pub fn blocks(&self) -> &BTreeMap<(VertexId, EdgeId), DMatrix<T>> {
        &self.blocks
    }

    pub fn dot(&self, other: &Self) -> T {
        let mut acc = T::zero();
        for (key, a) in &self.blocks {
            if let Some(b) = other.blocks.get(key) {
                acc += a.dot(b);
            }
        }
        acc
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }
}

/// One adapting map's slot in the flattened coordinate vector.
#[derive(Debug, Clone)]
struct MapSlot {
    vertex: VertexId,
    edge: EdgeId,
    rows: usize,
    cols: usize,
    offset: usize,
}

/// The affine discrepancy system `d(rho) = A rho + c` over the adapting maps.
#[derive(Debug, Clone)]
pub struct DiscrepancySystem<T: Real> {
    op: LinearOperator<T>,
    forcing: DVector<T>,
    opinions: Cochain0<T>,
    adapt: AdaptationSpec,
    adapting_edges: Vec<EdgeId>,
    edge_layout: BlockLayout,
    slots: Vec<MapSlot>,
    map_dim: usize,
}

impl<T: Real> DiscrepancySystem<T> {
    /// The discrepancy operator `A` with edge-row blocks and one column block
    /// per adapting map.
    pub fn operator(&self) -> &LinearOperator<T> {
        &self.op
    }

    /// The constant `c` collecting frozen-map contributions on adapting edges.
    pub fn forcing(&self) -> &DVector<T> {
        &self.forcing
    }

    pub fn opinions(&self) -> &Cochain0<T> {
        &self.opinions
    }

    pub fn adaptation(&self) -> &AdaptationSpec {
        &self.adapt
    }

    pub fn adapting_edges(&self) -> &[EdgeId] {
        &self.adapting_edges
    }

    /// Dimension of the flattened adapting-map space.
    pub fn map_dim(&self) -> usize {
        self.map_dim
    }

    /// Row range of edge `e` within the stacked discrepancy vector.
    pub fn edge_rows(&self, e: EdgeId) -> Option<std::ops::Range<usize>> {
        self.adapting_edges
            .iter()
            .position(|&ae| ae == e)
            .map(|i| self.edge_layout.range(i))
    }

    /// Row-major flattening in `(vertex, edge)` order.
    pub fn flatten(&self, rho: &StructureCochain<T>) -> Result<DVector<T>> {
        let mut flat = DVector::zeros(self.map_dim);
        let mut seen = 0;
        for slot in &self.slots {
            let block =
                rho.block(slot.vertex, slot.edge)
                    .ok_or_else(|| SheafError::Conformance {
                        location: format!(
                            "structure cochain missing block ({:?}, {:?})",
                            slot.vertex, slot.edge
                        ),
                        expected: self.slots.len(),
                        found: rho.blocks().len(),
                    })?;
            if block.nrows() != slot.rows || block.ncols() != slot.cols {
                return Err(SheafError::Conformance {
                    location: format!("structure block ({:?}, {:?})", slot.vertex, slot.edge),
                    expected: slot.rows * slot.cols,
                    found: block.nrows() * block.ncols(),
                });
            }
            for i in 0..slot.rows {
                for j in 0..slot.cols {
                    flat[slot.offset + i * slot.cols + j] = block[(i, j)];
                }
            }
            seen += 1;
        }
        if seen != rho.blocks().len() {
            return Err(SheafError::Conformance {
                location: "structure cochain has extra blocks".into(),
                expected: seen,
                found: rho.blocks().len(),
            });
        }
        Ok(flat)
    }

    pub fn unflatten(&self, flat: &DVector<T>) -> StructureCochain<T> {
        assert_eq!(flat.len(), self.map_dim, "unflatten: dimension mismatch");
        let mut blocks = BTreeMap::new();
        for slot in &self.slots {
            let mut m = DMatrix::zeros(slot.rows, slot.cols);
            for i in 0..slot.rows {
                for j in 0..slot.cols {
                    m[(i, j)] = flat[slot.offset + i * slot.cols + j];
                }
            }
            blocks.insert((slot.vertex, slot.edge), m);
        }
        StructureCochain::from_blocks(blocks)
    }

    /// The sheaf's current maps restricted to the adapting incidences.
    pub fn current_maps(&self, sheaf: &Sheaf<T>) -> StructureCochain<T> {
        let blocks = self
            .adapt
            .incidences()
            .map(|(v, e)| ((v, e), sheaf.restriction(v, e).clone()))
            .collect();
        StructureCochain::from_blocks(blocks)
    }

    /// `A rho + c` as a flat vector over the adapting edges.
    pub fn discrepancy(&self, rho_flat: &DVector<T>) -> DVector<T> {
        self.op.apply(rho_flat) + &self.forcing
    }

    /// `0.5 ||A rho + c||^2`.
    pub fn energy(&self, rho_flat: &DVector<T>) -> T {
        self.discrepancy(rho_flat).norm_squared() * real::<T>(0.5)
    }

    /// Gradient `A^T (A rho + c)`.
    pub fn gradient(&self, rho_flat: &DVector<T>) -> DVector<T> {
        self.op.matrix().transpose() * self.discrepancy(rho_flat)
    }

    /// Sheaf with the adapting maps replaced by `rho`.
    pub fn apply_maps(&self, sheaf: &Sheaf<T>, rho: &StructureCochain<T>) -> Result<Sheaf<T>> {
        sheaf.with_restrictions(rho.blocks())
    }
}

/// Assembles the discrepancy system for the given opinions and adaptation set.
pub fn build_discrepancy_system<T: Real>(
    sheaf: &Sheaf<T>,
    x: &Cochain0<T>,
    adapt: &AdaptationSpec,
) -> Result<DiscrepancySystem<T>> {
    sheaf.check_cochain0(x)?;
    let graph = sheaf.graph();
    for (v, e) in adapt.incidences() {
        if !graph.is_incidence(v, e) {
            return Err(SheafError::NotAnIncidence {
                vertex: graph.vertex_label(v).into(),
                edge: graph.edge_label(e).into(),
            });
        }
    }
    let adapting_edges = adapt.adapting_edges(graph);
    let edge_layout = BlockLayout::new(adapting_edges.iter().map(|&e| sheaf.edge_dim(e)).collect());

    let mut slots = Vec::with_capacity(adapt.len());
    let mut offset = 0;
    for (v, e) in adapt.incidences() {
        let rows = sheaf.edge_dim(e);
        let cols = sheaf.vertex_dim(v);
        slots.push(MapSlot {
            vertex: v,
            edge: e,
            rows,
            cols,
            offset,
        });
        offset += rows * cols;
    }
    let map_dim = offset;

    let col_layout = BlockLayout::new(slots.iter().map(|s| s.rows * s.cols).collect());
    let mut a = DMatrix::zeros(edge_layout.total(), map_dim);
    for slot in &slots {
        let sign = real::<T>(
            graph
                .incidence_sign(slot.vertex, slot.edge)
                .expect("validated") as f64,
        );
        let xw = x.block(slot.vertex);
        let idx = adapting_edges
            .iter()
            .position(|&ae| ae == slot.edge)
            .expect("slot edge is adapting");
        let rows = edge_layout.range(idx);
        for i in 0..slot.rows {
            for j in 0..slot.cols {
                a[(rows.start + i, slot.offset + i * slot.cols + j)] = sign * xw[j];
            }
        }
    }

    let mut c = DVector::zeros(edge_layout.total());
    for (idx, &e) in adapting_edges.iter().enumerate() {
        let edge = graph.edge(e);
        let rows = edge_layout.range(idx);
        for w in [edge.tail, edge.head] {
            if adapt.contains(w, e) {
                continue;
            }
            let sign = real::<T>(graph.incidence_sign(w, e).expect("endpoint") as f64);
            let expressed = sheaf.restriction(w, e) * x.block(w);
            for i in 0..rows.len() {
                c[rows.start + i] += sign * expressed[i];
            }
        }
    }

    Ok(DiscrepancySystem {
        op: LinearOperator::new(a, edge_layout.clone(), col_layout)?,
        forcing: c,
        opinions: x.clone(),
        adapt: adapt.clone(),
        adapting_edges,
        edge_layout,
        slots,
        map_dim,
    })
}

/// The learning equilibrium, computed along three routes that must agree:
/// the correction form, the kernel-projection form, and the constrained
/// nearest-point problem solved through its stationarity system.
#[derive(Debug, Clone)]
pub struct LearningLimit<T: Real> {
    pub rho: StructureCochain<T>,
    pub rho_flat: DVector<T>,
    pub by_correction: DVector<T>,
    pub by_projection: DVector<T>,
    pub by_nearest_point: DVector<T>,
    /// Largest pairwise disagreement between the routes.
    pub route_spread: T,
    /// `||A rho + c||` at the limit.
    pub residual: T,
    /// Whether `-c` lies in the range of `A` (relative residual below 1e-8).
    pub consistent: bool,
}

pub fn learning_limit<T: Real>(
    sys: &DiscrepancySystem<T>,
    rho0: &StructureCochain<T>,
) -> Result<LearningLimit<T>> {
    let rho0_flat = sys.flatten(rho0)?;
    let a = sys.op.matrix();
    let c = &sys.forcing;
    // One shared rank decision keeps the three routes consistent near the
    // numerical rank boundary.
    let cutoff = if a.nrows() == 0 || a.ncols() == 0 {
        None
    } else {
        Some(linalg::default_cutoff(a))
    };

    // Route 1: rho0 - A^+ d0.
    let d0 = sys.discrepancy(&rho0_flat);
    let by_correction = &rho0_flat - linalg::pinv_apply(a, &d0, cutoff);

    // Route 2: P_ker(A) rho0 - A^+ c through an explicit kernel basis.
    let kernel = linalg::kernel_basis(a, cutoff);
    let kernel_part = if kernel.ncols() == 0 {
        DVector::zeros(rho0_flat.len())
    } else {
        &kernel * (kernel.transpose() * &rho0_flat)
    };
    let by_projection = kernel_part - linalg::pinv_apply(a, c, cutoff);

    // Route 3: the minimizer set is {rho : U^T (A rho + c) = 0} for U an
    // orthonormal range basis of A, so the nearest point to rho0 is the
    // projection onto that affine set.
    let range = linalg::range_basis(a, cutoff);
    let by_nearest_point = if range.ncols() == 0 {
        rho0_flat.clone()
    } else {
        let constraint = range.transpose() * a;
        let violation = &constraint * &rho0_flat + range.transpose() * c;
        &rho0_flat - linalg::pinv_apply(&constraint, &violation, cutoff)
    };

    let spread_a = (&by_correction - &by_projection).norm();
    let spread_b = (&by_correction - &by_nearest_point).norm();
    let spread_c = (&by_projection - &by_nearest_point).norm();
    let route_spread = spread_a.max(spread_b).max(spread_c);
    let scale = T::one() + rho0_flat.norm() + c.norm();
    if route_spread > real::<T>(1e-9) * scale {
        return Err(SheafError::Numerical(format!(
            "learning limit routes disagree by {route_spread:e}"
        )));
    }

    let rho_flat = by_correction.clone();
    let residual = sys.discrepancy(&rho_flat).norm();
    let consistent = residual <= real::<T>(1e-8) * (T::one() + c.norm());
    Ok(LearningLimit {
        rho: sys.unflatten(&rho_flat),
        rho_flat,
        by_correction,
        by_projection,
        by_nearest_point,
        route_spread,
        residual,
        consistent,
    })
}

/// Trajectory of the learning gradient flow.
#[derive(Debug, Clone)]
pub struct LearningRun<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<DVector<T>>,
    /// `0.5 ||A rho + c||^2` per sample.
    pub energies: Vec<T>,
    pub outcome: crate::ode::OdeOutcome<T>,
}

impl<T: Real> LearningRun<T> {
    pub fn final_state(&self) -> &DVector<T> {
        self.states.last().expect("run holds at least rho0")
    }
}

/// Integrates `d rho / dt = -beta A^T (A rho + c)`.
pub fn learning_flow<T: Real>(
    sys: &DiscrepancySystem<T>,
    rho0: &StructureCochain<T>,
    beta: T,
    opts: &crate::ode::OdeOptions<T>,
) -> Result<LearningRun<T>> {
    if beta <= T::zero() {
        return Err(SheafError::NonPositiveParameter {
            name: "beta",
            value: beta.to_f64().unwrap_or(f64::NAN),
        });
    }
    let rho0_flat = sys.flatten(rho0)?;
    let solution = crate::ode::integrate(
        |_t, rho: &DVector<T>| -sys.gradient(rho) * beta,
        rho0_flat,
        opts,
        None,
    );
    let energies = solution.states.iter().map(|rho| sys.energy(rho)).collect();
    Ok(LearningRun {
        times: solution.times,
        states: solution.states,
        energies,
        outcome: solution.outcome,
    })
}

/// Unique minimizer of the ridge-regularized discrepancy objective, solved
/// from the SPD system `(A^T A + lambda I) rho = lambda rho0 - A^T c`.
pub fn regularized_learning<T: Real>(
    sys: &DiscrepancySystem<T>,
    rho0: &StructureCochain<T>,
    lambda: T,
) -> Result<StructureCochain<T>> {
    if lambda <= T::zero() {
        return Err(SheafError::NonPositiveParameter {
            name: "lambda",
            value: lambda.to_f64().unwrap_or(f64::NAN),
        });
    }
    let rho0_flat = sys.flatten(rho0)?;
    let a = sys.op.matrix();
    let p = rho0_flat.len();
    let system = a.transpose() * a + DMatrix::identity(p, p) * lambda;
    let rhs = &rho0_flat * lambda - a.transpose() * &sys.forcing;
    let solution = nalgebra::Cholesky::new(system)
        .ok_or_else(|| SheafError::Numerical("regularized system not SPD".into()))?
        .solve(&rhs);
    Ok(sys.unflatten(&solution))
}

/// Gradient flow of the regularized objective.
pub fn regularized_learning_flow<T: Real>(
    sys: &DiscrepancySystem<T>,
    rho0: &StructureCochain<T>,
    lambda: T,
    beta: T,
    opts: &crate::ode::OdeOptions<T>,
) -> Result<LearningRun<T>> {
    if lambda <= T::zero() {
        return Err(SheafError::NonPositiveParameter {
            name: "lambda",
            value: lambda.to_f64().unwrap_or(f64::NAN),
        });
    }
    if beta <= T::zero() {
        return Err(SheafError::NonPositiveParameter {
            name: "beta",
            value: beta.to_f64().unwrap_or(f64::NAN),
        });
    }
    let rho0_flat = sys.flatten(rho0)?;
    let anchor = rho0_flat.clone();
    let solution = crate::ode::integrate(
        |_t, rho: &DVector<T>| -(sys.gradient(rho) + (rho - &anchor) * lambda) * beta,
        rho0_flat,
        opts,
        None,
    );
    let energies = solution.states.iter().map(|rho| sys.energy(rho)).collect();
    Ok(LearningRun {
        times: solution.times,
        states: solution.states,
        energies,
        outcome: solution.outcome,
    })
}

/// Builds the sheaf of free structures: vertex stalks are the flattened
/// adapting-map tuples, edge stalks are the discourse spaces on adapting edges
/// and zero elsewhere, and each restriction map evaluates the matching block
/// at the fixed opinion. Its coboundary matrix equals the discrepancy
/// operator `A`.
pub fn build_structure_sheaf<T: Real>(
    sheaf: &Sheaf<T>,
    x: &Cochain0<T>,
    adapt: &AdaptationSpec,
) -> Result<Sheaf<T>> {
    sheaf.check_cochain0(x)?;
    let graph = sheaf.graph().clone();
    let adapting_edges: BTreeSet<EdgeId> = adapt.adapting_edges(&graph).into_iter().collect();

    // Per-vertex stalk: adapting blocks in edge order, flattened row-major.
    let mut vertex_dims = Vec::with_capacity(graph.vertex_count());
    let mut block_offset: BTreeMap<(VertexId, EdgeId), usize> = BTreeMap::new();
    for v in graph.vertices() {
        let mut dim = 0;
        for e in graph.incident_edges(v) {
            if adapt.contains(v, e) {
                block_offset.insert((v, e), dim);
                dim += sheaf.edge_dim(e) * sheaf.vertex_dim(v);
            }
        }
        vertex_dims.push(dim);
    }
    let edge_dims: Vec<usize> = graph
        .edges()
        .map(|e| {
            if adapting_edges.contains(&e) {
                sheaf.edge_dim(e)
            } else {
                0
            }
        })
        .collect();

    let mut maps = BTreeMap::new();
    for e in graph.edges() {
        let edge = graph.edge(e);
        for v in [edge.tail, edge.head] {
            let rows = edge_dims[e.0];
            let cols = vertex_dims[v.0];
            let mut m = DMatrix::zeros(rows, cols);
            if adapt.contains(v, e) {
                let base = block_offset[&(v, e)];
                let dv = sheaf.vertex_dim(v);
                let xv = x.block(v);
                for i in 0..rows {
                    for j in 0..dv {
                        m[(i, base + i * dv + j)] = xv[j];
                    }
                }
            }
            maps.insert((v, e), m);
        }
    }
    Sheaf::new(graph, vertex_dims, edge_dims, maps)
}

/// Slot table for 0-cochains of the full structure sheaf (every incidence).
#[derive(Debug, Clone)]
pub struct FullStructureLayout {
    offsets: BTreeMap<(VertexId, EdgeId), usize>,
}

impl FullStructureLayout {
    pub fn offset(&self, v: VertexId, e: EdgeId) -> Option<usize> {
        self.offsets.get(&(v, e)).copied()
    }
}

/// Builds the full structure sheaf over every incidence. Used to verify that
/// the forcing `c` is the coboundary of the embedded frozen configuration.
pub fn build_full_structure_sheaf<T: Real>(
    sheaf: &Sheaf<T>,
    x: &Cochain0<T>,
) -> Result<(Sheaf<T>, FullStructureLayout)> {
    let all = AdaptationSpec::all(sheaf.graph());
    let built = build_structure_sheaf(sheaf, x, &all)?;
    let graph = sheaf.graph();
    let mut offsets = BTreeMap::new();
    for v in graph.vertices() {
        let base = built.vertex_blocks().offset(v.0);
        let mut at = 0;
        for e in graph.incident_edges(v) {
            offsets.insert((v, e), base + at);
            at += sheaf.edge_dim(e) * sheaf.vertex_dim(v);
        }
    }
    Ok((built, FullStructureLayout { offsets }))
}

/// Embeds the frozen restriction maps into the full structure sheaf's
/// 0-cochain space (zeros in the adapting slots).
pub fn embed_frozen_maps<T: Real>(
    sheaf: &Sheaf<T>,
    adapt: &AdaptationSpec,
    full: &Sheaf<T>,
    layout: &FullStructureLayout,
) -> DVector<T> {
    let mut flat = DVector::zeros(full.total_vertex_dim());
    for (&(v, e), m) in sheaf.restrictions() {
        if adapt.contains(v, e) {
            continue;
        }
        let base = layout.offset(v, e).expect("incidence in layout");
        let cols = m.ncols();
        for i in 0..m.nrows() {
            for j in 0..cols {
                flat[base + i * cols + j] = m[(i, j)];
            }
        }
    }
    flat
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn path_sheaf() -> (Sheaf<f64>, Cochain0<f64>) {
        let graph = Graph::new(
            vec!["a", "b", "c"],
            vec![("e1", "a", "b"), ("e2", "b", "c")],
        )
        .unwrap();
        let a = graph.vertex_by_label("a").unwrap();
        let b = graph.vertex_by_label("b").unwrap();
        let c = graph.vertex_by_label("c").unwrap();
        let e1 = graph.edge_by_label("e1").unwrap();
        let e2 = graph.edge_by_label("e2").unwrap();
        let mut maps = BTreeMap::new();
        maps.insert((a, e1), DMatrix::from_row_slice(1, 2, &[1.0, -1.0]));
        maps.insert((b, e1), DMatrix::from_row_slice(1, 1, &[2.0]));
        maps.insert((b, e2), DMatrix::from_row_slice(1, 1, &[1.0]));
        maps.insert((c, e2), DMatrix::from_row_slice(1, 1, &[-1.0]));
        let sheaf = Sheaf::new(graph, vec![2, 1, 1], vec![1, 1], maps).unwrap();
        let x = Cochain0::from_blocks(vec![
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_vec(vec![-1.0]),
            DVector::from_vec(vec![3.0]),
        ]);
        (sheaf, x)
    }

    #[test]
    fn current_maps_reproduce_the_coboundary_on_adapting_edges() {
        let (sheaf, x) = path_sheaf();
        let graph = sheaf.graph().clone();
        let a = graph.vertex_by_label("a").unwrap();
        let b = graph.vertex_by_label("b").unwrap();
        let e1 = graph.edge_by_label("e1").unwrap();
        let adapt = AdaptationSpec::new(&graph, vec![(a, e1), (b, e1)]).unwrap();
        let sys = build_discrepancy_system(&sheaf, &x, &adapt).unwrap();
        let rho = sys.current_maps(&sheaf);
        let flat = sys.flatten(&rho).unwrap();
        let d = sys.discrepancy(&flat);
        let full = sheaf.coboundary(&x).unwrap();
        assert!((d[0] - full.block(e1)[0]).abs() < 1e-14);
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn all_incidences_adapting_means_zero_forcing() {
        let (sheaf, x) = path_sheaf();
        let adapt = AdaptationSpec::all(sheaf.graph());
        let sys = build_discrepancy_system(&sheaf, &x, &adapt).unwrap();
        assert_eq!(sys.forcing().norm(), 0.0);
    }

    #[test]
    fn zero_opinions_make_every_configuration_stationary() {
        let (sheaf, _) = path_sheaf();
        let zero = sheaf.zero_cochain0();
        let adapt = AdaptationSpec::all(sheaf.graph());
        let sys = build_discrepancy_system(&sheaf, &zero, &adapt).unwrap();
        assert_eq!(sys.operator().matrix().norm(), 0.0);
        assert_eq!(sys.forcing().norm(), 0.0);
        let rho = sys.current_maps(&sheaf);
        let limit = learning_limit(&sys, &rho).unwrap();
        assert!((limit.rho_flat - sys.flatten(&rho).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn minimizers_are_fixed_points() {
        let (sheaf, x) = path_sheaf();
        let graph = sheaf.graph().clone();
        let b = graph.vertex_by_label("b").unwrap();
        let e2 = graph.edge_by_label("e2").unwrap();
        let adapt = AdaptationSpec::new(&graph, vec![(b, e2)]).unwrap();
        let sys = build_discrepancy_system(&sheaf, &x, &adapt).unwrap();
        let limit0 = learning_limit(&sys, &sys.current_maps(&sheaf)).unwrap();
        let again = learning_limit(&sys, &limit0.rho).unwrap();
        assert!((again.rho_flat - limit0.rho_flat).norm() < 1e-12);
    }

    #[test]
    fn structure_sheaf_coboundary_is_the_discrepancy_operator() {
        let (sheaf, x) = path_sheaf();
        let graph = sheaf.graph().clone();
        let a = graph.vertex_by_label("a").unwrap();
        let b = graph.vertex_by_label("b").unwrap();
        let e1 = graph.edge_by_label("e1").unwrap();
        let adapt = AdaptationSpec::new(&graph, vec![(a, e1), (b, e1)]).unwrap();
        let sys = build_discrepancy_system(&sheaf, &x, &adapt).unwrap();
        let structure = build_structure_sheaf(&sheaf, &x, &adapt).unwrap();
        let d = structure.coboundary_matrix();
        // Zero-dimensional edge stalks drop out of the matrix rows, so both
        // operators act on the same spaces.
        assert_eq!(d.matrix().nrows(), sys.operator().matrix().nrows());
        assert!((d.matrix() - sys.operator().matrix()).norm() < 1e-12);
        let l = structure.laplacian();
        let gram = sys.operator().matrix().transpose() * sys.operator().matrix();
        assert!((l.matrix() - gram).norm() < 1e-12);
    }

    #[test]
    fn forcing_is_the_frozen_configuration_coboundary() {
        let (sheaf, x) = path_sheaf();
        let graph = sheaf.graph().clone();
        let a = graph.vertex_by_label("a").unwrap();
        let b = graph.vertex_by_label("b").unwrap();
        let e1 = graph.edge_by_label("e1").unwrap();
        let adapt = AdaptationSpec::new(&graph, vec![(a, e1), (b, e1)]).unwrap();
        let sys = build_discrepancy_system(&sheaf, &x, &adapt).unwrap();
        let (full, layout) = build_full_structure_sheaf(&sheaf, &x).unwrap();
        let frozen = embed_frozen_maps(&sheaf, &adapt, &full, &layout);
        let coboundary = full.coboundary_matrix().apply(&frozen);
        for &e in sys.adapting_edges() {
            let rows = sys.edge_rows(e).unwrap();
            let full_rows = full.edge_blocks().range(e.0);
            for k in 0..rows.len() {
                let expected = sys.forcing()[rows.start + k];
                let got = coboundary[full_rows.start + k];
                assert!((expected - got).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn regularized_limit_approaches_rho0_for_huge_lambda() {
        let (sheaf, x) = path_sheaf();
        let adapt = AdaptationSpec::all(sheaf.graph());
        let sys = build_discrepancy_system(&sheaf, &x, &adapt).unwrap();
        let rho0 = sys.current_maps(&sheaf);
        let reg = regularized_learning(&sys, &rho0, 1e8).unwrap();
        let drift = (sys.flatten(&reg).unwrap() - sys.flatten(&rho0).unwrap()).norm();
        assert!(drift < 1e-6);
    }
}
