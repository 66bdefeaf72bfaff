//! Directional stubbornness: the sheaf of free opinions, the block-decomposed
//! Laplacian, forced Poisson equilibria, constrained diffusion, and the
//! cohomological compatibility test.
//!
//! Each vertex stalk splits into a clamped subspace (spanned by a user-supplied
//! orthonormal basis) and its orthogonal complement of free directions. All
//! block operators live in the rotated frame induced by that splitting;
//! conversions to ambient coordinates go through the explicit embeddings.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SheafError};
use crate::graph::VertexId;
use crate::linalg;
use crate::operator::{BlockLayout, LinearOperator};
use crate::scalar::{real, Real};
use crate::sheaf::{Cochain0, Sheaf};

/// Per-vertex clamped subspaces and the values they are clamped to.
#[derive(Debug, Clone)]
pub struct StubbornSpec<T: Real> {
    bases: Vec<DMatrix<T>>,
    values: Vec<DVector<T>>,
}

impl<T: Real> StubbornSpec<T> {
    /// Builds a spec from explicit per-vertex `(basis, values)` pairs.
    ///
    /// Bases must have orthonormal columns within `1e-10`; non-orthonormal
    /// input is rejected rather than silently re-orthonormalized, since the
    /// free complement depends on the inner product. Vertices absent from
    /// `entries` are fully free.
    pub fn new(
        sheaf: &Sheaf<T>,
        entries: BTreeMap<VertexId, (DMatrix<T>, DVector<T>)>,
    ) -> Result<Self> {
        let n = sheaf.graph().vertex_count();
        let mut bases = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        for v in sheaf.graph().vertices() {
            let dim = sheaf.vertex_dim(v);
            match entries.get(&v) {
                None => {
                    bases.push(DMatrix::zeros(dim, 0));
                    values.push(DVector::zeros(0));
                }
                Some((basis, value)) => {
                    if basis.nrows() != dim {
                        return Err(SheafError::Conformance {
                            location: format!(
                                "stubborn basis rows at vertex {}",
                                sheaf.graph().vertex_label(v)
                            ),
                            expected: dim,
                            found: basis.nrows(),
                        });
                    }
                    if basis.ncols() > dim {
                        return Err(SheafError::Conformance {
                            location: format!(
                                "stubborn basis columns at vertex {}",
                                sheaf.graph().vertex_label(v)
                            ),
                            expected: dim,
                            found: basis.ncols(),
                        });
                    }
                    if value.len() != basis.ncols() {
                        return Err(SheafError::Conformance {
                            location: format!(
                                "stubborn values at vertex {}",
                                sheaf.graph().vertex_label(v)
                            ),
                            expected: basis.ncols(),
                            found: value.len(),
                        });
                    }
                    let gram = basis.transpose() * basis;
                    let deviation =
                        (&gram - DMatrix::<T>::identity(basis.ncols(), basis.ncols())).norm();
                    if deviation > real::<T>(1e-10) {
                        return Err(SheafError::NonOrthonormalBasis {
                            vertex: sheaf.graph().vertex_label(v).into(),
                            deviation: deviation.to_f64().unwrap_or(f64::NAN),
                        });
                    }
                    bases.push(basis.clone());
                    values.push(value.clone());
                }
            }
        }
        Ok(Self { bases, values })
    }

    /// Spec with no stubborn directions anywhere.
    pub fn empty(sheaf: &Sheaf<T>) -> Self {
        Self {
            bases: sheaf
                .vertex_dims()
                .iter()
                .map(|&d| DMatrix::zeros(d, 0))
                .collect(),
            values: sheaf
                .vertex_dims()
                .iter()
                .map(|_| DVector::zeros(0))
                .collect(),
        }
    }

    pub fn basis(&self, v: VertexId) -> &DMatrix<T> {
        &self.bases[v.0]
    }

    pub fn values(&self, v: VertexId) -> &DVector<T> {
        &self.values[v.0]
    }

    pub fn stubborn_dim(&self, v: VertexId) -> usize {
        self.bases[v.0].ncols()
    }

    /// True when the vertex has at least one clamped direction.
    pub fn is_stubborn(&self, v: VertexId) -> bool {
        self.stubborn_dim(v) > 0
    }

    pub fn total_stubborn_dim(&self) -> usize {
        self.bases.iter().map(|b| b.ncols()).sum()
    }

    /// All clamped values stacked in vertex order.
    pub fn stacked_values(&self) -> DVector<T> {
        let total = self.total_stubborn_dim();
        let mut u = DVector::zeros(total);
        let mut at = 0;
        for v in &self.values {
            u.rows_mut(at, v.len()).copy_from(v);
            at += v.len();
        }
        u
    }
}

/// The Laplacian in the rotated stubborn/free frame, with the embeddings that
/// relate frame coordinates to ambient 0-cochains.
#[derive(Debug, Clone)]
pub struct BlockLaplacian<T: Real> {
    pub l_ss: LinearOperator<T>,
    pub l_sq: LinearOperator<T>,
    pub l_qs: LinearOperator<T>,
    pub l_qq: LinearOperator<T>,
    /// Ambient embedding of stubborn coordinates (orthonormal columns).
    embed_stubborn: DMatrix<T>,
    /// Ambient embedding of free coordinates (orthonormal columns).
    embed_free: DMatrix<T>,
    /// Ambient Laplacian of the underlying sheaf.
    ambient: LinearOperator<T>,
    stubborn_layout: BlockLayout,
    free_layout: BlockLayout,
}

impl<T: Real> BlockLaplacian<T> {
    pub fn stubborn_dim(&self) -> usize {
        self.embed_stubborn.ncols()
    }

    pub fn free_dim(&self) -> usize {
        self.embed_free.ncols()
    }

    pub fn embed_stubborn(&self) -> &DMatrix<T> {
        &self.embed_stubborn
    }

    pub fn embed_free(&self) -> &DMatrix<T> {
        &self.embed_free
    }

    pub fn ambient(&self) -> &LinearOperator<T> {
        &self.ambient
    }

    pub fn stubborn_layout(&self) -> &BlockLayout {
        &self.stubborn_layout
    }

    pub fn free_layout(&self) -> &BlockLayout {
        &self.free_layout
    }

    /// Ambient 0-cochain coordinates of `iota_S u + iota_Q y`.
    pub fn assemble_state(&self, u: &DVector<T>, y: &DVector<T>) -> DVector<T> {
        &self.embed_stubborn * u + &self.embed_free * y
    }

    /// Projection of an ambient vector onto stubborn coordinates.
    pub fn project_stubborn(&self, x: &DVector<T>) -> DVector<T> {
        self.embed_stubborn.transpose() * x
    }

    /// Projection of an ambient vector onto free coordinates.
    pub fn project_free(&self, x: &DVector<T>) -> DVector<T> {
        self.embed_free.transpose() * x
    }
}

/// Builds the sheaf of free opinions and the rotated-frame block Laplacian.
///
/// The free sheaf keeps the edge stalks and composes each restriction map with
/// the inclusion of the free subspace; its Laplacian equals the `QQ` block.
pub fn build_free_sheaf<T: Real>(
    sheaf: &Sheaf<T>,
    spec: &StubbornSpec<T>,
) -> Result<(Sheaf<T>, BlockLaplacian<T>)> {
    let graph = sheaf.graph().clone();
    let n = sheaf.total_vertex_dim();

    // Orthonormal complements per vertex.
    let mut free_bases: Vec<DMatrix<T>> = Vec::with_capacity(graph.vertex_count());
    for v in graph.vertices() {
        let dim = sheaf.vertex_dim(v);
        let s = spec.basis(v);
        let complement = if s.ncols() == 0 {
            DMatrix::identity(dim, dim)
        } else if s.ncols() == dim {
            DMatrix::zeros(dim, 0)
        } else {
            linalg::kernel_basis(&s.transpose(), None)
        };
        debug_assert_eq!(complement.ncols(), dim - s.ncols());
        free_bases.push(complement);
    }

    let stubborn_dims: Vec<usize> = graph.vertices().map(|v| spec.stubborn_dim(v)).collect();
    let free_dims: Vec<usize> = free_bases.iter().map(|b| b.ncols()).collect();
    let stubborn_layout = BlockLayout::new(stubborn_dims);
    let free_layout = BlockLayout::new(free_dims.clone());

    let mut embed_stubborn = DMatrix::zeros(n, stubborn_layout.total());
    let mut embed_free = DMatrix::zeros(n, free_layout.total());
    for v in graph.vertices() {
        let ambient_range = sheaf.vertex_blocks().range(v.0);
        let s_range = stubborn_layout.range(v.0);
        let q_range = free_layout.range(v.0);
        embed_stubborn
            .view_mut(
                (ambient_range.start, s_range.start),
                (ambient_range.len(), s_range.len()),
            )
            .copy_from(spec.basis(v));
        embed_free
            .view_mut(
                (ambient_range.start, q_range.start),
                (ambient_range.len(), q_range.len()),
            )
            .copy_from(&free_bases[v.0]);
    }

    // Free sheaf: restrictions composed with the free inclusion.
    let mut free_maps = BTreeMap::new();
    for (&(v, e), m) in sheaf.restrictions() {
        free_maps.insert((v, e), m * &free_bases[v.0]);
    }
    let free_sheaf = Sheaf::new(graph, free_dims, sheaf.edge_dims().to_vec(), free_maps)?;

    let ambient = sheaf.laplacian();
    let l = ambient.matrix();
    let l_ss = embed_stubborn.transpose() * l * &embed_stubborn;
    let l_sq = embed_stubborn.transpose() * l * &embed_free;
    let l_qs = embed_free.transpose() * l * &embed_stubborn;
    let l_qq = embed_free.transpose() * l * &embed_free;

    let blocks = BlockLaplacian {
        l_ss: LinearOperator::new(l_ss, stubborn_layout.clone(), stubborn_layout.clone())?,
        l_sq: LinearOperator::new(l_sq, stubborn_layout.clone(), free_layout.clone())?,
        l_qs: LinearOperator::new(l_qs, free_layout.clone(), stubborn_layout.clone())?,
        l_qq: LinearOperator::new(l_qq, free_layout.clone(), free_layout.clone())?,
        embed_stubborn,
        embed_free,
        ambient,
        stubborn_layout,
        free_layout,
    };
    Ok((free_sheaf, blocks))
}

/// Poisson equilibrium of the free opinions, computed along three routes that
/// must agree: the ambient-gradient correction, the kernel-projection form,
/// and the block-coordinate correction.
#[derive(Debug, Clone)]
pub struct PoissonSolution<T: Real> {
    /// The equilibrium free coordinates (the correction route).
    pub y: DVector<T>,
    /// Route through the ambient Laplacian applied to the initial total state.
    pub y_ambient_route: DVector<T>,
    /// Route through the kernel projection of the initial condition.
    pub y_projection_route: DVector<T>,
    /// Route through the rotated-frame blocks.
    pub y_correction_route: DVector<T>,
    /// `||L_QQ y + L_QS u||`.
    pub residual: T,
    /// Largest pairwise disagreement between the three routes.
    pub route_spread: T,
}

/// Solves `L_QQ y = -L_QS u`, selecting the solution nearest `y0`.
///
/// Solvability is guaranteed for genuine sheaf blocks; the residual is still
/// checked and a violation reported as an error since it indicates a malformed
/// block operator.
pub fn solve_poisson<T: Real>(
    blocks: &BlockLaplacian<T>,
    u: &DVector<T>,
    y0: &DVector<T>,
) -> Result<PoissonSolution<T>> {
    if u.len() != blocks.stubborn_dim() {
        return Err(SheafError::Conformance {
            location: "stubborn values".into(),
            expected: blocks.stubborn_dim(),
            found: u.len(),
        });
    }
    if y0.len() != blocks.free_dim() {
        return Err(SheafError::Conformance {
            location: "free initial condition".into(),
            expected: blocks.free_dim(),
            found: y0.len(),
        });
    }
    let l_qq = blocks.l_qq.matrix();
    let lqs_u = blocks.l_qs.apply(u);

    // Route 1: y0 - L_QQ^+ P_Q (L x0) with everything through ambient
    // coordinates.
    let x0 = blocks.assemble_state(u, y0);
    let ambient_grad = blocks.ambient.apply(&x0);
    let y_ambient_route = y0 - linalg::pinv_apply(l_qq, &blocks.project_free(&ambient_grad), None);

    // Route 2: P_H0(y0) - L_QQ^+ (L_QS u) with the kernel projector built from
    // an explicit kernel basis.
    let kernel = linalg::kernel_basis(l_qq, None);
    let harmonic = if kernel.ncols() == 0 {
        DVector::zeros(y0.len())
    } else {
        &kernel * (kernel.transpose() * y0)
    };
    let y_projection_route = harmonic - linalg::pinv_apply(l_qq, &lqs_u, None);

    // Route 3: y0 - L_QQ^+ (L_QQ y0 + L_QS u) in frame coordinates.
    let frame_grad = l_qq * y0 + &lqs_u;
    let y_correction_route = y0 - linalg::pinv_apply(l_qq, &frame_grad, None);

    let spread_a = (&y_ambient_route - &y_projection_route).norm();
    let spread_b = (&y_ambient_route - &y_correction_route).norm();
    let spread_c = (&y_projection_route - &y_correction_route).norm();
    let route_spread = spread_a.max(spread_b).max(spread_c);

    let y = y_correction_route.clone();
    let residual = (l_qq * &y + &lqs_u).norm();
    let scale = T::one() + lqs_u.norm() + l_qq.norm() * y.norm();
    let tolerance = real::<T>(1e-9) * scale;
    if residual > tolerance {
        return Err(SheafError::Solvability {
            residual: residual.to_f64().unwrap_or(f64::NAN),
            tolerance: tolerance.to_f64().unwrap_or(f64::NAN),
        });
    }
    if route_spread > tolerance {
        return Err(SheafError::Numerical(format!(
            "Poisson solution routes disagree by {route_spread:e}"
        )));
    }
    Ok(PoissonSolution {
        y,
        y_ambient_route,
        y_projection_route,
        y_correction_route,
        residual,
        route_spread,
    })
}

/// Trajectory of constrained diffusion in free coordinates.
#[derive(Debug, Clone)]
pub struct ConstrainedRun<T: Real> {
    pub times: Vec<T>,
    pub free_states: Vec<DVector<T>>,
    pub energies: Vec<T>,
    pub outcome: crate::ode::OdeOutcome<T>,
}

impl<T: Real> ConstrainedRun<T> {
    pub fn final_free_state(&self) -> &DVector<T> {
        self.free_states.last().expect("run holds at least y0")
    }
}

/// Integrates `dy/dt = -alpha (L_QQ y + L_QS u)`.
///
/// The sampled total state is `iota_S u + iota_Q y(t)`; energies are measured
/// on the original sheaf.
pub fn constrained_diffuse<T: Real>(
    sheaf: &Sheaf<T>,
    blocks: &BlockLaplacian<T>,
    u: &DVector<T>,
    y0: &DVector<T>,
    alpha: T,
    opts: &crate::ode::OdeOptions<T>,
) -> Result<ConstrainedRun<T>> {
    if alpha <= T::zero() {
        return Err(SheafError::NonPositiveParameter {
            name: "alpha",
            value: alpha.to_f64().unwrap_or(f64::NAN),
        });
    }
    let l_qq = blocks.l_qq.matrix().clone();
    let forcing = blocks.l_qs.apply(u);
    let solution = crate::ode::integrate(
        |_t, y: &DVector<T>| -((&l_qq * y) + &forcing) * alpha,
        y0.clone(),
        opts,
        None,
    );
    let energies = solution
        .states
        .iter()
        .map(|y| {
            let x = sheaf
                .cochain0_from_flat(&blocks.assemble_state(u, y))
                .expect("state conforms");
            sheaf.disagreement_energy(&x).expect("state conforms")
        })
        .collect();
    Ok(ConstrainedRun {
        times: solution.times,
        free_states: solution.states,
        energies,
        outcome: solution.outcome,
    })
}

/// Total state `iota_S u + iota_Q y` as a cochain on the original sheaf.
pub fn total_state<T: Real>(
    sheaf: &Sheaf<T>,
    blocks: &BlockLaplacian<T>,
    u: &DVector<T>,
    y: &DVector<T>,
) -> Cochain0<T> {
    sheaf
        .cochain0_from_flat(&blocks.assemble_state(u, y))
        .expect("state conforms")
}

/// Obstruction to extending the clamped values to a global section.
///
/// Computes the coboundary of the embedded values and measures its component
/// orthogonal to the image of the free coboundary; that norm is zero exactly
/// when an exact-consensus state compatible with the clamps exists, and its
/// square equals the minimal achievable `||d x||^2`.
pub fn compatibility_obstruction<T: Real>(
    sheaf: &Sheaf<T>,
    spec: &StubbornSpec<T>,
    u: &DVector<T>,
    tol: Option<T>,
) -> Result<(bool, T)> {
    let (free_sheaf, blocks) = build_free_sheaf(sheaf, spec)?;
    if u.len() != blocks.stubborn_dim() {
        return Err(SheafError::Conformance {
            location: "stubborn values".into(),
            expected: blocks.stubborn_dim(),
            found: u.len(),
        });
    }
    let d_full = sheaf.coboundary_matrix();
    let forced = d_full.apply(&(blocks.embed_stubborn() * u));
    let d_free = free_sheaf.coboundary_matrix();
    let residual = linalg::range_complement_residual(d_free.matrix(), &forced, None).norm();
    // Relative threshold with a roundoff floor for vanishing clamp values.
    let floor = real::<T>(1e-12) * (T::one() + d_full.matrix().norm() * u.norm());
    let threshold = tol.unwrap_or_else(|| real::<T>(1e-8) * forced.norm() + floor);
    Ok((residual <= threshold, residual))
}

/// Dimension bookkeeping for the five-term cohomology sequence induced by the
/// free/stubborn splitting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactSequenceReport {
    pub dim_h0_free: usize,
    pub dim_h0_full: usize,
    pub dim_c0_stubborn: usize,
    pub dim_h1_free: usize,
    pub dim_h1_full: usize,
    /// `h0_free - h0_full + c0_stubborn - h1_free + h1_full`; zero by exactness.
    pub alternating_sum: isize,
    /// Whether the embedding of free sections into full sections has full rank.
    pub embedding_injective: bool,
}

pub fn exact_sequence_audit<T: Real>(
    sheaf: &Sheaf<T>,
    spec: &StubbornSpec<T>,
) -> Result<ExactSequenceReport> {
    let (free_sheaf, blocks) = build_free_sheaf(sheaf, spec)?;
    let d_full = sheaf.coboundary_matrix();
    let d_free = free_sheaf.coboundary_matrix();
    let edge_total = sheaf.total_edge_dim();

    let rank_full = linalg::rank(d_full.matrix(), None);
    let rank_free = linalg::rank(d_free.matrix(), None);

    let dim_h0_full = sheaf.total_vertex_dim() - rank_full;
    let dim_h0_free = free_sheaf.total_vertex_dim() - rank_free;
    let dim_h1_full = edge_total - rank_full;
    let dim_h1_free = edge_total - rank_free;
    let dim_c0_stubborn = blocks.stubborn_dim();

    let alternating_sum = dim_h0_free as isize - dim_h0_full as isize + dim_c0_stubborn as isize
        - dim_h1_free as isize
        + dim_h1_full as isize;

    let kernel_free = d_free.kernel_basis(None);
    let embedded = blocks.embed_free() * &kernel_free;
    let embedding_injective = linalg::rank(&embedded, None) == kernel_free.ncols();

    Ok(ExactSequenceReport {
        dim_h0_free,
        dim_h0_full,
        dim_c0_stubborn,
        dim_h1_free,
        dim_h1_full,
        alternating_sum,
        embedding_injective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn two_dim_vertex_sheaf() -> Sheaf<f64> {
        let graph = Graph::new(vec!["u", "v"], vec![("e", "u", "v")]).unwrap();
        let u = graph.vertex_by_label("u").unwrap();
        let v = graph.vertex_by_label("v").unwrap();
        let e = graph.edge_by_label("e").unwrap();
        let mut maps = BTreeMap::new();
        maps.insert((u, e), DMatrix::from_row_slice(1, 2, &[0.5, 0.5]));
        maps.insert((v, e), DMatrix::from_row_slice(1, 1, &[1.0]));
        Sheaf::new(graph, vec![2, 1], vec![1], maps).unwrap()
    }

    #[test]
    fn rejects_non_orthonormal_bases() {
        let sheaf = two_dim_vertex_sheaf();
        let u = sheaf.graph().vertex_by_label("u").unwrap();
        let mut entries = BTreeMap::new();
        entries.insert(
            u,
            (
                DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
                DVector::from_vec(vec![1.0]),
            ),
        );
        let err = StubbornSpec::new(&sheaf, entries).unwrap_err();
        assert!(matches!(err, SheafError::NonOrthonormalBasis { .. }));
    }

    #[test]
    fn empty_spec_reproduces_the_original_laplacian() {
        let sheaf = two_dim_vertex_sheaf();
        let spec = StubbornSpec::empty(&sheaf);
        let (free_sheaf, blocks) = build_free_sheaf(&sheaf, &spec).unwrap();
        assert_eq!(blocks.stubborn_dim(), 0);
        assert_eq!(blocks.free_dim(), 3);
        let diff = (free_sheaf.laplacian().matrix() - sheaf.laplacian().matrix()).norm();
        assert!(diff < 1e-14);
        let diff = (blocks.l_qq.matrix() - sheaf.laplacian().matrix()).norm();
        assert!(diff < 1e-14);
    }

    #[test]
    fn fully_stubborn_vertex_gives_dirichlet_block() {
        let sheaf = two_dim_vertex_sheaf();
        let u = sheaf.graph().vertex_by_label("u").unwrap();
        let mut entries = BTreeMap::new();
        entries.insert(
            u,
            (DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 1.0])),
        );
        let spec = StubbornSpec::new(&sheaf, entries).unwrap();
        let (free_sheaf, blocks) = build_free_sheaf(&sheaf, &spec).unwrap();
        assert_eq!(free_sheaf.vertex_dim(u), 0);
        // Deleting u's rows and columns from L leaves the v-block, which is 1.
        assert_eq!(blocks.l_qq.matrix().nrows(), 1);
        assert!((blocks.l_qq.matrix()[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn homogeneous_poisson_is_kernel_projection() {
        let sheaf = two_dim_vertex_sheaf();
        let spec = StubbornSpec::empty(&sheaf);
        let (free_sheaf, blocks) = build_free_sheaf(&sheaf, &spec).unwrap();
        let u = DVector::zeros(0);
        let y0 = DVector::from_vec(vec![2.0, -1.0, 0.5]);
        let sol = solve_poisson(&blocks, &u, &y0).unwrap();
        let kernel = free_sheaf.coboundary_matrix().kernel_basis(None);
        let projected = &kernel * (kernel.transpose() * &y0);
        assert!((sol.y - projected).norm() < 1e-9);
    }

    #[test]
    fn off_diagonal_blocks_are_transposes() {
        let sheaf = two_dim_vertex_sheaf();
        let u = sheaf.graph().vertex_by_label("u").unwrap();
        let mut entries = BTreeMap::new();
        entries.insert(
            u,
            (
                DMatrix::from_row_slice(2, 1, &[0.6, 0.8]),
                DVector::from_vec(vec![2.0]),
            ),
        );
        let spec = StubbornSpec::new(&sheaf, entries).unwrap();
        let (_, blocks) = build_free_sheaf(&sheaf, &spec).unwrap();
        let gap = (blocks.l_qs.matrix() - blocks.l_sq.matrix().transpose()).norm();
        assert!(gap < 1e-12);
    }

    #[test]
    fn poisson_solutions_are_flow_fixed_points() {
        let sheaf = two_dim_vertex_sheaf();
        let u = sheaf.graph().vertex_by_label("u").unwrap();
        let mut entries = BTreeMap::new();
        entries.insert(
            u,
            (
                DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
                DVector::from_vec(vec![2.0]),
            ),
        );
        let spec = StubbornSpec::new(&sheaf, entries).unwrap();
        let (_, blocks) = build_free_sheaf(&sheaf, &spec).unwrap();
        let clamp = spec.stacked_values();
        let y0 = DVector::from_vec(vec![0.3, -0.7]);
        let solution = solve_poisson(&blocks, &clamp, &y0).unwrap();
        let run = constrained_diffuse(
            &sheaf,
            &blocks,
            &clamp,
            &solution.y,
            1.0,
            &crate::ode::OdeOptions::default(),
        )
        .unwrap();
        assert!(run.outcome.converged());
        assert_eq!(run.times.len(), 1);
    }

    #[test]
    fn audit_alternating_sum_vanishes() {
        let sheaf = two_dim_vertex_sheaf();
        let u = sheaf.graph().vertex_by_label("u").unwrap();
        let mut entries = BTreeMap::new();
        entries.insert(
            u,
            (
                DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
                DVector::from_vec(vec![1.0]),
            ),
        );
        let spec = StubbornSpec::new(&sheaf, entries).unwrap();
        let report = exact_sequence_audit(&sheaf, &spec).unwrap();
        assert_eq!(report.alternating_sum, 0);
        assert!(report.embedding_injective);
    }
}
