//! Constrained joint evolution of opinions and restriction maps.
//!
//! Opinions relax along the projected Laplacian flow while the adapting
//! restriction maps descend the same disagreement energy; frozen maps and
//! clamped opinion directions never move. The disagreement energy is
//! nonincreasing along every trajectory, but the Frobenius norm of the map
//! collection is only guaranteed monotone when every edge has symmetric
//! adaptation status, so runs carry divergence ceilings and report hitting
//! one as a structured outcome rather than an error.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SheafError};
use crate::graph::{EdgeId, Graph, VertexId};
use crate::learning::{AdaptationSpec, StructureCochain};
use crate::ode::{integrate, OdeOptions, OdeOutcome};
use crate::scalar::{real, Real};
use crate::sheaf::{Cochain0, Sheaf};
use crate::stubborn::{build_free_sheaf, BlockLaplacian, StubbornSpec};

/// Per-edge policy labels for joint runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Both restriction maps evolve.
    UniversalAdaptation,
    /// Both restriction maps are frozen.
    StructuralStubbornness,
    /// Mixed edge: the free endpoint adapts, the stubborn one is frozen.
    Accommodation,
    /// Mixed edge: the stubborn endpoint adapts, the free one is frozen.
    Outreach,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::UniversalAdaptation => "universal-adaptation",
            Scenario::StructuralStubbornness => "structural-stubbornness",
            Scenario::Accommodation => "accommodation",
            Scenario::Outreach => "outreach",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "universal-adaptation" => Some(Scenario::UniversalAdaptation),
            "structural-stubbornness" => Some(Scenario::StructuralStubbornness),
            "accommodation" => Some(Scenario::Accommodation),
            "outreach" => Some(Scenario::Outreach),
            _ => None,
        }
    }
}

/// Per-edge scenario table; compiles to an adaptation set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioPolicy {
    per_edge: BTreeMap<EdgeId, Scenario>,
}

impl ScenarioPolicy {
    pub fn new(per_edge: BTreeMap<EdgeId, Scenario>) -> Self {
        Self { per_edge }
    }

    pub fn scenario(&self, e: EdgeId) -> Option<Scenario> {
        self.per_edge.get(&e).copied()
    }

    pub fn per_edge(&self) -> &BTreeMap<EdgeId, Scenario> {
        &self.per_edge
    }

    /// Compiles the table into the set of adapting incidences.
    ///
    /// Accommodation and outreach are only meaningful on mixed edges
    /// (exactly one stubborn endpoint); anything else is a policy error, and
    /// so is an edge without a label.
    pub fn compile<T: Real>(
        &self,
        graph: &Graph,
        spec: &StubbornSpec<T>,
    ) -> Result<AdaptationSpec> {
        let mut pairs = Vec::new();
        for e in graph.edges() {
            let edge = graph.edge(e);
            let scenario = self
                .per_edge
                .get(&e)
                .copied()
                .ok_or_else(|| SheafError::Policy {
                    edge: graph.edge_label(e).into(),
                    reason: "no scenario assigned".into(),
                })?;
            let tail_stubborn = spec.is_stubborn(edge.tail);
            let head_stubborn = spec.is_stubborn(edge.head);
            match scenario {
                Scenario::UniversalAdaptation => {
                    pairs.push((edge.tail, e));
                    pairs.push((edge.head, e));
                }
                Scenario::StructuralStubbornness => {}
                Scenario::Accommodation | Scenario::Outreach => {
                    if tail_stubborn == head_stubborn {
                        return Err(SheafError::Policy {
                            edge: graph.edge_label(e).into(),
                            reason: format!(
                                "{} applies only to mixed edges (one stubborn endpoint)",
                                scenario.name()
                            ),
                        });
                    }
                    let (stubborn_v, free_v) = if tail_stubborn {
                        (edge.tail, edge.head)
                    } else {
                        (edge.head, edge.tail)
                    };
                    match scenario {
                        Scenario::Accommodation => pairs.push((free_v, e)),
                        Scenario::Outreach => pairs.push((stubborn_v, e)),
                        _ => unreachable!(),
                    }
                }
            }
        }
        AdaptationSpec::new(graph, pairs)
    }
}

/// Edge partitions by endpoint stubbornness and adaptation symmetry.
#[derive(Debug, Clone)]
pub struct EdgeClassification {
    pub both_free: Vec<EdgeId>,
    pub both_stubborn: Vec<EdgeId>,
    pub mixed: Vec<EdgeId>,
    pub symmetric: Vec<EdgeId>,
    pub asymmetric: Vec<EdgeId>,
    pub scenarios: Option<BTreeMap<EdgeId, Scenario>>,
}

/// Partitions the edges and, when a policy is supplied, checks that the
/// adaptation set matches the compiled scenario table exactly.
pub fn classify_edges<T: Real>(
    graph: &Graph,
    spec: &StubbornSpec<T>,
    adapt: &AdaptationSpec,
    policy: Option<&ScenarioPolicy>,
) -> Result<EdgeClassification> {
    let mut both_free = Vec::new();
    let mut both_stubborn = Vec::new();
    let mut mixed = Vec::new();
    let mut symmetric = Vec::new();
    let mut asymmetric = Vec::new();
    for e in graph.edges() {
        let edge = graph.edge(e);
        let tail_stubborn = spec.is_stubborn(edge.tail);
        let head_stubborn = spec.is_stubborn(edge.head);
        match (tail_stubborn, head_stubborn) {
            (false, false) => both_free.push(e),
            (true, true) => both_stubborn.push(e),
            _ => mixed.push(e),
        }
        match adapt.edge_adaptation(graph, e) {
            crate::learning::EdgeAdaptation::Symmetric => symmetric.push(e),
            crate::learning::EdgeAdaptation::Asymmetric => asymmetric.push(e),
        }
    }
    let scenarios = match policy {
        None => None,
        Some(policy) => {
            let compiled = policy.compile(graph, spec)?;
            if &compiled != adapt {
                return Err(SheafError::Policy {
                    edge: "<policy table>".into(),
                    reason: "adaptation set does not match the compiled scenario table".into(),
                });
            }
            Some(policy.per_edge.clone())
        }
    };
    Ok(EdgeClassification {
        both_free,
        both_stubborn,
        mixed,
        symmetric,
        asymmetric,
        scenarios,
    })
}

/// One adapting map's scatter positions inside the ambient coboundary matrix.
#[derive(Debug, Clone)]
struct JointSlot {
    vertex: VertexId,
    edge: EdgeId,
    rows: usize,
    cols: usize,
    /// Offset in the flattened adapting-map vector.
    offset: usize,
    /// Ambient row offset of the edge block.
    edge_row: usize,
    /// Ambient column offset of the vertex block.
    vertex_col: usize,
    sign: f64,
}

/// Divergence ceilings for joint runs; defaults are `1e6` times the initial
/// norms.
#[derive(Debug, Clone)]
pub struct Ceilings<T: Real> {
    pub map_fro: T,
    pub free_norm: T,
}

impl<T: Real> Ceilings<T> {
    pub fn from_initial(map_fro0: T, free0: T) -> Self {
        let factor = real::<T>(1e6);
        Self {
            map_fro: factor * map_fro0.max(T::one()),
            free_norm: factor * free0.max(T::one()),
        }
    }
}

/// How a joint run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum JointOutcome<T: Real> {
    Converged {
        time: T,
    },
    ReachedHorizon {
        residual_velocity: T,
    },
    /// A norm ceiling was hit; boundedness is only guaranteed a priori when
    /// every edge is symmetric, so the report carries the asymmetric edges.
    DivergenceCeiling {
        time: T,
        quantity: String,
        value: T,
        ceiling: T,
        asymmetric_edges: Vec<EdgeId>,
    },
    StepBudgetExhausted {
        time: T,
    },
}

impl<T: Real> JointOutcome<T> {
    pub fn converged(&self) -> bool {
        matches!(self, JointOutcome::Converged { .. })
    }
}

/// The joint problem: a sheaf, the clamped directions, the adapting
/// incidences, and the two rates.
#[derive(Debug, Clone)]
pub struct JointProblem<T: Real> {
    sheaf: Sheaf<T>,
    spec: StubbornSpec<T>,
    adapt: AdaptationSpec,
    blocks: BlockLaplacian<T>,
    clamped: DVector<T>,
    alpha: T,
    beta: T,
    slots: Vec<JointSlot>,
    map_dim: usize,
    /// Coboundary entries of the frozen maps; adapting blocks zeroed.
    frozen_coboundary: DMatrix<T>,
    /// Squared Frobenius norm of the frozen maps.
    frozen_fro_sq: T,
}

impl<T: Real> JointProblem<T> {
    pub fn new(
        sheaf: &Sheaf<T>,
        spec: &StubbornSpec<T>,
        adapt: &AdaptationSpec,
        alpha: T,
        beta: T,
    ) -> Result<Self> {
        // Zero rates are allowed: they freeze one side and recover the pure
        // diffusion / pure learning flows.
        if alpha < T::zero() {
            return Err(SheafError::NonPositiveParameter {
                name: "alpha",
                value: alpha.to_f64().unwrap_or(f64::NAN),
            });
        }
        if beta < T::zero() {
            return Err(SheafError::NonPositiveParameter {
                name: "beta",
                value: beta.to_f64().unwrap_or(f64::NAN),
            });
        }
        let (_, blocks) = build_free_sheaf(sheaf, spec)?;
        let graph = sheaf.graph();

        let mut slots = Vec::with_capacity(adapt.len());
        let mut offset = 0;
        for (v, e) in adapt.incidences() {
            if !graph.is_incidence(v, e) {
                return Err(SheafError::NotAnIncidence {
                    vertex: graph.vertex_label(v).into(),
                    edge: graph.edge_label(e).into(),
                });
            }
            let rows = sheaf.edge_dim(e);
            let cols = sheaf.vertex_dim(v);
            slots.push(JointSlot {
                vertex: v,
                edge: e,
                rows,
                cols,
                offset,
                edge_row: sheaf.edge_blocks().offset(e.0),
                vertex_col: sheaf.vertex_blocks().offset(v.0),
                sign: graph.incidence_sign(v, e).expect("validated") as f64,
            });
            offset += rows * cols;
        }
        let map_dim = offset;

        let mut frozen_coboundary =
            DMatrix::zeros(sheaf.total_edge_dim(), sheaf.total_vertex_dim());
        let mut frozen_fro_sq = T::zero();
        for (&(v, e), m) in sheaf.restrictions() {
            if adapt.contains(v, e) {
                continue;
            }
            frozen_fro_sq += m.dot(m);
            let sign = real::<T>(graph.incidence_sign(v, e).expect("endpoint") as f64);
            let er = sheaf.edge_blocks().offset(e.0);
            let vc = sheaf.vertex_blocks().offset(v.0);
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    frozen_coboundary[(er + i, vc + j)] += sign * m[(i, j)];
                }
            }
        }

        Ok(Self {
            sheaf: sheaf.clone(),
            spec: spec.clone(),
            adapt: adapt.clone(),
            clamped: spec.stacked_values(),
            blocks,
            alpha,
            beta,
            slots,
            map_dim,
            frozen_coboundary,
            frozen_fro_sq,
        })
    }

    pub fn sheaf(&self) -> &Sheaf<T> {
        &self.sheaf
    }

    pub fn stubborn_spec(&self) -> &StubbornSpec<T> {
        &self.spec
    }

    pub fn adaptation(&self) -> &AdaptationSpec {
        &self.adapt
    }

    pub fn blocks(&self) -> &BlockLaplacian<T> {
        &self.blocks
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn map_dim(&self) -> usize {
        self.map_dim
    }

    pub fn free_dim(&self) -> usize {
        self.blocks.free_dim()
    }

    pub fn clamped_values(&self) -> &DVector<T> {
        &self.clamped
    }

    /// Flattened adapting maps of the problem's sheaf.
    pub fn initial_maps_flat(&self) -> DVector<T> {
        let mut flat = DVector::zeros(self.map_dim);
        for slot in &self.slots {
            let m = self.sheaf.restriction(slot.vertex, slot.edge);
            for i in 0..slot.rows {
                for j in 0..slot.cols {
                    flat[slot.offset + i * slot.cols + j] = m[(i, j)];
                }
            }
        }
        flat
    }

    /// Free coordinates of a full initial opinion state.
    pub fn free_coordinates(&self, x0: &Cochain0<T>) -> Result<DVector<T>> {
        self.sheaf.check_cochain0(x0)?;
        Ok(self.blocks.project_free(&x0.to_flat()))
    }

    /// Ambient coboundary matrix for the given adapting maps.
    pub fn coboundary_with(&self, maps_flat: &DVector<T>) -> DMatrix<T> {
        let mut d = self.frozen_coboundary.clone();
        for slot in &self.slots {
            let sign = real::<T>(slot.sign);
            for i in 0..slot.rows {
                for j in 0..slot.cols {
                    d[(slot.edge_row + i, slot.vertex_col + j)] +=
                        sign * maps_flat[slot.offset + i * slot.cols + j];
                }
            }
        }
        d
    }

    /// Frobenius norm of the full map collection (frozen + adapting).
    pub fn maps_frobenius(&self, maps_flat: &DVector<T>) -> T {
        (self.frozen_fro_sq + maps_flat.norm_squared()).sqrt()
    }

    /// Ambient opinion coordinates for the given free coordinates.
    pub fn ambient_opinions(&self, free: &DVector<T>) -> DVector<T> {
        self.blocks.assemble_state(&self.clamped, free)
    }

    /// Disagreement energy `0.5 ||d x||^2` of a joint state.
    pub fn psi(&self, free: &DVector<T>, maps_flat: &DVector<T>) -> T {
        let d = self.coboundary_with(maps_flat);
        let x = self.ambient_opinions(free);
        (d * x).norm_squared() * real::<T>(0.5)
    }

    /// Full restriction-map collection of a joint state; frozen maps are
    /// carried over verbatim.
    pub fn maps_at(&self, maps_flat: &DVector<T>) -> BTreeMap<(VertexId, EdgeId), DMatrix<T>> {
        let mut maps = self.sheaf.restrictions().clone();
        for slot in &self.slots {
            let mut m = DMatrix::zeros(slot.rows, slot.cols);
            for i in 0..slot.rows {
                for j in 0..slot.cols {
                    m[(i, j)] = maps_flat[slot.offset + i * slot.cols + j];
                }
            }
            maps.insert((slot.vertex, slot.edge), m);
        }
        maps
    }

    /// Sheaf with the adapting maps replaced by the given coordinates.
    pub fn sheaf_at(&self, maps_flat: &DVector<T>) -> Sheaf<T> {
        let replacements = self.maps_at(maps_flat);
        self.sheaf
            .with_restrictions(&replacements)
            .expect("maps conform by construction")
    }

    /// Gradient blocks `sigma (d x)_e x_v^T` stacked over the adapting maps.
    fn map_gradient(&self, dx: &DVector<T>, x: &DVector<T>) -> DVector<T> {
        let mut g = DVector::zeros(self.map_dim);
        for slot in &self.slots {
            let sign = real::<T>(slot.sign);
            let xv = x.rows(slot.vertex_col, slot.cols);
            for i in 0..slot.rows {
                let de_i = dx[slot.edge_row + i];
                for j in 0..slot.cols {
                    g[slot.offset + i * slot.cols + j] = sign * de_i * xv[j];
                }
            }
        }
        g
    }

    /// Velocity field of the joint flow on the stacked `(free, maps)` state.
    fn velocity(&self, state: &DVector<T>) -> DVector<T> {
        let q = self.blocks.free_dim();
        let free = state.rows(0, q).into_owned();
        let maps_flat = state.rows(q, self.map_dim).into_owned();

        let d = self.coboundary_with(&maps_flat);
        let x = self.ambient_opinions(&free);
        let dx = &d * &x;

        let mut velocity = DVector::zeros(state.len());
        if self.alpha > T::zero() {
            let grad_opinions = d.transpose() * &dx;
            let dy = -self.blocks.project_free(&grad_opinions) * self.alpha;
            velocity.rows_mut(0, q).copy_from(&dy);
        }
        if self.beta > T::zero() && self.map_dim > 0 {
            let dm = -self.map_gradient(&dx, &x) * self.beta;
            velocity.rows_mut(q, self.map_dim).copy_from(&dm);
        }
        velocity
    }

    /// Runs the constrained joint flow from the full opinion state `x0`.
    pub fn flow(
        &self,
        x0: &Cochain0<T>,
        opts: &OdeOptions<T>,
        ceilings: Option<Ceilings<T>>,
    ) -> Result<JointRun<T>> {
        let free0 = self.free_coordinates(x0)?;
        let maps0 = self.initial_maps_flat();
        self.flow_from(&free0, &maps0, opts, ceilings)
    }

    /// Runs the joint flow from explicit free coordinates and adapting maps.
    pub fn flow_from(
        &self,
        free0: &DVector<T>,
        maps0: &DVector<T>,
        opts: &OdeOptions<T>,
        ceilings: Option<Ceilings<T>>,
    ) -> Result<JointRun<T>> {
        let q = self.blocks.free_dim();
        if free0.len() != q {
            return Err(SheafError::Conformance {
                location: "free coordinates".into(),
                expected: q,
                found: free0.len(),
            });
        }
        if maps0.len() != self.map_dim {
            return Err(SheafError::Conformance {
                location: "adapting map coordinates".into(),
                expected: self.map_dim,
                found: maps0.len(),
            });
        }
        let ceilings = ceilings
            .unwrap_or_else(|| Ceilings::from_initial(self.maps_frobenius(maps0), free0.norm()));

        let mut state0 = DVector::zeros(q + self.map_dim);
        state0.rows_mut(0, q).copy_from(free0);
        state0.rows_mut(q, self.map_dim).copy_from(maps0);

        let mut breach: Option<(T, String, T, T)> = None;
        let mut guard = |t: T, state: &DVector<T>| {
            let free_norm = state.rows(0, q).norm();
            let fro = self.maps_frobenius(&state.rows(q, self.map_dim).into_owned());
            if fro > ceilings.map_fro {
                breach = Some((t, "map Frobenius norm".into(), fro, ceilings.map_fro));
                return Some("map norm ceiling".to_string());
            }
            if free_norm > ceilings.free_norm {
                breach = Some((t, "free opinion norm".into(), free_norm, ceilings.free_norm));
                return Some("opinion norm ceiling".to_string());
            }
            None
        };
        let solution = integrate(
            |_t, state: &DVector<T>| self.velocity(state),
            state0,
            opts,
            Some(&mut guard),
        );

        let times = solution.times;
        let mut free_states = Vec::with_capacity(solution.states.len());
        let mut map_states = Vec::with_capacity(solution.states.len());
        for state in &solution.states {
            free_states.push(state.rows(0, q).into_owned());
            map_states.push(state.rows(q, self.map_dim).into_owned());
        }
        let psi = free_states
            .iter()
            .zip(&map_states)
            .map(|(y, m)| self.psi(y, m))
            .collect();
        let map_fro = map_states.iter().map(|m| self.maps_frobenius(m)).collect();

        let outcome = match solution.outcome {
            OdeOutcome::Converged { time } => JointOutcome::Converged { time },
            OdeOutcome::ReachedHorizon { residual_velocity } => {
                JointOutcome::ReachedHorizon { residual_velocity }
            }
            OdeOutcome::GuardStop { time, .. } => {
                let (time, quantity, value, ceiling) =
                    breach
                        .take()
                        .unwrap_or((time, "unknown".into(), T::zero(), T::zero()));
                JointOutcome::DivergenceCeiling {
                    time,
                    quantity,
                    value,
                    ceiling,
                    asymmetric_edges: self.adapt.asymmetric_edges(self.sheaf.graph()),
                }
            }
            OdeOutcome::StepBudgetExhausted { time } => JointOutcome::StepBudgetExhausted { time },
        };
        Ok(JointRun {
            times,
            free_states,
            map_states,
            psi,
            map_fro,
            outcome,
        })
    }
}

/// Trajectory of a joint run: free opinion coordinates and adapting-map
/// coordinates per accepted step, with the monitored scalars.
#[derive(Debug, Clone)]
pub struct JointRun<T: Real> {
    pub times: Vec<T>,
    pub free_states: Vec<DVector<T>>,
    pub map_states: Vec<DVector<T>>,
    /// Disagreement energy per sample.
    pub psi: Vec<T>,
    /// Frobenius norm of the full map collection per sample.
    pub map_fro: Vec<T>,
    pub outcome: JointOutcome<T>,
}

impl<T: Real> JointRun<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_free(&self) -> &DVector<T> {
        self.free_states.last().expect("run holds initial state")
    }

    pub fn final_maps(&self) -> &DVector<T> {
        self.map_states.last().expect("run holds initial state")
    }

    /// Full joint state at sample `i`.
    pub fn state(&self, problem: &JointProblem<T>, i: usize) -> JointState<T> {
        JointState {
            time: self.times[i],
            free: self.free_states[i].clone(),
            maps: problem.maps_at(&self.map_states[i]),
        }
    }

    pub fn final_state(&self, problem: &JointProblem<T>) -> JointState<T> {
        self.state(problem, self.len() - 1)
    }
}

/// A joint state: time, free opinion coordinates, and the full restriction
/// map collection (frozen maps verbatim).
#[derive(Debug, Clone)]
pub struct JointState<T: Real> {
    pub time: T,
    pub free: DVector<T>,
    pub maps: BTreeMap<(VertexId, EdgeId), DMatrix<T>>,
}

impl<T: Real> JointState<T> {
    /// Total opinion state as a cochain on the problem's sheaf.
    pub fn opinions(&self, problem: &JointProblem<T>) -> Cochain0<T> {
        problem
            .sheaf()
            .cochain0_from_flat(&problem.ambient_opinions(&self.free))
            .expect("state conforms")
    }

    /// Adapting maps of this state as a structure cochain.
    pub fn structure_cochain(&self, adapt: &AdaptationSpec) -> StructureCochain<T> {
        StructureCochain::from_blocks(
            self.maps
                .iter()
                .filter(|((v, e), _)| adapt.contains(*v, *e))
                .map(|(k, m)| (*k, m.clone()))
                .collect(),
        )
    }
}

/// Classification of an edge at (or near) an equilibrium state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeEquilibriumClass {
    /// Expressed opinions agree within tolerance.
    ConsensusAchieved,
    /// Residual remains but every adapting endpoint has a vanishing opinion,
    /// so the map velocity is zero anyway.
    VacuouslyStationary,
    /// No adapting incidence; the residual is frozen in.
    FrozenResidual,
    /// Residual and a live adapting endpoint: not stationary.
    Unsettled,
}

impl EdgeEquilibriumClass {
    pub fn name(self) -> &'static str {
        match self {
            EdgeEquilibriumClass::ConsensusAchieved => "consensus-achieved",
            EdgeEquilibriumClass::VacuouslyStationary => "vacuously-stationary",
            EdgeEquilibriumClass::FrozenResidual => "frozen-residual",
            EdgeEquilibriumClass::Unsettled => "unsettled",
        }
    }
}

/// Per-edge equilibrium report entry.
#[derive(Debug, Clone)]
pub struct EdgeResidualReport<T: Real> {
    pub edge: EdgeId,
    pub residual: T,
    pub class: EdgeEquilibriumClass,
    /// `(vertex, ||x_v||)` for each adapting incidence on this edge.
    pub adapting_opinion_norms: Vec<(VertexId, T)>,
}

/// Classifies every edge of a joint state by its discrepancy and the opinion
/// norms at its adapting endpoints. A vanishing-opinion threshold of `1e-8`
/// marks adapting endpoints whose stationarity is vacuous.
pub fn equilibrium_residuals<T: Real>(
    problem: &JointProblem<T>,
    free: &DVector<T>,
    maps_flat: &DVector<T>,
    consensus_tol: Option<T>,
) -> Vec<EdgeResidualReport<T>> {
    let vanish_tol = real::<T>(1e-8);
    let consensus_tol = consensus_tol.unwrap_or_else(|| real::<T>(1e-6));
    let d = problem.coboundary_with(maps_flat);
    let x = problem.ambient_opinions(free);
    let dx = &d * &x;
    let sheaf = problem.sheaf();
    let graph = sheaf.graph();
    let mut reports = Vec::with_capacity(graph.edge_count());
    for e in graph.edges() {
        let range = sheaf.edge_blocks().range(e.0);
        let residual = dx.rows(range.start, range.len()).norm();
        let edge = graph.edge(e);
        let mut adapting_opinion_norms = Vec::new();
        for v in [edge.tail, edge.head] {
            if problem.adaptation().contains(v, e) {
                let vr = sheaf.vertex_blocks().range(v.0);
                adapting_opinion_norms.push((v, x.rows(vr.start, vr.len()).norm()));
            }
        }
        let class = if residual <= consensus_tol {
            EdgeEquilibriumClass::ConsensusAchieved
        } else if adapting_opinion_norms.is_empty() {
            EdgeEquilibriumClass::FrozenResidual
        } else if adapting_opinion_norms.iter().all(|(_, n)| *n <= vanish_tol) {
            EdgeEquilibriumClass::VacuouslyStationary
        } else {
            EdgeEquilibriumClass::Unsettled
        };
        reports.push(EdgeResidualReport {
            edge: e,
            residual,
            class,
            adapting_opinion_norms,
        });
    }
    reports
}

/// Conservation status of one audited vertex.
#[derive(Debug, Clone)]
pub struct VertexConservation<T: Real> {
    pub vertex: VertexId,
    pub applicable: bool,
    pub reason: Option<String>,
    /// `max_t ||Q_vv(t) - Q_vv(0)||_F` over the samples.
    pub max_drift: T,
    pub initial_eigenvalues: Vec<T>,
    /// A negative eigenvalue pins the opinion away from zero.
    pub opinion_persists: bool,
    /// A positive eigenvalue keeps the incident maps from all vanishing.
    pub maps_persist: bool,
}

/// Conservation audit over a joint run.
#[derive(Debug, Clone)]
pub struct ConservationReport<T: Real> {
    pub entries: Vec<VertexConservation<T>>,
    pub tolerance: T,
}

impl<T: Real> ConservationReport<T> {
    pub fn max_applicable_drift(&self) -> Option<T> {
        self.entries
            .iter()
            .filter(|v| v.applicable)
            .map(|v| v.max_drift)
            .fold(None, |acc, d| Some(acc.map_or(d, |a: T| a.max(d))))
    }

    pub fn all_within_tolerance(&self) -> bool {
        self.entries
            .iter()
            .filter(|v| v.applicable)
            .all(|v| v.max_drift <= self.tolerance)
    }
}

/// `Q_vv = alpha (L)_vv - beta x_v x_v^T` for one vertex of one sample.
pub fn conservation_matrix<T: Real>(
    problem: &JointProblem<T>,
    free: &DVector<T>,
    maps_flat: &DVector<T>,
    v: VertexId,
) -> DMatrix<T> {
    let sheaf = problem.sheaf();
    let maps = problem.maps_at(maps_flat);
    let dim = sheaf.vertex_dim(v);
    let mut block = DMatrix::zeros(dim, dim);
    for e in sheaf.graph().incident_edges(v) {
        let m = &maps[&(v, e)];
        block += m.transpose() * m;
    }
    let x = problem.ambient_opinions(free);
    let vr = sheaf.vertex_blocks().range(v.0);
    let xv = x.rows(vr.start, vr.len()).into_owned();
    block * problem.alpha() - (&xv * xv.transpose()) * problem.beta()
}

/// Audits conservation of `Q_vv` along a run.
///
/// A vertex qualifies when every incident edge joins two free vertices and
/// every incidence of the vertex adapts; others are reported non-applicable
/// with the failed hypothesis. Eigenvalue signs of `Q_vv(0)` carry the
/// persistence interpretation.
pub fn conservation_audit<T: Real>(
    problem: &JointProblem<T>,
    run: &JointRun<T>,
    vertices: Option<&[VertexId]>,
    tolerance: Option<T>,
) -> ConservationReport<T> {
    let sheaf = problem.sheaf();
    let graph = sheaf.graph();
    let chosen: Vec<VertexId> = match vertices {
        Some(list) => list.to_vec(),
        None => graph.vertices().collect(),
    };
    let t_final = run.times.last().copied().unwrap_or_else(T::zero);
    let tolerance =
        tolerance.unwrap_or_else(|| real::<T>(1e-6) * (T::one() + t_final * real::<T>(0.02)));

    let mut entries = Vec::with_capacity(chosen.len());
    for v in chosen {
        let mut reason = None;
        if problem.stubborn_spec().is_stubborn(v) {
            reason = Some("vertex has stubborn directions".to_string());
        } else {
            for e in graph.incident_edges(v) {
                let edge = graph.edge(e);
                let other = if edge.tail == v { edge.head } else { edge.tail };
                if problem.stubborn_spec().is_stubborn(other) {
                    reason = Some(format!(
                        "incident edge {} has a stubborn endpoint",
                        graph.edge_label(e)
                    ));
                    break;
                }
                if !problem.adaptation().contains(v, e) {
                    reason = Some(format!(
                        "incidence ({}, {}) is frozen",
                        graph.vertex_label(v),
                        graph.edge_label(e)
                    ));
                    break;
                }
            }
        }
        let applicable = reason.is_none();

        let q0 = conservation_matrix(problem, &run.free_states[0], &run.map_states[0], v);
        let mut max_drift = T::zero();
        if applicable {
            for i in 1..run.len() {
                let q = conservation_matrix(problem, &run.free_states[i], &run.map_states[i], v);
                let drift = (&q - &q0).norm();
                if drift > max_drift {
                    max_drift = drift;
                }
            }
        }
        let eigen = q0.clone().symmetric_eigen();
        let initial_eigenvalues: Vec<T> = eigen.eigenvalues.iter().copied().collect();
        let eig_tol = real::<T>(1e-12) * (T::one() + q0.norm());
        let opinion_persists = initial_eigenvalues.iter().any(|&l| l < -eig_tol);
        let maps_persist = initial_eigenvalues.iter().any(|&l| l > eig_tol);
        entries.push(VertexConservation {
            vertex: v,
            applicable,
            reason,
            max_drift,
            initial_eigenvalues,
            opinion_persists,
            maps_persist,
        });
    }
    ConservationReport { entries, tolerance }
}

/// Monitors specific to the regularized joint flow.
#[derive(Debug, Clone)]
pub struct RegularizedJointRun<T: Real> {
    pub run: JointRun<T>,
    /// Regularized objective per sample.
    pub objective: Vec<T>,
    /// `||y - y0||` per sample.
    pub opinion_displacement: Vec<T>,
    /// `||rho - rho0||_F` per sample.
    pub map_displacement: Vec<T>,
    /// A-priori bounds `sqrt(2 L(0)/lambda)` and `sqrt(2 L(0)/mu)`.
    pub opinion_bound: T,
    pub map_bound: T,
    /// Final stationarity residuals of the two equations.
    pub opinion_residual: T,
    pub map_residual: T,
}

impl<T: Real> RegularizedJointRun<T> {
    /// Both a-priori bounds hold at every sample (with a hair of slack).
    pub fn bounds_hold(&self) -> bool {
        let slack = T::one() + real::<T>(1e-9);
        self.opinion_displacement
            .iter()
            .all(|d| *d <= self.opinion_bound * slack)
            && self
                .map_displacement
                .iter()
                .all(|d| *d <= self.map_bound * slack)
    }
}

/// Runs the regularized joint flow, which adds pull-back terms toward the
/// initial state and is unconditionally bounded: displacements obey
/// `||y - y0||^2 <= 2 L(0)/lambda` and `||rho - rho0||_F^2 <= 2 L(0)/mu`.
pub fn regularized_joint_flow<T: Real>(
    problem: &JointProblem<T>,
    x0: &Cochain0<T>,
    lambda: T,
    mu: T,
    opts: &OdeOptions<T>,
) -> Result<RegularizedJointRun<T>> {
    if lambda <= T::zero() {
        return Err(SheafError::NonPositiveParameter {
            name: "lambda",
            value: lambda.to_f64().unwrap_or(f64::NAN),
        });
    }
    if mu <= T::zero() {
        return Err(SheafError::NonPositiveParameter {
            name: "mu",
            value: mu.to_f64().unwrap_or(f64::NAN),
        });
    }
    let q = problem.free_dim();
    let free0 = problem.free_coordinates(x0)?;
    let maps0 = problem.initial_maps_flat();

    let mut state0 = DVector::zeros(q + problem.map_dim());
    state0.rows_mut(0, q).copy_from(&free0);
    state0.rows_mut(q, problem.map_dim()).copy_from(&maps0);

    let alpha = problem.alpha();
    let beta = problem.beta();
    let anchor_free = free0.clone();
    let anchor_maps = maps0.clone();
    let solution = integrate(
        |_t, state: &DVector<T>| {
            let mut velocity = problem.velocity(state);
            if alpha > T::zero() {
                let free = state.rows(0, q).into_owned();
                let mut dy = velocity.rows(0, q).into_owned();
                dy -= (free - &anchor_free) * (alpha * lambda);
                velocity.rows_mut(0, q).copy_from(&dy);
            }
            if beta > T::zero() && problem.map_dim() > 0 {
                let maps = state.rows(q, problem.map_dim()).into_owned();
                let mut dm = velocity.rows(q, problem.map_dim()).into_owned();
                dm -= (maps - &anchor_maps) * (beta * mu);
                velocity.rows_mut(q, problem.map_dim()).copy_from(&dm);
            }
            velocity
        },
        state0,
        opts,
        None,
    );

    let mut free_states = Vec::with_capacity(solution.states.len());
    let mut map_states = Vec::with_capacity(solution.states.len());
    for state in &solution.states {
        free_states.push(state.rows(0, q).into_owned());
        map_states.push(state.rows(q, problem.map_dim()).into_owned());
    }
    let psi: Vec<T> = free_states
        .iter()
        .zip(&map_states)
        .map(|(y, m)| problem.psi(y, m))
        .collect();
    let map_fro: Vec<T> = map_states
        .iter()
        .map(|m| problem.maps_frobenius(m))
        .collect();
    let opinion_displacement: Vec<T> = free_states.iter().map(|y| (y - &free0).norm()).collect();
    let map_displacement: Vec<T> = map_states.iter().map(|m| (m - &maps0).norm()).collect();
    let half = real::<T>(0.5);
    let objective: Vec<T> = psi
        .iter()
        .zip(opinion_displacement.iter().zip(&map_displacement))
        .map(|(&p, (&dy, &dm))| p + dy * dy * lambda * half + dm * dm * mu * half)
        .collect();
    let initial_objective = objective.first().copied().unwrap_or_else(T::zero);
    let opinion_bound = (initial_objective / (lambda * half)).sqrt();
    let map_bound = (initial_objective / (mu * half)).sqrt();

    let free_final = free_states.last().expect("has initial");
    let maps_final = map_states.last().expect("has initial");
    let d = problem.coboundary_with(maps_final);
    let x = problem.ambient_opinions(free_final);
    let dx = &d * &x;
    let opinion_residual = (problem.blocks().project_free(&(d.transpose() * &dx))
        + (free_final - &free0) * lambda)
        .norm();
    let map_residual = (problem.map_gradient(&dx, &x) + (maps_final - &maps0) * mu).norm();

    let outcome = match solution.outcome {
        OdeOutcome::Converged { time } => JointOutcome::Converged { time },
        OdeOutcome::ReachedHorizon { residual_velocity } => {
            JointOutcome::ReachedHorizon { residual_velocity }
        }
        OdeOutcome::GuardStop { time, .. } | OdeOutcome::StepBudgetExhausted { time } => {
            JointOutcome::StepBudgetExhausted { time }
        }
    };
    Ok(RegularizedJointRun {
        run: JointRun {
            times: solution.times,
            free_states,
            map_states,
            psi,
            map_fro,
            outcome,
        },
        objective,
        opinion_displacement,
        map_displacement,
        opinion_bound,
        map_bound,
        opinion_residual,
        map_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    /// Single scalar edge with a fully stubborn tail, as in the norm-growth
    /// example: `x_u = 1` clamped, `p0 = 1`, `x_v(0) = 2`, both unit maps.
    fn growth_example(adapt_tail: bool, adapt_head: bool) -> (JointProblem<f64>, Cochain0<f64>) {
        let graph = Graph::new(vec!["u", "v"], vec![("e", "u", "v")]).unwrap();
        let u = graph.vertex_by_label("u").unwrap();
        let v = graph.vertex_by_label("v").unwrap();
        let e = graph.edge_by_label("e").unwrap();
        let mut maps = BTreeMap::new();
        maps.insert((u, e), DMatrix::from_row_slice(1, 1, &[1.0]));
        maps.insert((v, e), DMatrix::from_row_slice(1, 1, &[1.0]));
        let sheaf = Sheaf::new(graph.clone(), vec![1, 1], vec![1], maps).unwrap();
        let mut entries = BTreeMap::new();
        entries.insert(
            u,
            (
                DMatrix::from_row_slice(1, 1, &[1.0]),
                DVector::from_vec(vec![1.0]),
            ),
        );
        let spec = StubbornSpec::new(&sheaf, entries).unwrap();
        let mut pairs = Vec::new();
        if adapt_tail {
            pairs.push((u, e));
        }
        if adapt_head {
            pairs.push((v, e));
        }
        let adapt = AdaptationSpec::new(&graph, pairs).unwrap();
        let problem = JointProblem::new(&sheaf, &spec, &adapt, 1.0, 1.0).unwrap();
        let x0 = Cochain0::from_blocks(vec![
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![2.0]),
        ]);
        (problem, x0)
    }

    #[test]
    fn asymmetric_edge_grows_the_map_norm() {
        let (problem, x0) = growth_example(true, false);
        let opts = OdeOptions {
            t_max: 40.0,
            velocity_tol: 1e-11,
            consecutive_required: 3,
            ..Default::default()
        };
        let run = problem.flow(&x0, &opts, None).unwrap();
        assert!(run.outcome.converged(), "outcome: {:?}", run.outcome);
        let initial_sq = run.map_fro[0] * run.map_fro[0];
        let final_sq = run.map_fro.last().unwrap() * run.map_fro.last().unwrap();
        assert!((initial_sq - 2.0).abs() < 1e-12);
        assert!((final_sq - 13.0 / 4.0).abs() < 1e-6);
        // Energy still dissipates.
        for w in run.psi.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn symmetric_adaptation_keeps_the_map_norm_nonincreasing() {
        let (problem, x0) = growth_example(true, true);
        let opts = OdeOptions {
            t_max: 40.0,
            velocity_tol: 1e-11,
            consecutive_required: 3,
            ..Default::default()
        };
        let run = problem.flow(&x0, &opts, None).unwrap();
        for w in run.map_fro.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn frozen_blocks_are_bit_identical_along_the_run() {
        let (problem, x0) = growth_example(true, false);
        let opts = OdeOptions {
            t_max: 10.0,
            ..Default::default()
        };
        let run = problem.flow(&x0, &opts, None).unwrap();
        let graph = problem.sheaf().graph();
        let v = graph.vertex_by_label("v").unwrap();
        let e = graph.edge_by_label("e").unwrap();
        let initial = problem.sheaf().restriction(v, e).clone();
        for i in 0..run.len() {
            let state = run.state(&problem, i);
            assert_eq!(state.maps[&(v, e)], initial);
        }
    }

    #[test]
    fn stubborn_coordinates_never_move() {
        let (problem, x0) = growth_example(true, false);
        let opts = OdeOptions {
            t_max: 10.0,
            ..Default::default()
        };
        let run = problem.flow(&x0, &opts, None).unwrap();
        for free in &run.free_states {
            let x = problem.ambient_opinions(free);
            assert_eq!(x[0], 1.0);
        }
    }

    #[test]
    fn policy_rejects_accommodation_on_uniform_edges() {
        let graph = Graph::new(vec!["a", "b"], vec![("e", "a", "b")]).unwrap();
        let e = graph.edge_by_label("e").unwrap();
        let mut maps = BTreeMap::new();
        maps.insert(
            (graph.vertex_by_label("a").unwrap(), e),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        );
        maps.insert(
            (graph.vertex_by_label("b").unwrap(), e),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        );
        let sheaf = Sheaf::new(graph.clone(), vec![1, 1], vec![1], maps).unwrap();
        let spec = StubbornSpec::empty(&sheaf);
        let policy = ScenarioPolicy::new([(e, Scenario::Accommodation)].into_iter().collect());
        let err = policy.compile(&graph, &spec).unwrap_err();
        assert!(matches!(err, SheafError::Policy { .. }));
    }

    #[test]
    fn regularized_flow_bounds_hold() {
        let (problem, x0) = growth_example(true, false);
        let opts = OdeOptions {
            t_max: 60.0,
            velocity_tol: 1e-10,
            consecutive_required: 3,
            ..Default::default()
        };
        let reg = regularized_joint_flow(&problem, &x0, 0.5, 10.0, &opts).unwrap();
        assert!(reg.bounds_hold());
        for w in reg.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-8);
        }
        assert!((reg.map_displacement.last().unwrap().powi(2)) <= 2.0 * reg.objective[0] / 10.0);
    }
}
