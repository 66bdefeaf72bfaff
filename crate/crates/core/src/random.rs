//! Seeded random instances for randomized suites.
//!
//! Deterministic given the seed; the CLI and the test suites share these so
//! reported results are reproducible.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, VertexId};
use crate::learning::AdaptationSpec;
use crate::sheaf::{Cochain0, Sheaf};
use crate::stubborn::StubbornSpec;

pub use rand::SeedableRng;
pub type SuiteRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SuiteRng {
    SuiteRng::seed_from_u64(seed)
}

/// Random connected graph: a spanning tree plus `extra_edges` chords
/// (parallel edges allowed, self-loops not).
pub fn random_connected_graph(rng: &mut SuiteRng, n_vertices: usize, extra_edges: usize) -> Graph {
    assert!(n_vertices >= 1);
    let vertices: Vec<String> = (0..n_vertices).map(|i| format!("v{i}")).collect();
    let mut edges = Vec::new();
    for i in 1..n_vertices {
        let parent = rng.random_range(0..i);
        edges.push((
            format!("e{}", edges.len()),
            format!("v{parent}"),
            format!("v{i}"),
        ));
    }
    let mut added = 0;
    while added < extra_edges && n_vertices >= 2 {
        let a = rng.random_range(0..n_vertices);
        let b = rng.random_range(0..n_vertices);
        if a == b {
            continue;
        }
        edges.push((
            format!("e{}", edges.len()),
            format!("v{a}"),
            format!("v{b}"),
        ));
        added += 1;
    }
    Graph::new(vertices, edges).expect("generated labels are unique and loop-free")
}

fn uniform(rng: &mut SuiteRng) -> f64 {
    rng.random_range(-1.0..1.0)
}

/// Random sheaf over `graph` with stalk dimensions in `1..=max_dim`
/// (`allow_zero_dims` admits zero-dimensional vertex stalks) and uniform
/// restriction map entries.
pub fn random_sheaf(
    rng: &mut SuiteRng,
    graph: &Graph,
    max_dim: usize,
    allow_zero_dims: bool,
) -> Sheaf<f64> {
    let lo = usize::from(!allow_zero_dims);
    let vertex_dims: Vec<usize> = graph
        .vertices()
        .map(|_| rng.random_range(lo..=max_dim))
        .collect();
    let edge_dims: Vec<usize> = graph
        .edges()
        .map(|_| rng.random_range(1..=max_dim))
        .collect();
    let mut maps = BTreeMap::new();
    for e in graph.edges() {
        let edge = graph.edge(e);
        for v in [edge.tail, edge.head] {
            let m = DMatrix::from_fn(edge_dims[e.0], vertex_dims[v.0], |_, _| uniform(rng));
            maps.insert((v, e), m);
        }
    }
    Sheaf::new(graph.clone(), vertex_dims, edge_dims, maps).expect("generated dims consistent")
}

pub fn random_cochain0(rng: &mut SuiteRng, sheaf: &Sheaf<f64>) -> Cochain0<f64> {
    Cochain0::from_blocks(
        sheaf
            .vertex_dims()
            .iter()
            .map(|&d| DVector::from_fn(d, |_, _| uniform(rng)))
            .collect(),
    )
}

/// Random stubborn spec: each vertex is stubborn with probability
/// `p_stubborn`, in a random subspace of random dimension with random clamped
/// values. Bases are orthonormalized by QR.
pub fn random_stubborn_spec(
    rng: &mut SuiteRng,
    sheaf: &Sheaf<f64>,
    p_stubborn: f64,
) -> StubbornSpec<f64> {
    let mut entries = BTreeMap::new();
    for v in sheaf.graph().vertices() {
        let dim = sheaf.vertex_dim(v);
        if dim == 0 || !rng.random_bool(p_stubborn) {
            continue;
        }
        let s = rng.random_range(1..=dim);
        let raw = DMatrix::from_fn(dim, s, |_, _| uniform(rng));
        let qr = raw.qr();
        let q = qr.q().columns(0, s).into_owned();
        // A degenerate draw can produce a rank-deficient Q; re-check and skip.
        let gram = q.transpose() * &q;
        if (gram - DMatrix::<f64>::identity(s, s)).norm() > 1e-10 {
            continue;
        }
        let values = DVector::from_fn(s, |_, _| uniform(rng));
        entries.insert(v, (q, values));
    }
    StubbornSpec::new(sheaf, entries).expect("QR bases are orthonormal")
}

/// Fully stubborn at each selected vertex (identity basis), free elsewhere.
pub fn random_fully_stubborn_spec(
    rng: &mut SuiteRng,
    sheaf: &Sheaf<f64>,
    p_stubborn: f64,
) -> StubbornSpec<f64> {
    let mut entries = BTreeMap::new();
    for v in sheaf.graph().vertices() {
        let dim = sheaf.vertex_dim(v);
        if dim == 0 || !rng.random_bool(p_stubborn) {
            continue;
        }
        let values = DVector::from_fn(dim, |_, _| uniform(rng));
        entries.insert(v, (DMatrix::identity(dim, dim), values));
    }
    StubbornSpec::new(sheaf, entries).expect("identity bases are orthonormal")
}

/// Each incidence adapts independently with probability `p_adapt`.
pub fn random_adaptation(rng: &mut SuiteRng, graph: &Graph, p_adapt: f64) -> AdaptationSpec {
    let pairs: Vec<(VertexId, _)> = graph
        .incidences()
        .into_iter()
        .filter(|_| rng.random_bool(p_adapt))
        .collect();
    AdaptationSpec::new(graph, pairs).expect("incidences come from the graph")
}

/// Whole edges adapt or freeze together, so every edge is symmetric.
pub fn random_symmetric_adaptation(
    rng: &mut SuiteRng,
    graph: &Graph,
    p_edge: f64,
) -> AdaptationSpec {
    let mut pairs = Vec::new();
    for e in graph.edges() {
        if rng.random_bool(p_edge) {
            let edge = graph.edge(e);
            pairs.push((edge.tail, e));
            pairs.push((edge.head, e));
        }
    }
    AdaptationSpec::new(graph, pairs).expect("incidences come from the graph")
}
