//! Shared fixtures: the square discourse sheaf from the worked examples and
//! its clamped/adaptation variants.

use std::collections::BTreeMap;

use discourse_sheaf::graph::Graph;
use discourse_sheaf::learning::AdaptationSpec;
use discourse_sheaf::sheaf::{Cochain0, Sheaf};
use discourse_sheaf::stubborn::StubbornSpec;
use nalgebra::{DMatrix, DVector};

/// Square graph on four vertices with stalk pattern (1, 2, 1, 2) and the
/// eight reference restriction maps.
pub fn square_sheaf() -> Sheaf<f64> {
    let graph = Graph::new(
        vec!["v1", "v2", "v3", "v4"],
        vec![
            ("e12", "v1", "v2"),
            ("e23", "v2", "v3"),
            ("e34", "v3", "v4"),
            ("e41", "v4", "v1"),
        ],
    )
    .unwrap();
    let v = |label: &str| graph.vertex_by_label(label).unwrap();
    let e = |label: &str| graph.edge_by_label(label).unwrap();
    let mut maps = BTreeMap::new();
    maps.insert((v("v1"), e("e12")), DMatrix::from_row_slice(1, 1, &[-2.0]));
    maps.insert(
        (v("v2"), e("e12")),
        DMatrix::from_row_slice(1, 2, &[-1.0, 2.0]),
    );
    maps.insert(
        (v("v2"), e("e23")),
        DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
    );
    maps.insert((v("v3"), e("e23")), DMatrix::from_row_slice(1, 1, &[1.0]));
    maps.insert((v("v3"), e("e34")), DMatrix::from_row_slice(1, 1, &[-1.0]));
    maps.insert(
        (v("v4"), e("e34")),
        DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
    );
    maps.insert(
        (v("v4"), e("e41")),
        DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 0.0]),
    );
    maps.insert(
        (v("v1"), e("e41")),
        DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
    );
    Sheaf::new(graph, vec![1, 2, 1, 2], vec![1, 1, 1, 2], maps).unwrap()
}

/// Free initial state: (2, (1, -2), 0, (0, 0)).
pub fn square_x0_free() -> Cochain0<f64> {
    Cochain0::from_blocks(vec![
        DVector::from_vec(vec![2.0]),
        DVector::from_vec(vec![1.0, -2.0]),
        DVector::from_vec(vec![0.0]),
        DVector::from_vec(vec![0.0, 0.0]),
    ])
}

/// Clamped initial state: (2, (1, -2), 0, (1, 0)) with the first coordinate
/// of v4 held at 1.
pub fn square_x0_clamped() -> Cochain0<f64> {
    Cochain0::from_blocks(vec![
        DVector::from_vec(vec![2.0]),
        DVector::from_vec(vec![1.0, -2.0]),
        DVector::from_vec(vec![0.0]),
        DVector::from_vec(vec![1.0, 0.0]),
    ])
}

/// First coordinate of v4 clamped to 1.
pub fn square_stubborn_spec(sheaf: &Sheaf<f64>) -> StubbornSpec<f64> {
    let v4 = sheaf.graph().vertex_by_label("v4").unwrap();
    let mut entries = BTreeMap::new();
    entries.insert(
        v4,
        (
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DVector::from_vec(vec![1.0]),
        ),
    );
    StubbornSpec::new(sheaf, entries).unwrap()
}

/// Everything adapts except the two maps out of v4.
pub fn square_adaptation_frozen_v4(sheaf: &Sheaf<f64>) -> AdaptationSpec {
    let graph = sheaf.graph();
    let v4 = graph.vertex_by_label("v4").unwrap();
    let pairs: Vec<_> = graph
        .incidences()
        .into_iter()
        .filter(|(v, _)| *v != v4)
        .collect();
    AdaptationSpec::new(graph, pairs).unwrap()
}
