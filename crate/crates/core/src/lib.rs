//! Opinion dynamics on cellular discourse sheaves with directional
//! stubbornness.
//!
//! A discourse sheaf attaches a private opinion space to every vertex of a
//! graph, a shared discourse space to every edge, and a linear expression map
//! to every incidence. This crate implements:
//!
//! - sheaf Laplacian diffusion and projection onto global sections,
//! - clamped opinion directions and the forced Poisson equilibria they induce,
//! - selective learning of expression maps against a fixed opinion profile,
//! - constrained joint evolution of opinions and expression maps under four
//!   per-edge adaptation policies, with conservation diagnostics,
//! - trajectory-level dissipation-gap estimates and stagnation bounds,
//! - a plain-text model format and seeded random instance generation.
//!
//! The numerical core is generic over the scalar type through [`Real`];
//! `f64` aliases for the main types are exported at the crate root. Model
//! files are defined over binary64 and always load as `f64`.

pub mod diffusion;
pub mod error;
pub mod graph;
pub mod joint;
pub mod learning;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod operator;
pub mod random;
pub mod scalar;
pub mod scenarios;
pub mod sheaf;
pub mod stubborn;
pub mod suite;
pub mod timescale;

pub use error::{Result, SheafError};
pub use graph::{EdgeId, Graph, VertexId};
pub use scalar::{real, Real};

/// `f64` instantiations of the core types.
pub type Sheaf64 = sheaf::Sheaf<f64>;
pub type Cochain064 = sheaf::Cochain0<f64>;
pub type Cochain164 = sheaf::Cochain1<f64>;
pub type LinearOperator64 = operator::LinearOperator<f64>;
pub type StubbornSpec64 = stubborn::StubbornSpec<f64>;
pub type BlockLaplacian64 = stubborn::BlockLaplacian<f64>;
pub type DiscrepancySystem64 = learning::DiscrepancySystem<f64>;
pub type StructureCochain64 = learning::StructureCochain<f64>;
pub type JointProblem64 = joint::JointProblem<f64>;

pub type OdeOptions64 = ode::OdeOptions<f64>;
