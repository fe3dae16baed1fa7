//! Monotone generalized finite differences for divergence-form linear
//! elliptic equations `-div(A grad u) + f = 0` on closed manifolds
//! (the circle, the flat two-torus and the unit sphere).
//!
//! The crate builds point clouds, synthesizes monotone stencils in
//! geodesic normal coordinates, assembles proper discrete systems with
//! several ways of fixing the additive constant, solves them, and measures
//! convergence rates of the solution and of wide-stencil gradients.

// `!(x > 0.0)` style guards are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barrier;
pub mod cloud;
pub mod error;
pub mod geometry;
pub mod gradient;
pub mod harness;
pub mod linalg;
pub mod scheme;
pub mod solver;
pub mod stencil;

pub use cloud::PointCloud;
pub use error::{Error, Result};
pub use geometry::{Manifold, ManifoldKind, ManifoldPoint, TangentVector};
pub use scheme::{DiscreteSystem, GridFunction, SystemKind};
pub use solver::{SolveMethod, SparseOperator};
pub use stencil::{OperatorSpec, Stencil};
