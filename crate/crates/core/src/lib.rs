//! Predict-and-optimize toolkit built around a Euclidean projection layer.
//!
//! Decisions are computed by projecting a predicted vector onto a polytope.
//! Training signals come from one of several vector-Jacobian rules:
//!
//! * the exact Jacobian of the projection ([`diffopt::exact_qp_vjp`]), which
//!   annihilates every direction spanned by the active constraint normals;
//! * the locally smoothed Jacobian ([`diffopt::smoothed_vjp`]), which only
//!   annihilates the internal-gradient direction, combined with a
//!   projection-distance penalty ([`diffopt::pdr_gradient`]);
//! * implicit differentiation of the KKT system of the true problem
//!   ([`diffopt::implicit_kkt_vjp`]);
//! * linear predict-and-optimize baselines ([`baselines`]).
//!
//! The [`harness`] module runs full experiments over the synthetic
//! benchmarks in [`benchmarks`].

pub mod baselines;
pub mod benchmarks;
pub mod diffopt;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod parallel;
pub mod polytope;
pub mod predictor;
pub mod solver;

pub use error::{Error, Result};
pub use polytope::{ActiveSet, Polytope};
pub use solver::{KktCertificate, SolverSettings};
