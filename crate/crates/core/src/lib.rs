//! Discrete nonlinear potential theory on connected bounded-degree graphs.
//!
//! The crate solves p-harmonic Dirichlet problems by coordinate descent,
//! estimates p-capacities along exhaustions by balls, computes Royden
//! decompositions of bounded fields and extends end data to p-harmonic
//! functions. Infinite graphs are explored through finite balls only.

pub mod boundary;
pub mod capacity;
pub mod cli;
pub mod energy;
pub mod error;
pub mod graph;
pub mod royden;
pub mod solver;

pub use energy::{Exponent, ScalarField};
pub use error::{Error, Result};
pub use graph::{ball, cayley, load_edge_list, FamilySpec, FiniteRegion, Graph, Vertex};
pub use solver::{solve_dirichlet, SolveReport, SolverConfig, UpdateOrder};
