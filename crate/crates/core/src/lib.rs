//! Decomposition of quantum variances into Bohmian and quantum-potential
//! parts, with quadrature and Monte Carlo integrators, nodal diagnostics
//! and guidance-equation trajectories.

pub mod cli;
pub mod decomposition;
pub mod descriptor;
pub mod error;
pub mod fields;
pub mod jet;
pub mod nodal;
pub mod operators;
pub mod potential;
pub mod quadrature;
pub mod states;
pub mod trajectories;

pub use error::{Error, Result};
pub use operators::{apply_operator, build_operator, DiffOperator, OperatorRequest, OperatorSpec};
pub use states::{make_state, parse_state, polar, StateSpec, WaveFunction};
