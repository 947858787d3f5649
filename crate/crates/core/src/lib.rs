//! Finite-difference solver for fully nonlinear Hessian equations
//! `f(lambda(D^2 u + gamma Delta u I)) = psi` on boxes, with the
//! regularisation, continuation and diagnostic machinery around it.

pub mod discretize;
pub mod error;
pub mod problem;
pub mod solver;
pub mod spectral;
pub mod symfunc;
pub mod verify;

pub use discretize::{Grid, GridField, Region};
pub use error::{HessolveError, Result};
pub use spectral::{EigenDecomp, SymMatrix};
pub use symfunc::{ConeStatus, FunctionKind, Lambda, SymmetricFunctionSpec};
