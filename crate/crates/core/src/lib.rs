//! Regularization solvers and stationarity analysis for mathematical programs
//! with complementarity constraints (MPCC).
//!
//! The crate builds the Scholtes, Kanzow-Schwartz, disjunctive and quadrant-penalty
//! regularizations of an MPCC, solves them with a dense SQP method, drives the
//! regularization parameter to zero, and classifies limit points by stationarity
//! type and C-index.

pub mod analysis;
pub mod bench;
pub mod disjunctive;
pub mod error;
pub mod expr;
pub mod homotopy;
pub mod linalg;
pub mod model;
pub mod nlp;
pub mod par;
pub mod parse;
pub mod regularize;

pub use error::{AnalysisError, EvalError, ParameterError, ParseError};
pub use model::{ActiveSets, MpccProblem, ACTIVE_TOL};
pub use par::Execution;
