//! Penalization solver, certificates and Monte Carlo checks for systems of
//! parabolic variational inequalities constrained to moving convex sets.

pub mod checks;
pub mod coefficient;
pub mod config;
pub mod driver;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod ladder;
pub mod library;
pub mod operator;
pub mod output;
pub mod problem;
pub mod psor;
pub mod solver;
pub mod stochastic;

pub use error::{Error, Result};
