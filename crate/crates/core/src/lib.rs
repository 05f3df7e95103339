//! Approximate optimal experimental designs for polynomial regression on
//! compact semi-algebraic sets.
//!
//! The pipeline solves a moment relaxation of the design problem
//! ([`designsolve`]), recovers an atomic design from the optimal moments
//! ([`recovery`]) and checks the equivalence-theorem conditions
//! ([`certify`]).

pub mod certify;
pub mod conic;
pub mod criteria;
pub mod designsolve;
pub mod error;
pub mod linalg;
pub mod moments;
pub mod pipeline;
pub mod polybasis;
pub mod recovery;
pub mod semialg;

pub use error::{Error, Result};
