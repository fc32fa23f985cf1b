//! Exact computations on Lipschitz-free spaces over finite ultrametric spaces.

pub mod ell1;
pub mod error;
pub mod campaign;
pub mod chain;
pub mod exec;
pub mod free_norm;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod metric;
pub mod rational;
pub mod rtree;

pub use error::{Error, Result};
pub use rational::Rational;
