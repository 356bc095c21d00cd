//! Adjoint-based solver and optimality-condition auditor for time-optimal
//! control of semilinear parabolic equations with mixed pointwise
//! constraints and terminal constraints.
//!
//! The free-horizon problem is reduced to a fixed-horizon problem on the
//! unit time interval by the rescaling t = T·s; everything downstream
//! (state solves, adjoints, KKT and second-order audits) works in the
//! reduced coordinates (T, v), with physical-horizon views derived by the
//! index-exact transport.

pub mod error;
pub mod field;
pub mod grid;
pub mod hypotheses;
pub mod linalg;
pub mod operator;
pub mod optimality;
pub mod optimizer;
pub mod problem;
pub mod reduction;
pub mod soc;
pub mod state;

pub use error::{Error, Result};
