//! Robust data-driven receding-horizon control for unknown discrete-time linear
//! systems under bounded process noise.
//!
//! The pipeline: measured `(x, u, x_next)` triples define a polytope of plants
//! consistent with the data ([`consistency`]); a backward recursion over the vertices
//! of that polytope yields the largest robust controlled invariant subset of the state
//! constraints ([`invariant`]); online, a Farkas-dual linear program picks the input
//! minimizing the worst-case contraction of the invariant set's gauge over every
//! consistent plant ([`controller`]), and the dictionary grows with every executed
//! step ([`simulator`]).

pub mod consistency;
pub mod controller;
pub mod error;
pub mod invariant;
pub mod lp;
pub mod polytope;
pub mod simulator;

pub use error::{Error, Result};

/// Shared geometric tolerance for row activity, vertex identification, redundancy
/// and certificate checks.
pub const TOL: f64 = 1e-8;
