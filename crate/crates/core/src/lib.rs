//! Exponential-stability certificates for delayed neural networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`basis`]: weighted moments and orthogonal polynomials.
//! * [`inequality`]: numerical checks of the integral inequalities.
//! * [`lmi`]: assembly of the certificate's matrix inequalities.
//! * [`sdp`]: a barrier-method feasibility solver.
//! * [`search`]: bisection for the largest decay rate or delay bound.
//! * [`system`] and [`sim`]: the delayed network model and its simulator.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::excessive_precision,
    clippy::needless_range_loop
)]

pub mod basis;
pub mod error;
pub mod inequality;
pub mod linalg;
pub mod lmi;
pub mod parallel;
pub mod quadrature;
pub mod sdp;
pub mod search;
pub mod sim;
pub mod system;

pub use error::{Error, Result};
pub use parallel::Execution;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
