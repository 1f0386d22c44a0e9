//! Stochastic dual solvers for entropy- and L2-regularized optimal transport.
//!
//! The crate is organised bottom-up:
//!
//! - [`measures`]: discrete and Gaussian measures, batch sampling, costs, CSV I/O.
//! - [`nn`]: a small dense ReLU network with backpropagation and Adam.
//! - [`dual`]: stochastic ascent on the regularized dual with vector or network
//!   potentials.
//! - [`plan`]: primal recovery from potentials, plan diagnostics and the discrete
//!   barycentric projection.
//! - [`map_learn`]: fitting a neural Monge map to the plan implied by frozen
//!   dual potentials.
//! - [`baselines`]: Sinkhorn, semi-dual SGD, exact OT and the Gaussian closed form.

pub mod baselines;
pub mod dual;
mod error;
pub mod map_learn;
pub mod measures;
pub mod nn;
pub mod plan;

pub use error::{OtError, Result};
