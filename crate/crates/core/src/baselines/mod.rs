//! Reference solvers used as oracles and comparison baselines.

mod assignment;
mod gaussian;
mod semidual;
mod simplex;
mod sinkhorn;

pub use assignment::{assignment_plan, exact_assignment_bruteforce, MAX_BRUTE_FORCE};
pub use gaussian::{gaussian_monge_closed_form, sym_sqrt, AffineMap};
pub use semidual::{
    c_transform, semi_dual_objective, semi_dual_sgd, semi_dual_step, SemiDualConfig, SemiDualSolution,
};
pub use simplex::{exact_ot_simplex, ExactMethod, ExactOtResult};
pub use sinkhorn::{sinkhorn, sinkhorn_from, sinkhorn_points, SinkhornPotentials, SinkhornResult};
