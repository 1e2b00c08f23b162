//! Standing waves: closed-form star solitons, the rescaled stationary
//! system and its continuation, and back-scaling to bound states of the
//! nonlinear Dirac equation (with `c = 1`).

mod physical;
mod rescaled;
mod soliton;

pub use physical::{
    action_value, nlde_residual, scale_to_grid, scale_to_physical, write_branch_csv, BranchRow,
    ScalingParams,
};
pub use rescaled::{
    continue_branch, default_truncation, jacobian_min_singular_value, newton_solve,
    rescaled_jacobian, rescaled_residual, seed_state, systaux_residual, Branch, BranchFailure,
    BranchPoint, NewtonReport, RescaledState,
};
pub use soliton::SolitonSpec;
