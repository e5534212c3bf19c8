//! Learned Fields-of-Experts regularizer and handcrafted baselines.
//!
//! Each expert applies a linear operator `L̃_i` that stacks the identity,
//! the projected surface gradient and a temporal filter into a 4-vector per
//! space-time node, then sums a potential `φ_i` over the nodes with lumped
//! quadrature weights.

mod baselines;
mod foe;
mod model;
mod potential;

pub use baselines::{
    curve_stiffness, temporal_stiffness, tik_energy, tik_solve, tv_energy, tv_solve, Fidelity,
    TvOptions, TvOutcome,
};
pub use foe::{FoeOperator, Response};
pub use model::{Constraints, ExpertParams, Kernel, RegularizerModel, EPS_OMEGA_MIN, MU_MIN};
pub use potential::{
    inf_norm, mat_tvec, mat_vec, omega_grad, omega_grad_display, omega_grad_lipschitz, omega_value,
    project_l1_ball, spectral_norm, GradSource, Mat4, Potential, Vec4,
};
