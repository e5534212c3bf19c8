//! First-order machinery: conjugate gradients, the power method,
//! accelerated gradient descent with restart, the denoising and inverse
//! drivers, and a derivative-free trainer.

mod agd;
mod linear;
mod problem;
mod train;

pub use agd::{agd_restart, AgdOptions, Objective, SolveReport};
pub use linear::{cg, power_method, PowerOptions};
pub use problem::{
    foe_normal_eigenvalue, forward_normal_eigenvalue, inverse_reconstruct, model_normal_eigenvalue,
    prox_denoise, prox_denoise_with, DataTerm, EnergyProblem, Method, LIPSCHITZ_SAFETY,
};
pub use train::{spsa_train, training_loss, SpsaOptions, TrainOutcome, TrainingSample};
