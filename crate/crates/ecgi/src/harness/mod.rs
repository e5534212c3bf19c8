//! Benchmarks, refinement studies and plotting.

mod bench;
mod config;
mod plot;
mod refine;

pub use bench::{
    candidates, denoise_bench, inverse_bench, l2_error, noise_seed, run_denoise_bench,
    run_inverse_bench, train_model, training_samples, Candidate, ResultRow, ResultTable, Setup,
};
pub use config::BenchmarkConfig;
pub use plot::{plot_spacetime, read_field_csv, render_ppm, PLOT_SCALE};
pub use refine::{refinement_study, tik_reference_energy, RefinementReport, StudyEnergy};
