//! Seeded Monte Carlo experiments comparing offloading schemes.

pub mod converge;
pub mod experiment;
pub mod spec;

pub use converge::{run_convergence_trace, ConvergenceTrace};
pub use experiment::{
    csv_string, run_experiment, run_timing, write_csv, ExperimentResult, Manifest, TimingRow,
};
pub use spec::{ExperimentSpec, SolverKind, SweepVar};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Solver(#[from] noma_mec::Error),

    #[error("invalid experiment: {0}")]
    InvalidSpec(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(
        "{solver} failed on {failed} of {trials} trials at grid value {grid_value}: {first_error}"
    )]
    TooManyFailures {
        grid_value: f64,
        solver: SolverKind,
        failed: usize,
        trials: usize,
        first_error: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
