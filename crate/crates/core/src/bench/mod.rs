//! Battlespace generator and the backend comparison harness.

mod battlespace;
mod matrix;

pub use battlespace::{generate, generate_battalion_kb, BattalionShape, GROUP_KINDS};
pub use matrix::{
    flat_max_clique, log_increments, median, poly_fit, run_matrix, write_csv, BenchConfig, BenchConfigError, BenchRow,
    CellSpec, CellStatus, PolyFit, QuantifierMode, CSV_HEADER, DEFAULT_PROBE,
};
