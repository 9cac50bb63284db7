//! Exact references for small systems: a dense Lindblad integrator and a
//! deterministic mean-field evolution.

mod master;
pub mod sparse;

pub use crate::integrator::mean_field_reference;
pub use master::{evolve_master_equation, run_oracle, Basis, DensityMatrix, LiouvillianSpec, OracleOptions};
pub use sparse::CsrMatrix;
