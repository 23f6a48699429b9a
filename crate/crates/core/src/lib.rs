//! Exact asymptotics for a drifted, correlated Brownian motion entering the
//! scaled positive orthant `αu + ℝ₊ᵈ`.
//!
//! The pipeline runs
//! [`qp`] → [`g_analysis`] → [`mvn`] / [`pickands`] → [`asymptotics`], with
//! [`path_sim`] providing direct simulation to compare against.

pub mod asymptotics;
pub mod error;
pub mod g_analysis;
pub mod linalg;
pub mod mvn;
pub mod parallel;
pub mod path_sim;
pub mod pickands;
pub mod qp;
pub mod quadrature;

pub use error::{Error, Result};
pub use nalgebra;
pub use linalg::PdMatrix;
pub use qp::{qp_value_quadform, solve_qp, solve_qp_with, QpOptions, QpSolution};
pub use g_analysis::{compute_segments, eval_g, minimize_g, Classification, GAnalysis, ProblemSpec, Segment};
pub use mvn::{psi, tail_prob, GaussianVec, Psi, PsiFunction, RqmcOptions, TailProb};
pub use pickands::{estimate_h, estimate_ht, lower_bound_h, single_time_integral, PickandsEstimate, PickandsInput, Sampler};
pub use asymptotics::{
    assemble, closed_form_ci, compute_ci, oracle_2d, oracle_independent, oracle_negassoc, psi_function, tabulate_psi,
    AsymptoticResult, Derivation, HSource, HValue, PassageTimeLaw,
};
pub use path_sim::{
    simulate_p, validate_theorem1, validate_theorem2, SimConfig, SimEstimate, SimMode, Theorem1Report,
    Theorem2Report,
};

/// Version of this library.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
