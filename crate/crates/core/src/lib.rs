//! Weighted contingency table totals.
//!
//! Given row margins `R`, column margins `C` with common total `N` and a
//! non-negative weight matrix `W`, the total weight
//! `T(R, C; W) = Σ_D Π w_ij^d_ij` runs over every non-negative integer
//! table `D` with those margins. This crate computes it
//!
//! * exactly, by enumeration and by Ryser permanents ([`exact`]);
//! * approximately, through the surrogate `T′` built from the scaling
//!   factor `σ` of a random block matrix ([`scaling`], [`estimator`]),
//!   with the certified bracket `T′ ≤ T ≤ α(R, C)·T′` ([`bounds`]);
//! * for integer flows in acyclic digraphs, via a reduction to weighted
//!   tables ([`flows`]).

pub mod bounds;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod exact;
pub mod flows;
pub mod numerics;
pub mod problem;
pub mod random;
pub mod scaling;
pub mod suites;

pub use error::{Error, Result};
pub use numerics::Matrix;
pub use problem::{
    assemble_block_matrix, validate_problem, BlockSquareMatrix, ContingencyTable, GammaMatrix,
    ProblemInstance,
};
pub use random::{sample_gamma, RandomSource};
