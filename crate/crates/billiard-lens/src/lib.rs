//! Localization of eigenfunctions of Laplace billiards: lattice shells, plane-wave kernels,
//! localized eigenfunction construction, obstruction tests and nodal-set analysis.

// Negated float comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod billiards;
pub mod error;
pub mod field;
pub mod grid;
pub mod kernel;
pub mod lattice;
pub mod localize;
pub mod nodal;
pub mod obstruction;
pub mod special;
pub mod waves;

pub use error::{Error, Result};
