//! Quantum quench of two harmonic chains joined at `t = 0`.
//!
//! Two chains of `N` and `M` sites with fixed ends are prepared in a Fock
//! eigenstate of their own normal modes; the bond between them is switched
//! on and the joint chain evolves freely. The crate computes the Bogoliubov
//! map between the two mode bases, the exact occupation dynamics, the
//! generalized Gibbs ensemble fixed by the conserved joint-mode occupations,
//! covariance matrices, and a truncated Fock-space oracle for all of it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bogoliubov;
pub mod covariance;
pub mod dynamics;
pub mod error;
pub mod fock;
pub mod gge;
pub mod model;
pub mod scaling;

pub use bogoliubov::{
    build_bogoliubov, f_matrix, initial_correlations, BogoliubovMap, CorrelationSet, FMatrix,
};
pub use error::{QuenchError, Result};
pub use model::{ChainSpec, FockExcitation, QuenchSpec, TimeGrid};
