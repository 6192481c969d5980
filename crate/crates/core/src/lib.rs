//! Numerical complex Monge-Ampere equations on flat and Hermitian model tori.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod envelope;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod krylov;
pub mod ma;
pub mod solver;

pub use error::{Error, Result};
