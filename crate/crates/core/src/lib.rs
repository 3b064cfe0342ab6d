//! Numerical verification of weighted pointwise and Sobolev-type inequalities
//! for rough singular integrals and Riesz-type potentials.
//!
//! Guards written as `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod corpus;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kernels;
pub mod norms;
pub mod operators;
pub mod quadrature;
pub mod weights;

pub use error::{Error, Result};
