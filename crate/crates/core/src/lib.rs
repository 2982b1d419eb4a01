//! Numerical toolkit for nonsmooth critical-point theory and smoothing of
//! Lipschitz maps and distance functions.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clarke;
pub mod error;
pub mod geometry;
pub mod manifolds;
pub mod mollify;
pub mod sphere_maps;

pub use error::{Error, Result};
