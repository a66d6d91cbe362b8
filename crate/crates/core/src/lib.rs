//! Effective sample sizes, concentration bounds, penalized M-estimation and
//! tuning selection for β-mixing data, with the Monte Carlo harness that
//! exercises them.

// Negated comparisons reject NaN inputs along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod complexity_bounds;
pub mod dependent_datagen;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod mixing_lattice;
pub mod tuning_select;
pub use error::{Error, Result};
/// Version of this crate.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/effective_n.md")]
    mod effective_n {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/tuning.md")]
    mod tuning {}
    #[doc = include_str!("../../../book/src/simulations.md")]
    mod simulations {}
}
