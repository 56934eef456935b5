// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod driver;
pub mod error;
pub mod estimation;
pub mod finite_size;
pub mod gaussian;
pub mod info;
pub mod mc;
pub mod nla;
pub mod postselection;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result};
