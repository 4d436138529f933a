#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod basis_adapt;
pub mod cli;
pub mod dynsys;
pub mod error;
pub mod exec;
pub mod filter;
pub mod linalg;
pub mod pce;
pub mod rng;
pub mod sparse_bayes;

pub use error::{Error, Flag, Result};
