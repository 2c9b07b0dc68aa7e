//! Computing with 1-permanental (and k-permanental) vectors attached to
//! finite, possibly non-reversible Markov chains.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod density;
pub mod error;
pub mod kernel;
pub mod markov;
pub mod matrix;
pub mod quad;
pub mod rng;
pub mod samplers;
pub mod stats;
pub mod testfn;
pub mod verify;

pub use error::{Error, Result};
pub use matrix::SquareMatrix;
