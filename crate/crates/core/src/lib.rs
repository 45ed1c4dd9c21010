#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[macro_use]
extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod error;
pub mod linalg;
pub mod models;
pub mod optimizers;
pub mod reference;
pub mod rng;
pub mod verification;

pub use error::{Error, Result};
