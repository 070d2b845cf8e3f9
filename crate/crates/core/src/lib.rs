#![no_std]
// `!(x > 0.0)` rejects NaN on purpose; quantile coefficients are kept as published.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub mod feedback;
pub mod filtering;
pub mod force;
pub mod grid;
pub mod invariant;
mod math;
pub mod model;
pub mod numlin;
pub mod rng;
pub mod robust;
pub mod samples;
pub mod sim;
pub mod stability;
pub mod stats;

pub use error::{Error, Result};
pub use model::{LshSystem, StateSpace};
pub use num_complex::Complex64;
pub use numlin::{Matrix, SymMatrix};
