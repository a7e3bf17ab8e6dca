#![no_std]
extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

mod error;
pub mod numerics;

pub use error::{Error, Result};
pub mod metrics;
pub mod tokenizer;
pub mod corpus;
pub mod rng;
pub mod model;
pub mod generation;
pub mod train;
