pub mod compression;
pub mod digraph;
pub mod error;
pub mod harness;
pub mod problems;
pub mod pushsum;
pub mod rng;

pub use error::{Error, Result};
