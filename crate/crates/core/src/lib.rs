pub mod baselines;
pub mod compression;
pub mod error;
pub mod harness;
pub mod matching;
pub mod mlp;
pub mod netmodel;
pub mod qoe;
pub mod semantics;
pub mod solution;

pub use error::{Error, Result};
