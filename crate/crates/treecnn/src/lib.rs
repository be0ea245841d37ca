//! A hierarchy of small CNN classifiers that grows as new image classes
//! arrive: likelihood-driven placement of new classes under the tree,
//! selective retraining of only the affected nodes, and a benchmarking
//! harness comparing against fine-tuning a monolithic baseline at several
//! depths.

pub mod data;
pub mod error;
pub mod nn;
pub mod rng;
pub mod specs;
pub mod tensor;
pub mod growth;
pub mod tree;

pub use error::{Error, Result};
pub use tensor::Tensor;
