//! Prototype-based open-world semi-supervised node classification.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every numerical
//! piece of the method: a small reverse-mode autodiff tape over dense and
//! CSR matrices, graph containers and splits, the GCN encoder, the prototype,
//! infomax and pseudo-label losses, the training loop, clustering based
//! evaluation and the comparison baselines. File formats, configuration and
//! the experiment runner live in the `pown` crate.

#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod baselines;
pub mod encoder;
mod error;
pub mod eval;
pub mod graph;
pub mod infomax;
pub mod prototype;
pub mod pseudolabel;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{ClassFoldPlan, Graph, OpenWorldSplit, SplitMasks};

pub use tensor::{DenseMatrix, SparseMatrix};
