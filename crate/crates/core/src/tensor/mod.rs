//! Dense and CSR matrices, a reverse-mode autodiff tape, Adam, and a
//! finite-difference gradient checker.

mod adam;
mod dense;
mod gradcheck;
mod sparse;
mod tape;

pub use adam::AdamState;
pub use dense::{argmax, dot, entropy, softmax_in_place, squared_distance, DenseMatrix};
pub use gradcheck::{grad_check, GradCheckReport};
pub use sparse::SparseMatrix;
pub use tape::{scalar_matrix, sigmoid, Gradients, OpKind, Tape, Var};
