//! Minimal dense linear algebra with reverse-mode gradient support.

mod linear;
mod matrix;
mod tape;

pub use linear::{BoundLinear, LinearMap};
pub use matrix::{canonical_row_order, invert_permutation, Matrix};
pub use tape::{NodeId, ScalarGradFn, Tape};
