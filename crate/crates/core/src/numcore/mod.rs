//! Dense arrays, the reverse-mode tape, and a finite-difference oracle.

mod array;
mod gradcheck;
mod graph;
mod scalar;

pub use array::Array;
pub use gradcheck::{finite_diff_check, numeric_gradient, relative_error, GradCheck};
pub use graph::{primitive_forward, Gradients, Graph, Primitive, Var, LAYER_NORM_EPS};
pub use scalar::Scalar;
