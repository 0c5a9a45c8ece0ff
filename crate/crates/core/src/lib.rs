//! Complex quantum Hamilton–Jacobi (CQHJ) momentum-field dynamics with a
//! phenomenological collapsing force.

// `!(x > 0.0)` is deliberate: it rejects NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod collapse;
pub mod cqhj;
pub mod experiments;
pub mod grid;
