//! Certification of neural networks as ε-close abstractions of nonlinear
//! dynamical systems over box domains.

// `!(a <= b)` is how NaN gets rejected throughout
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod crown;
pub mod dynamics;
pub mod error;
pub mod hyperrect;
pub mod interval;
pub mod koopman;
pub mod network;
pub mod partitioner;
pub mod report;
pub mod taylor;
pub mod verifier;

pub use error::{Error, Result};
pub use hyperrect::Hyperrectangle;
pub use interval::Interval;
