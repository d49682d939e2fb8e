//! Numerical companion for layer solutions of nonlocal Allen-Cahn equations
//! `L_K u = W'(u)` on the line, with `L_K u(x) = 1/2 * int (u(x+z) + u(x-z) - 2u(x)) K(z) dz`.

// negated comparisons double as NaN rejection
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod barrier;
pub mod energy_min;
pub mod error;
pub mod kernels;
pub mod nonlocal_op;
pub mod potentials;
pub mod quad;

pub use error::{Error, Result};
pub use kernels::{Kernel, KernelFamily, RadialKernel};
pub use nonlocal_op::GridFunction;
pub use potentials::Potential;
