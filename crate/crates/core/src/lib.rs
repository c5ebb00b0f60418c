//! Regularized optimal transport over tempered exponential measures.
//!
//! Plans live in "tilde space": a coupling `P̃` has row and column sums that
//! match `r̃`, `c̃` only after the co-density map `x ↦ x^{2-t}`. Sinkhorn-style
//! balancing is carried out on co-densities and the result is mapped back with
//! the power `t* = 1 / (2 - t)`.

pub mod analysis;
pub mod error;
pub mod lp_oracle;
pub mod measures;
pub mod objectives;
pub mod seeds;
pub mod solvers;
pub mod tempered_math;

pub use error::{Axis, Error, Result};
pub use objectives::Variant;
pub use tempered_math::Temperature;
