//! Rate-distortion redundancy analysis for memoryless sources with finite
//! reproduction alphabets.
//!
//! The crate computes `R(D)` and its optimal slope and reproduction
//! distribution, the zero-mean redundancy function `f` whose partial sums
//! are the unavoidable fluctuation of any lossy code's length around
//! `nR(D)`, the minimal coding variance `σ² = Var f(X)`, and whether the
//! source is *critical* (`f ≡ 0`, pointwise redundancy `O(log n)`) or
//! *generic* (`O(√n)`).

// `!(x > 0.0)` is used deliberately so NaN is rejected with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builtin;
pub mod cli;
pub mod criticality;
pub mod error;
pub mod lagrangian;
pub mod model;
pub mod model_file;
pub mod numeric;
pub mod rd_solver;
pub mod simulate;

pub use criticality::{classify, CriticalityReport, Verdict};
pub use error::{Error, Result};
pub use model::{ContinuousModel, DiscreteModel};
pub use rd_solver::{solve_at_distortion, RdSolution, SolveOptions};
