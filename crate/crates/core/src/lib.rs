//! Block-sparse signal recovery from sparse binary expander sketches.
//!
//! The crate is organized around five pieces:
//!
//! - [`expander`]: construction, application and certification of sparse
//!   binary expander matrices (plus the Kronecker-square tensor operator);
//! - [`block_model`]: the non-overlapping group model and l2,1 geometry;
//! - [`solver`]: matvec-only primal-dual solvers for l1 / l2,1 basis pursuit;
//! - [`analysis`]: error-bound evaluators and their brute-force verification;
//! - [`harness`]: experiment drivers and the command line.

pub mod analysis;
pub mod block_model;
pub mod error;
pub mod expander;
pub mod harness;
pub mod seed;
pub mod solver;

pub use block_model::{BlockSupport, GroupModel};
pub use error::{Error, Result};
pub use expander::{BipartiteExpander, TensorExpander};
