//! Global optimization of box-constrained quadratically constrained quadratic
//! programs: McCormick and triangle cuts, LP and spectral dual bounds, and a
//! spatial branch-and-bound.

// dense numeric kernels read better with explicit indices
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod linalg;
pub mod lp;
pub mod cuts;
pub mod dual;
pub mod bnb;
pub mod model;
pub mod oracle;
pub mod relax;

pub use error::{Error, Result};
pub use linalg::SymMatrix;
pub use cuts::{Cut, CutKey, CutKind, CutPool};
pub use model::{LiftedPoint, QcqpInstance};
