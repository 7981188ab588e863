//! Numerical toolkit for studying the limits of linear model merging.
//!
//! * [`tensor_io`]: parameter containers, seeded streams, binary formats.
//! * [`merge`]: convex merging, the correlated variance law, merge-count bound,
//!   adaptive termination and simplex-constrained weight search.
//! * [`geometry`]: Gaussian width of quadratic sublevel sets, statistical
//!   dimension, random-rotation intersection experiments, redundancy bound.
//! * [`rht`]: Gaussian differencing plus the odd power map, its density,
//!   tail diagnostics and a function-space coverage proxy.
//! * [`subspace`]: PCA explained variance, principal angles, singular-value bands.
//! * [`experiments`]: synthetic generators, end-to-end runners, CSV/JSON/SVG output.

pub mod error;
pub mod experiments;
pub mod geometry;
mod linalg;
pub mod merge;
pub mod rht;
pub mod stats;
pub mod subspace;
pub mod tensor_io;

pub use error::{Error, Result};
pub use stats::Estimate;
pub use tensor_io::{DenseMatrix, LowRankDelta, ParamVector, RngStream};
