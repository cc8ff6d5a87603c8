//! Selection of object masks in videos.
//!
//! Given per-frame candidate masks, a background probability map and the
//! optical flow to the next frame, pick for every frame a non-overlapping
//! subset of candidates minimizing a weighted sum of a background
//! cross-entropy, a flow-consistency and a temporal IoU term. The search runs
//! in two stages: a per-frame K-best enumeration over a binary decision tree
//! followed by a shortest path over the trellis of shortlisted combinations.

pub mod cli;
pub mod error;
pub mod eval;
pub mod io;
pub mod losses;
pub mod optimizer;
pub mod raster;
pub mod scene;
pub mod synth;

pub use error::{Error, Result};
