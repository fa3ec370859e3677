//! Geometry, matching and evaluation routines for lane lines represented as
//! Bézier curves.
//!
//! The crate is split by concern:
//!
//! * [`bezier`]: Bernstein bases, sampling grids, least-squares fitting,
//!   affine transforms and curve cutting.
//! * [`polygon`]: polar sort, monotone-chain hulls, convex intersection and GIoU.
//! * [`matching`]: sampling distance, match quality, Hungarian assignment and
//!   the training loss terms.
//! * [`metrics`]: CULane-style F1 over stroked lanes and TuSimple-style
//!   point accuracy.
//! * [`dataset`]: annotation parsers, Bézier label generation, augmentation
//!   and the native label format.
//!
//! Coordinates inside curves and polylines are normalized by image size
//! (x by width, y by height). Metrics work in pixel space.

pub mod bezier;
pub mod dataset;
mod error;
mod geom;
pub mod matching;
pub mod metrics;
pub mod polygon;
pub mod synthetic;

pub use error::{Error, Result};
pub use geom::{ImageSize, Point};
