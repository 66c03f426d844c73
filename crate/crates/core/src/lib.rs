//! Entity segmentation toolkit: exact mask representations, panoptic-to-entity
//! conversion, dataset merging, overlap resolution, strict non-overlapping
//! evaluation and numeric loss references.

pub mod annotation;
pub mod error;
pub mod evaluator;
pub mod idpng;
pub mod loss;
pub mod mask;
pub mod predictions;
pub mod resolver;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
pub use mask::{Bbox, BinaryMask, EntityMap, RleMask};

/// Toolkit version recorded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
