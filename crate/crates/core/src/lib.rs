//! Open-world instance segmentation by grouping unsupervised part masks.
//!
//! The crate covers the algorithmic core of a part-then-group segmentation
//! pipeline: bottom-up part proposals ([`proposals`]), training-label
//! augmentation ([`supervision`]), pooled region features ([`features`]),
//! affinity clustering of parts into objects ([`grouping`]), score fusion and
//! duplicate suppression ([`ranking`]) and class-agnostic average recall
//! ([`evaluation`]). [`pipeline`] wires the stages to files and the CLI.

pub mod error;
pub mod evaluation;
pub mod features;
pub mod grouping;
pub mod mask;
pub mod pipeline;
pub mod proposal;
pub mod proposals;
pub mod ranking;
pub mod raster;
pub mod supervision;

pub use error::{Error, Result};
pub use mask::{box_iou, mask_iou, mask_union, BBox, BinaryMask, PixelRect};
pub use proposal::{LabelSet, Proposal, Provenance, ScoreParts};

/// Version tag written into every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;
