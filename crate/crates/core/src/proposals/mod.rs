//! Unsupervised, bottom-up region proposals.

mod graph;
mod grid;
mod selective;

pub use graph::{graph_segment, LabelMap};
pub use grid::grid_proposals;
pub use selective::{
    color_similarity, fill_similarity, label_masks, selective_search, selective_search_hierarchy,
    selective_search_multi, size_similarity, texture_similarity, HierarchyNode,
    RegionHierarchy, SimilarityWeights, COLOR_BINS, TEXTURE_BINS, TEXTURE_ORIENTATIONS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the graph-based base segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegParams {
    /// Merge threshold constant; smaller values give more, smaller regions.
    pub scale_k: f64,
    /// Gaussian pre-smoothing, in pixels.
    pub sigma: f64,
    /// Components smaller than this are absorbed into a neighbor.
    pub min_size: usize,
}

impl Default for SegParams {
    fn default() -> Self {
        SegParams {
            scale_k: 50.0,
            sigma: 0.8,
            min_size: 20,
        }
    }
}

impl SegParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_k > 0.0 && self.scale_k.is_finite()) {
            return Err(Error::param("k", format!("must be > 0, got {}", self.scale_k)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", format!("must be >= 0, got {}", self.sigma)));
        }
        if self.min_size < 1 {
            return Err(Error::param("min_size", "must be >= 1"));
        }
        Ok(())
    }
}
