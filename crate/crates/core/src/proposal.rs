use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{BBox, BinaryMask};

/// Where a proposal came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Part,
    Grouped,
    GroundTruth,
    Unsupervised,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Part => "part",
            Provenance::Grouped => "grouped",
            Provenance::GroundTruth => "ground_truth",
            Provenance::Unsupervised => "unsupervised",
        }
    }
}

/// Classification score `c`, box quality `b` and mask quality `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreParts {
    pub c: f64,
    pub b: f64,
    pub m: f64,
}

impl Default for ScoreParts {
    fn default() -> Self {
        ScoreParts {
            c: 1.0,
            b: 1.0,
            m: 1.0,
        }
    }
}

impl ScoreParts {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c", self.c), ("b", self.b), ("m", self.m)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(
                    "score",
                    format!("component {name} = {v} outside [0, 1]"),
                ));
            }
        }
        Ok(())
    }

    /// Per-component maximum.
    pub fn max(self, other: ScoreParts) -> ScoreParts {
        ScoreParts {
            c: self.c.max(other.c),
            b: self.b.max(other.b),
            m: self.m.max(other.m),
        }
    }
}

/// One detection candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub bbox: BBox,
    pub mask: BinaryMask,
    pub scores: ScoreParts,
    pub provenance: Provenance,
}

impl Proposal {
    /// Proposal whose box is the tight box of `mask`. `None` for an empty mask.
    pub fn from_mask(mask: BinaryMask, provenance: Provenance) -> Option<Proposal> {
        let bbox = mask.tight_box()?;
        Some(Proposal {
            bbox,
            mask,
            scores: ScoreParts::default(),
            provenance,
        })
    }

    pub fn with_scores(mut self, scores: ScoreParts) -> Self {
        self.scores = scores;
        self
    }
}

/// Per-image set of labels (ground truth and/or unsupervised masks).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelSet {
    pub entries: Vec<Proposal>,
}

impl LabelSet {
    pub fn new(entries: Vec<Proposal>) -> Self {
        LabelSet { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Proposal> {
        self.entries.iter()
    }
}
