use crate::mask::{BinaryMask, PixelRect};
use crate::proposal::{Proposal, Provenance};

/// Non-overlapping `cell x cell` tiles covering the image in row-major order;
/// right and bottom tiles are clipped.
pub fn grid_proposals(height: u32, width: u32, cell: u32) -> Vec<Proposal> {
    let cell = cell.max(1);
    let mut out = Vec::new();
    for y1 in (0..height).step_by(cell as usize) {
        for x1 in (0..width).step_by(cell as usize) {
            let rect = PixelRect {
                x1,
                y1,
                x2: (x1 + cell).min(width),
                y2: (y1 + cell).min(height),
            };
            let mask = BinaryMask::from_rect(height, width, rect);
            out.extend(Proposal::from_mask(mask, Provenance::Unsupervised));
        }
    }
    out
}
