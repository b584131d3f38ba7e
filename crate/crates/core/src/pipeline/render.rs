//! Overlay figures: instance masks tinted with distinct colors, group ids
//! written at each mask's top-left corner.

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

const ALPHA: f32 = 0.45;

/// 3x5 digit glyphs, one row per byte, bit 2 = leftmost column.
const DIGITS: [[u8; 5]; 10] = [
    [7, 5, 5, 5, 7],
    [2, 6, 2, 2, 7],
    [7, 1, 7, 4, 7],
    [7, 1, 7, 1, 7],
    [5, 5, 7, 1, 1],
    [7, 4, 7, 1, 7],
    [7, 4, 7, 5, 7],
    [7, 1, 1, 1, 1],
    [7, 5, 7, 5, 7],
    [7, 5, 7, 1, 7],
];

/// Deterministic, well-spread color for instance `i`.
pub fn palette(i: usize) -> [u8; 3] {
    let h = (i as f64 * 0.618_033_988_749_895).fract() * 6.0;
    let (s, v) = (0.85, 1.0);
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|u| ((u + m) * 255.0).round() as u8)
}

fn draw_number(img: &mut RgbImage, x0: u32, y0: u32, n: usize) {
    let text = n.to_string();
    let (w, h) = (img.width(), img.height());
    let box_w = 4 * text.len() as u32 + 1;
    for dy in 0..7 {
        for dx in 0..box_w {
            let (x, y) = (x0 + dx, y0 + dy);
            if x < w && y < h {
                img.put_pixel(x, y, Rgb([0, 0, 0]));
            }
        }
    }
    for (ci, ch) in text.bytes().enumerate() {
        let glyph = DIGITS[(ch - b'0') as usize];
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3u32 {
                if bits & (4 >> col) != 0 {
                    let (x, y) = (x0 + 1 + 4 * ci as u32 + col, y0 + 1 + row as u32);
                    if x < w && y < h {
                        img.put_pixel(x, y, Rgb([255, 255, 255]));
                    }
                }
            }
        }
    }
}

/// Tint each mask in order (later masks on top) and label it with its group
/// id when one is given.
pub fn overlay(image: &RgbImage, instances: &[(&BinaryMask, Option<usize>)]) -> Result<RgbImage> {
    let dims = (image.height(), image.width());
    let mut out = image.clone();
    for (i, (mask, _)) in instances.iter().enumerate() {
        if mask.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: mask.dims(),
            });
        }
        let color = palette(i);
        let dense = mask.to_dense();
        for (idx, _) in dense.iter().enumerate().filter(|(_, &on)| on) {
            let (x, y) = ((idx % dims.1 as usize) as u32, (idx / dims.1 as usize) as u32);
            let px = out.get_pixel_mut(x, y);
            for c in 0..3 {
                px.0[c] = ((1.0 - ALPHA) * px.0[c] as f32 + ALPHA * color[c] as f32).round() as u8;
            }
        }
    }
    for (mask, group) in instances {
        if let (Some(g), Some(r)) = (group, mask.tight_rect()) {
            draw_number(&mut out, r.x1, r.y1, *g);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::PixelRect;

    #[test]
    fn tint_only_inside_mask() {
        let img = RgbImage::from_pixel(8, 6, Rgb([100, 100, 100]));
        let m = BinaryMask::from_rect(6, 8, PixelRect { x1: 2, y1: 1, x2: 5, y2: 4 });
        let out = overlay(&img, &[(&m, None)]).unwrap();
        assert_eq!(out.get_pixel(0, 0), &Rgb([100, 100, 100]));
        assert_ne!(out.get_pixel(3, 2), &Rgb([100, 100, 100]));
    }

    #[test]
    fn labels_drawn() {
        let img = RgbImage::from_pixel(20, 20, Rgb([100, 100, 100]));
        let m = BinaryMask::from_rect(20, 20, PixelRect { x1: 0, y1: 0, x2: 20, y2: 20 });
        let out = overlay(&img, &[(&m, Some(7))]).unwrap();
        assert_eq!(out.get_pixel(0, 0), &Rgb([0, 0, 0]));
        assert_eq!(out.get_pixel(1, 1), &Rgb([255, 255, 255]));
    }

    #[test]
    fn palette_distinct() {
        let colors: std::collections::HashSet<_> = (0..12).map(palette).collect();
        assert_eq!(colors.len(), 12);
    }
}
