//! Mask and box primitives shared by every stage.
//!
//! Masks are held as canonical column-major run-length counts (the COCO
//! convention): the first run is background and may be empty, every later run
//! is non-empty, and the runs sum to `height * width`. Because the form is
//! canonical, equality of [`BinaryMask`] values is equality of pixel sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in center form, in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::DegenerateBox(format!(
                "non-finite box ({cx}, {cy}, {w}, {h})"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::DegenerateBox(format!(
                "box must have positive extent, got w={w} h={h}"
            )));
        }
        Ok(BBox { cx, cy, w, h })
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        BBox::new((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
    }

    /// From COCO `[x, y, w, h]`.
    pub fn from_xywh(xywh: [f64; 4]) -> Result<Self> {
        let [x, y, w, h] = xywh;
        BBox::from_corners(x, y, x + w, y + h)
    }

    /// `[x1, y1, x2, y2]`.
    pub fn corners(&self) -> [f64; 4] {
        [
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        ]
    }

    /// COCO `[x, y, w, h]`.
    pub fn xywh(&self) -> [f64; 4] {
        let [x1, y1, _, _] = self.corners();
        [x1, y1, self.w, self.h]
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Intersect with the image extent `[0, width] x [0, height]`.
    /// Returns `None` when nothing of the box remains.
    pub fn clip(&self, width: u32, height: u32) -> Option<BBox> {
        let [x1, y1, x2, y2] = self.corners();
        let x1 = x1.clamp(0.0, width as f64);
        let x2 = x2.clamp(0.0, width as f64);
        let y1 = y1.clamp(0.0, height as f64);
        let y2 = y2.clamp(0.0, height as f64);
        BBox::from_corners(x1, y1, x2, y2).ok()
    }

    /// True when `other` lies inside `self` grown by `slack` pixels on each side.
    pub fn contains(&self, other: &BBox, slack: f64) -> bool {
        let [ax1, ay1, ax2, ay2] = self.corners();
        let [bx1, by1, bx2, by2] = other.corners();
        bx1 >= ax1 - slack && by1 >= ay1 - slack && bx2 <= ax2 + slack && by2 <= ay2 + slack
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &BBox) -> BBox {
        let [ax1, ay1, ax2, ay2] = self.corners();
        let [bx1, by1, bx2, by2] = other.corners();
        BBox::from_corners(ax1.min(bx1), ay1.min(by1), ax2.max(bx2), ay2.max(by2))
            .expect("hull of two valid boxes is valid")
    }
}

/// Intersection over union of two rectangles; 0 when they do not overlap.
pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let [ax1, ay1, ax2, ay2] = a.corners();
    let [bx1, by1, bx2, by2] = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Integer pixel rectangle, half-open: columns `x1..x2`, rows `y1..y2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelRect {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl PixelRect {
    pub fn to_bbox(self) -> BBox {
        BBox::from_corners(self.x1 as f64, self.y1 as f64, self.x2 as f64, self.y2 as f64)
            .expect("pixel rect of a nonempty mask has positive extent")
    }

    pub fn union(self, other: PixelRect) -> PixelRect {
        PixelRect {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    pub fn area(self) -> u64 {
        (self.x2 - self.x1) as u64 * (self.y2 - self.y1) as u64
    }
}

/// A binary foreground mask over an `height x width` raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RleJson", into = "RleJson")]
pub struct BinaryMask {
    height: u32,
    width: u32,
    counts: Vec<u32>,
}

impl BinaryMask {
    pub fn empty(height: u32, width: u32) -> Self {
        BinaryMask {
            height,
            width,
            counts: vec![height * width],
        }
    }

    /// Decode column-major run-length counts.
    pub fn from_counts(height: u32, width: u32, counts: &[u32]) -> Result<Self> {
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        let expected = height as u64 * width as u64;
        if total != expected {
            return Err(Error::InvalidRle(format!(
                "counts sum to {total}, expected {height}x{width} = {expected}"
            )));
        }
        Ok(BinaryMask {
            height,
            width,
            counts: canonicalize(counts),
        })
    }

    /// Build from a row-major dense raster (`data[y * width + x]`).
    pub fn from_dense(height: u32, width: u32, data: &[bool]) -> Result<Self> {
        let (h, w) = (height as usize, width as usize);
        if data.len() != h * w {
            return Err(Error::InvalidParameter {
                name: "data",
                reason: format!("raster holds {} pixels, expected {}", data.len(), h * w),
            });
        }
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for x in 0..w {
            for y in 0..h {
                let v = data[y * w + x];
                if v != current {
                    counts.push(run);
                    run = 0;
                    current = v;
                }
                run += 1;
            }
        }
        counts.push(run);
        Ok(BinaryMask {
            height,
            width,
            counts: canonicalize(&counts),
        })
    }

    /// Filled rectangle, clipped to the raster.
    pub fn from_rect(height: u32, width: u32, rect: PixelRect) -> Self {
        let x1 = rect.x1.min(width);
        let x2 = rect.x2.min(width);
        let y1 = rect.y1.min(height);
        let y2 = rect.y2.min(height);
        if x1 >= x2 || y1 >= y2 {
            return BinaryMask::empty(height, width);
        }
        let mut counts = Vec::with_capacity(2 * (x2 - x1) as usize + 1);
        let col_fg = y2 - y1;
        let col_bg = height - col_fg;
        // leading background: full columns before x1 plus the rows above y1
        counts.push(x1 * height + y1);
        for x in x1..x2 {
            counts.push(col_fg);
            if x + 1 < x2 {
                counts.push(col_bg);
            }
        }
        counts.push((height - y2) + (width - x2) * height);
        BinaryMask {
            height,
            width,
            counts: canonicalize(&counts),
        }
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.height, self.width)
    }

    /// Canonical run-length counts.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Row-major dense raster.
    pub fn to_dense(&self) -> Vec<bool> {
        let (h, w) = (self.height as usize, self.width as usize);
        let mut out = vec![false; h * w];
        let mut p = 0usize;
        for (i, &c) in self.counts.iter().enumerate() {
            if i % 2 == 1 {
                for q in p..p + c as usize {
                    out[(q % h) * w + q / h] = true;
                }
            }
            p += c as usize;
        }
        out
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        if x >= self.width || y >= self.height {
            return false;
        }
        let target = x as u64 * self.height as u64 + y as u64;
        let mut p = 0u64;
        for (i, &c) in self.counts.iter().enumerate() {
            p += c as u64;
            if target < p {
                return i % 2 == 1;
            }
        }
        false
    }

    /// Tightest pixel rectangle around the foreground, `None` for an empty mask.
    pub fn tight_rect(&self) -> Option<PixelRect> {
        let h = self.height as u64;
        let mut rect: Option<PixelRect> = None;
        let mut p = 0u64;
        for (i, &c) in self.counts.iter().enumerate() {
            let c = c as u64;
            if i % 2 == 1 && c > 0 {
                let (xs, ys) = ((p / h) as u32, (p % h) as u32);
                let end = p + c - 1;
                let (xe, ye) = ((end / h) as u32, (end % h) as u32);
                let run = if xs == xe {
                    PixelRect {
                        x1: xs,
                        y1: ys,
                        x2: xs + 1,
                        y2: ye + 1,
                    }
                } else {
                    PixelRect {
                        x1: xs,
                        y1: 0,
                        x2: xe + 1,
                        y2: self.height,
                    }
                };
                rect = Some(rect.map_or(run, |r| r.union(run)));
            }
            p += c;
        }
        rect
    }

    pub fn tight_box(&self) -> Option<BBox> {
        self.tight_rect().map(PixelRect::to_bbox)
    }

    fn check_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    pub fn intersection_area(&self, other: &BinaryMask) -> Result<u64> {
        self.check_dims(other)?;
        let mut area = 0u64;
        walk_runs(self, other, |a, b, len| {
            if a && b {
                area += len as u64;
            }
        });
        Ok(area)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.combine(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.combine(other, |a, b| a && b)
    }

    fn combine(&self, other: &BinaryMask, op: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        self.check_dims(other)?;
        let mut counts: Vec<u32> = vec![0];
        let mut last = false;
        walk_runs(self, other, |a, b, len| {
            let v = op(a, b);
            if v == last {
                *counts.last_mut().expect("nonempty") += len;
            } else {
                counts.push(len);
                last = v;
            }
        });
        Ok(BinaryMask {
            height: self.height,
            width: self.width,
            counts,
        })
    }

    /// COCO compressed counts string.
    pub fn to_compressed(&self) -> String {
        encode_counts_string(&self.counts)
    }

    pub fn from_compressed(height: u32, width: u32, s: &str) -> Result<Self> {
        let counts = decode_counts_string(s)?;
        BinaryMask::from_counts(height, width, &counts)
    }

    /// `{"size": [h, w], "counts": [..]}`
    pub fn to_uncompressed_json(&self) -> RleJson {
        RleJson::Uncompressed {
            size: [self.height, self.width],
            counts: self.counts.clone(),
        }
    }
}

/// Co-iterate the runs of two same-sized masks, calling `f(a, b, len)` for
/// each maximal stretch over which both values are constant.
fn walk_runs(a: &BinaryMask, b: &BinaryMask, mut f: impl FnMut(bool, bool, u32)) {
    let (mut ai, mut bi) = (0usize, 0usize);
    let (mut ar, mut br) = (0u32, 0u32);
    loop {
        while ar == 0 && ai < a.counts.len() {
            ar = a.counts[ai];
            ai += 1;
        }
        while br == 0 && bi < b.counts.len() {
            br = b.counts[bi];
            bi += 1;
        }
        if ar == 0 || br == 0 {
            break;
        }
        let step = ar.min(br);
        // after the refill, index ai - 1 is the run being consumed
        f((ai - 1) % 2 == 1, (bi - 1) % 2 == 1, step);
        ar -= step;
        br -= step;
    }
}

fn canonicalize(counts: &[u32]) -> Vec<u32> {
    let mut out: Vec<u32> = Vec::with_capacity(counts.len());
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let fg = i % 2 == 1;
        if out.is_empty() {
            if fg {
                out.push(0);
            }
            out.push(c);
            continue;
        }
        let last_fg = (out.len() - 1) % 2 == 1;
        if last_fg == fg {
            *out.last_mut().expect("nonempty") += c;
        } else {
            out.push(c);
        }
    }
    if out.is_empty() {
        out.push(0);
    }
    out
}

/// Intersection over union of two masks; 0 when the union is empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let inter = a.intersection_area(b)?;
    let union = a.area() + b.area() - inter;
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

/// Pixelwise OR of a nonempty sequence of same-sized masks.
pub fn mask_union<'a, I>(masks: I) -> Result<BinaryMask>
where
    I: IntoIterator<Item = &'a BinaryMask>,
{
    let mut iter = masks.into_iter();
    let first = iter.next().ok_or(Error::EmptyInput("mask_union needs at least one mask"))?;
    iter.try_fold(first.clone(), |acc, m| acc.union(m))
}

/// COCO LEB128-like string: 5 data bits per character, bit 6 as continuation,
/// offset by 48; counts from the fourth onward are stored as deltas against
/// the count two positions earlier.
pub fn encode_counts_string(counts: &[u32]) -> String {
    let mut s = String::with_capacity(counts.len() * 2);
    for (i, &c) in counts.iter().enumerate() {
        let mut x = c as i64;
        if i > 2 {
            x -= counts[i - 2] as i64;
        }
        loop {
            let mut c = (x & 0x1f) as u8;
            x >>= 5;
            let more = if c & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                c |= 0x20;
            }
            s.push((c + 48) as char);
            if !more {
                break;
            }
        }
    }
    s
}

pub fn decode_counts_string(s: &str) -> Result<Vec<u32>> {
    let bytes = s.as_bytes();
    let mut counts: Vec<u32> = Vec::new();
    let mut i = 0usize;
    while i < bytes.len() {
        let mut x: i64 = 0;
        let mut shift = 0u32;
        loop {
            let Some(&byte) = bytes.get(i) else {
                return Err(Error::InvalidRle(
                    "counts string ends inside a continued value".into(),
                ));
            };
            if !(48..48 + 64).contains(&byte) {
                return Err(Error::InvalidRle(format!(
                    "invalid character {:?} at offset {i}",
                    byte as char
                )));
            }
            if shift > 55 {
                return Err(Error::InvalidRle(format!("value overflow at offset {i}")));
            }
            let c = (byte - 48) as i64;
            i += 1;
            x |= (c & 0x1f) << shift;
            shift += 5;
            if c & 0x20 == 0 {
                if c & 0x10 != 0 {
                    x |= -1i64 << shift;
                }
                break;
            }
        }
        let m = counts.len();
        if m > 2 {
            x += counts[m - 2] as i64;
        }
        let value = u32::try_from(x)
            .map_err(|_| Error::InvalidRle(format!("run {m} decodes to {x}")))?;
        counts.push(value);
    }
    Ok(counts)
}

/// COCO segmentation payload for RLE masks, compressed or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RleJson {
    Compressed { size: [u32; 2], counts: String },
    Uncompressed { size: [u32; 2], counts: Vec<u32> },
}

impl TryFrom<RleJson> for BinaryMask {
    type Error = Error;

    fn try_from(value: RleJson) -> Result<Self> {
        match value {
            RleJson::Compressed { size, counts } => {
                BinaryMask::from_compressed(size[0], size[1], &counts)
            }
            RleJson::Uncompressed { size, counts } => {
                BinaryMask::from_counts(size[0], size[1], &counts)
            }
        }
    }
}

impl From<BinaryMask> for RleJson {
    fn from(m: BinaryMask) -> Self {
        RleJson::Compressed {
            size: [m.height, m.width],
            counts: m.to_compressed(),
        }
    }
}
