//! Binary pyramid files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic       4 bytes  "FPYR"
//! version     u32      1
//! image_h     u32
//! image_w     u32
//! levels      u32
//! per level:  stride u32, channels u32, height u32, width u32
//! tensors     f32 * sum(channels * height * width), level order,
//!             channel-first, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FeaturePyramid, PyramidLevel};
use crate::error::{Error, Result};

pub const PYRAMID_MAGIC: &[u8; 4] = b"FPYR";
const VERSION: u32 = 1;
const MAX_LEVELS: u32 = 64;

pub fn write_pyramid<W: Write>(pyr: &FeaturePyramid, mut out: W) -> std::io::Result<()> {
    out.write_all(PYRAMID_MAGIC)?;
    let levels = pyr.levels();
    for v in [VERSION, pyr.image_height(), pyr.image_width(), levels.len() as u32] {
        out.write_all(&v.to_le_bytes())?;
    }
    for l in levels {
        for v in [l.stride, l.channels as u32, l.height as u32, l.width as u32] {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    for l in levels {
        let mut buf = Vec::with_capacity(l.data.len() * 4);
        for v in &l.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::PyramidHeader(format!("truncated header while reading {what}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_pyramid<R: Read>(mut r: R) -> Result<FeaturePyramid> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::PyramidHeader("file too short for magic".into()))?;
    if &magic != PYRAMID_MAGIC {
        return Err(Error::PyramidHeader(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(Error::PyramidHeader(format!("unsupported version {version}")));
    }
    let image_h = read_u32(&mut r, "image height")?;
    let image_w = read_u32(&mut r, "image width")?;
    let count = read_u32(&mut r, "level count")?;
    if count == 0 || count > MAX_LEVELS {
        return Err(Error::PyramidHeader(format!("level count {count} out of range")));
    }
    let mut dims = Vec::with_capacity(count as usize);
    for i in 0..count {
        let stride = read_u32(&mut r, "stride")?;
        let c = read_u32(&mut r, "channels")? as usize;
        let h = read_u32(&mut r, "height")? as usize;
        let w = read_u32(&mut r, "width")? as usize;
        if i > 0 && stride <= dims.last().map(|d: &(u32, usize, usize, usize)| d.0).unwrap_or(0) {
            return Err(Error::PyramidHeader(format!(
                "level {i} stride {stride} does not exceed the previous level's"
            )));
        }
        c.checked_mul(h)
            .and_then(|v| v.checked_mul(w))
            .filter(|&n| n <= (1 << 31))
            .ok_or_else(|| Error::PyramidHeader(format!("level {i} is implausibly large")))?;
        dims.push((stride, c, h, w));
    }

    let mut levels = Vec::with_capacity(dims.len());
    for (i, (stride, channels, height, width)) in dims.into_iter().enumerate() {
        let n = channels * height * width;
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes).map_err(|_| {
            Error::PyramidShape(format!("tensor data for level {i} is truncated"))
        })?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        levels.push(PyramidLevel {
            stride,
            channels,
            height,
            width,
            data,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::PyramidShape(e.to_string()))? != 0 {
        return Err(Error::PyramidShape("trailing bytes after tensor data".into()));
    }
    FeaturePyramid::new(image_h, image_w, levels)
}

pub fn save_pyramid(pyr: &FeaturePyramid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_pyramid(pyr, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_pyramid(path: impl AsRef<Path>) -> Result<FeaturePyramid> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pyramid(BufReader::new(file))
}
