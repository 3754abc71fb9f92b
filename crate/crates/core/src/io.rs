//! Binary tensor dumps and PGM previews.
//!
//! Dump layout, all little-endian:
//!
//! ```text
//! "HMAP" | K: u32 | H: u32 | W: u32 | K*H*W x f32 (channel-major, row-major)
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid2D, HeatmapStack, Shape};

pub const MAGIC: &[u8; 4] = b"HMAP";

/// Largest element count accepted when loading; rejects corrupt headers
/// before allocating.
pub const MAX_ELEMENTS: u64 = 1 << 30;

pub fn dump_tensor<W: Write>(stack: &HeatmapStack, mut sink: W) -> Result<()> {
    let shape = stack.shape();
    let dims = [shape.channels, shape.height, shape.width];
    let mut header = Vec::with_capacity(16);
    header.extend_from_slice(MAGIC);
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::ShapeOverflow {
            channels: shape.channels as u64,
            height: shape.height as u64,
            width: shape.width as u64,
        })?;
        header.extend_from_slice(&d.to_le_bytes());
    }
    sink.write_all(&header)?;
    let mut body = Vec::with_capacity(stack.len() * 4);
    for &v in stack.as_slice() {
        body.extend_from_slice(&(v as f32).to_le_bytes());
    }
    sink.write_all(&body)?;
    sink.flush()?;
    Ok(())
}

pub fn load_tensor<R: Read>(mut source: R) -> Result<HeatmapStack> {
    let mut magic = [0u8; 4];
    read_exact(&mut source, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            "HMAP"
        )));
    }
    let mut dims = [0u32; 3];
    for (d, what) in dims.iter_mut().zip(["K", "H", "W"]) {
        let mut buf = [0u8; 4];
        read_exact(&mut source, &mut buf, what)?;
        *d = u32::from_le_bytes(buf);
    }
    let [k, h, w] = dims.map(u64::from);
    let count = k
        .checked_mul(h)
        .and_then(|kh| kh.checked_mul(w))
        .filter(|&n| n <= MAX_ELEMENTS)
        .ok_or(Error::ShapeOverflow {
            channels: k,
            height: h,
            width: w,
        })?;
    let mut body = vec![0u8; count as usize * 4];
    read_exact(&mut source, &mut body, "payload")?;
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    HeatmapStack::from_vec(Shape::new(k as usize, h as usize, w as usize), data)
}

fn read_exact<R: Read>(source: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    source.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Truncated(format!("stream ended while reading {what}")),
        _ => Error::Io(e),
    })
}

pub fn save_tensor(stack: &HeatmapStack, path: impl AsRef<Path>) -> Result<()> {
    dump_tensor(stack, BufWriter::new(File::create(path)?))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<HeatmapStack> {
    load_tensor(BufReader::new(File::open(path)?))
}

/// Writes a binary PGM (P5, maxval 255), min-max normalized. A constant
/// plane maps to all zeros.
pub fn write_pgm<W: Write>(grid: &Grid2D, mut sink: W) -> Result<()> {
    write!(sink, "P5\n{} {}\n255\n", grid.width(), grid.height())?;
    let (lo, hi) = grid.min_max().unwrap_or((0.0, 0.0));
    let range = hi - lo;
    let pixels: Vec<u8> = grid
        .as_slice()
        .iter()
        .map(|&v| {
            if range > 0.0 {
                ((v - lo) / range * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect();
    sink.write_all(&pixels)?;
    sink.flush()?;
    Ok(())
}

pub fn save_pgm(grid: &Grid2D, path: impl AsRef<Path>) -> Result<()> {
    write_pgm(grid, BufWriter::new(File::create(path)?))
}
