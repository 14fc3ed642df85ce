//! Middlebury `.flo` files.
//!
//! Layout: little-endian `f32` magic `202021.25`, `i32` width, `i32` height,
//! then row-major interleaved `f32` `(u, v)`. Invalid pixels are written as
//! `u = v = 1e9`; on read any component with magnitude `>= 1e9` or a
//! non-finite value marks the pixel invalid.

use std::path::Path;

use crate::error::{PcfError, Result};
use crate::flowfield::FlowField;
use crate::grid::{Grid, Mask};
use crate::io::write_atomic;
use crate::scalar::Real;

pub const FLO_MAGIC: f32 = 202021.25;
pub const FLO_INVALID: f32 = 1e9;
const HEADER_LEN: usize = 12;

pub fn encode_flo<T: Real>(flow: &FlowField<T>) -> Vec<u8> {
    let (w, h) = flow.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + w * h * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for y in 0..h {
        for x in 0..w {
            let (u, v) = match flow.displacement(x, y) {
                Some(d) => (d.x.to_f32_lossy(), d.y.to_f32_lossy()),
                None => (FLO_INVALID, FLO_INVALID),
            };
            out.extend_from_slice(&u.to_le_bytes());
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_flo<T: Real>(bytes: &[u8]) -> Result<FlowField<T>> {
    let truncated = |expected: usize| PcfError::TruncatedFile {
        format: "flo",
        expected,
        found: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(truncated(HEADER_LEN));
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    if f32::from_le_bytes(word(0)) != FLO_MAGIC {
        return Err(PcfError::BadMagic { format: "flo" });
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated(HEADER_LEN));
    }
    let w = i32::from_le_bytes(word(4));
    let h = i32::from_le_bytes(word(8));
    if w < 0 || h < 0 {
        return Err(PcfError::Unsupported {
            format: "flo",
            detail: format!("negative dimensions {w}x{h}"),
        });
    }
    let (w, h) = (w as usize, h as usize);
    let expected = HEADER_LEN + w * h * 8;
    if bytes.len() < expected {
        return Err(truncated(expected));
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for k in 0..w * h {
        let off = HEADER_LEN + k * 8;
        let fu = f32::from_le_bytes(word(off));
        let fv = f32::from_le_bytes(word(off + 4));
        let ok =
            fu.is_finite() && fv.is_finite() && fu.abs() < FLO_INVALID && fv.abs() < FLO_INVALID;
        u.push(T::of(fu as f64));
        v.push(T::of(fv as f64));
        valid.push(ok);
    }
    FlowField::from_parts(
        Grid::from_vec(w, h, u)?,
        Grid::from_vec(w, h, v)?,
        Mask::from_vec(w, h, valid)?,
    )
}

pub fn write_flo<T: Real>(path: impl AsRef<Path>, flow: &FlowField<T>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_flo(flow))
}

pub fn read_flo<T: Real>(path: impl AsRef<Path>) -> Result<FlowField<T>> {
    decode_flo(&std::fs::read(path)?)
}
