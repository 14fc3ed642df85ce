//! The `CFLD` field container.
//!
//! Layout: ASCII magic `CFLD`, then little-endian `u32` version (`1`), width,
//! height and channel count, followed by row-major channel-interleaved
//! little-endian `f32` samples.
//!
//! Channel conventions:
//! - coordinate fields: 2 channels `(l1, l2)`, or 3 with a trailing validity
//!   channel (`1.0` valid, `0.0` invalid);
//! - confidence fields: 1 channel;
//! - GMM parameter fields: 3 channels `(alpha_plus, sigma_plus_sq,
//!   sigma_minus_sq)` on the patch grid, all-zero cells mark patches without
//!   a fit.

use std::path::Path;

use crate::error::{PcfError, Result};
use crate::geometry::CoordField;
use crate::grid::{Grid, Mask};
use crate::io::write_atomic;
use crate::probmodel::{ConfidenceField, GmmParamField};
use crate::scalar::Real;

pub const CFLD_MAGIC: &[u8; 4] = b"CFLD";
pub const CFLD_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

/// Raw decoded container.
#[derive(Debug, Clone, PartialEq)]
pub struct Cfld {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Cfld {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(PcfError::LengthMismatch {
                expected: width * height * channels,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, ch: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + ch]
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(CFLD_MAGIC);
        for v in [
            CFLD_VERSION,
            self.width as u32,
            self.height as u32,
            self.channels as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let truncated = |expected: usize| PcfError::TruncatedFile {
            format: "CFLD",
            expected,
            found: bytes.len(),
        };
        if bytes.len() < 4 {
            return Err(truncated(HEADER_LEN));
        }
        if &bytes[..4] != CFLD_MAGIC {
            return Err(PcfError::BadMagic { format: "CFLD" });
        }
        if bytes.len() < HEADER_LEN {
            return Err(truncated(HEADER_LEN));
        }
        let word =
            |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
        let version = word(4);
        if version != CFLD_VERSION {
            return Err(PcfError::Unsupported {
                format: "CFLD",
                detail: format!("version {version}"),
            });
        }
        let (w, h, c) = (word(8) as usize, word(12) as usize, word(16) as usize);
        let expected = HEADER_LEN + w * h * c * 4;
        if bytes.len() < expected {
            return Err(truncated(expected));
        }
        let data = bytes[HEADER_LEN..expected]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Self::new(w, h, c, data)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.encode())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }

    fn expect_channels(&self, allowed: &[usize]) -> Result<()> {
        if allowed.contains(&self.channels) {
            Ok(())
        } else {
            Err(PcfError::Unsupported {
                format: "CFLD",
                detail: format!("expected {allowed:?} channels, found {}", self.channels),
            })
        }
    }

    /// Three-channel encoding including validity.
    pub fn from_coord_field<T: Real>(field: &CoordField<T>) -> Self {
        let (w, h) = field.dims();
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                let [a, b] = field.raw(x, y);
                data.push(a.to_f32_lossy());
                data.push(b.to_f32_lossy());
                data.push(if field.is_valid(x, y) { 1.0 } else { 0.0 });
            }
        }
        Self {
            width: w,
            height: h,
            channels: 3,
            data,
        }
    }

    /// Two-channel files are read as fully valid.
    pub fn to_coord_field<T: Real>(&self) -> Result<CoordField<T>> {
        self.expect_channels(&[2, 3])?;
        let (w, h) = (self.width, self.height);
        let l1 = Grid::from_fn(w, h, |x, y| T::of(self.at(x, y, 0) as f64));
        let l2 = Grid::from_fn(w, h, |x, y| T::of(self.at(x, y, 1) as f64));
        let valid = Mask::from_fn(w, h, |x, y| self.channels == 2 || self.at(x, y, 2) != 0.0);
        CoordField::from_parts(l1, l2, valid)
    }

    pub fn from_confidence<T: Real>(conf: &ConfidenceField<T>) -> Self {
        Self {
            width: conf.width(),
            height: conf.height(),
            channels: 1,
            data: conf
                .values()
                .as_slice()
                .iter()
                .map(|v| v.to_f32_lossy())
                .collect(),
        }
    }

    pub fn to_confidence<T: Real>(&self) -> Result<ConfidenceField<T>> {
        self.expect_channels(&[1])?;
        let g = Grid::from_vec(
            self.width,
            self.height,
            self.data.iter().map(|&v| T::of(v as f64)).collect(),
        )?;
        ConfidenceField::new(g)
    }

    pub fn from_params<T: Real>(params: &GmmParamField<T>) -> Self {
        let (w, h) = params.cells().dims();
        let mut data = Vec::with_capacity(w * h * 3);
        for cell in params.cells().as_slice() {
            match cell {
                Some(p) => data.extend([
                    p.alpha_plus().to_f32_lossy(),
                    p.sigma_plus_sq().to_f32_lossy(),
                    p.sigma_minus_sq().to_f32_lossy(),
                ]),
                None => data.extend([0.0, 0.0, 0.0]),
            }
        }
        Self {
            width: w,
            height: h,
            channels: 3,
            data,
        }
    }

    /// Parameter triples without range validation; `None` for all-zero cells.
    pub fn to_param_triples(&self) -> Result<Grid<Option<[f32; 3]>>> {
        self.expect_channels(&[3])?;
        Ok(Grid::from_fn(self.width, self.height, |x, y| {
            let t = [self.at(x, y, 0), self.at(x, y, 1), self.at(x, y, 2)];
            (t != [0.0; 3]).then_some(t)
        }))
    }
}

pub fn write_coord_field<T: Real>(path: impl AsRef<Path>, field: &CoordField<T>) -> Result<()> {
    Cfld::from_coord_field(field).write(path)
}

pub fn read_coord_field<T: Real>(path: impl AsRef<Path>) -> Result<CoordField<T>> {
    Cfld::read(path)?.to_coord_field()
}

pub fn write_confidence<T: Real>(path: impl AsRef<Path>, conf: &ConfidenceField<T>) -> Result<()> {
    Cfld::from_confidence(conf).write(path)
}

pub fn read_confidence<T: Real>(path: impl AsRef<Path>) -> Result<ConfidenceField<T>> {
    Cfld::read(path)?.to_confidence()
}

pub fn write_params<T: Real>(path: impl AsRef<Path>, params: &GmmParamField<T>) -> Result<()> {
    Cfld::from_params(params).write(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{encode_field, Bcs, Point2};

    #[test]
    fn header_layout() {
        let c = Cfld::new(2, 1, 1, vec![0.5, -1.0]).unwrap();
        let b = c.encode();
        assert_eq!(b.len(), 20 + 8);
        assert_eq!(&b[..4], b"CFLD");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 1);
        assert_eq!(Cfld::decode(&b).unwrap(), c);
    }

    #[test]
    fn coord_field_round_trip_keeps_validity() {
        let bcs = Bcs::new(
            Point2::new(0.0f32, 0.0),
            Point2::new(3.0, 0.0),
            Point2::new(0.0, 3.0),
        )
        .unwrap();
        let mut valid = Mask::filled(4, 3, true);
        valid.set(2, 1, false);
        let f = encode_field(4, 3, &bcs, &valid).unwrap();
        let back: CoordField<f32> = Cfld::decode(&Cfld::from_coord_field(&f).encode())
            .unwrap()
            .to_coord_field()
            .unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rejects_bad_input() {
        let mut b = Cfld::new(1, 1, 2, vec![1.0, 2.0]).unwrap().encode();
        assert!(matches!(
            Cfld::decode(&b[..b.len() - 2]),
            Err(PcfError::TruncatedFile { .. })
        ));
        b[0] = b'X';
        assert!(matches!(Cfld::decode(&b), Err(PcfError::BadMagic { .. })));
        let one = Cfld::new(1, 1, 1, vec![0.3]).unwrap();
        assert!(one.to_coord_field::<f64>().is_err());
    }
}
