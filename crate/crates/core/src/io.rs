//! Little-endian grid (`VOXG`) and ordering (`VORD`) files.
//!
//! ```text
//! VOXG: "VOXG" u8 version=1, u8 dtype (1 f32, 2 f64, 3 u16), u32 w h d c,
//!       then w·h·d·c values, layout x + w·(y + h·z), channels contiguous
//! VORD: "VORD" u8 version=1, u8 scheme code, u8 z_snake, u32 w h d,
//!       then w·h·d u64 seq_to_linear entries
//! ```

use std::fs;
use std::path::Path;

use crate::error::{contract, Error, Result};
use crate::ordering::{Ordering, OrderingScheme, Scheme};
use crate::tensor::{FeatureGrid, GridDims};

const GRID_MAGIC: &[u8; 4] = b"VOXG";
const ORDER_MAGIC: &[u8; 4] = b"VORD";
const VERSION: u8 = 1;
const GRID_HEADER: usize = 4 + 1 + 1 + 16;
const ORDER_HEADER: usize = 4 + 1 + 1 + 1 + 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    F32 = 1,
    F64 = 2,
    U16 = 3,
}

impl Dtype {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(Self::F32),
            2 => Some(Self::F64),
            3 => Some(Self::U16),
            _ => None,
        }
    }

    fn width(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::F64 => 8,
            Self::U16 => 2,
        }
    }
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, message: message.into() }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            format_err(self.bytes.len(), format!("truncated {what}: need {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != expected {
            return Err(format_err(0, format!("bad magic {got:?}, expected {:?}", std::str::from_utf8(expected).unwrap())));
        }
        let at = self.pos;
        let v = self.u8("version")?;
        if v != VERSION {
            return Err(format_err(at, format!("unsupported version {v}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(format_err(self.pos, format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn grid_header(out: &mut Vec<u8>, dtype: Dtype, dims: GridDims) -> Result<()> {
    out.extend_from_slice(GRID_MAGIC);
    out.push(VERSION);
    out.push(dtype as u8);
    for v in [dims.w, dims.h, dims.d, dims.c] {
        out.extend_from_slice(&u32::try_from(v).map_err(|_| contract(format!("{dims} does not fit u32 fields")))?.to_le_bytes());
    }
    Ok(())
}

/// Reads the header and checks that the payload length matches it.
fn read_grid_header<'a>(bytes: &'a [u8]) -> Result<(Dtype, GridDims, Reader<'a>)> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(GRID_MAGIC)?;
    let at = r.pos;
    let code = r.u8("dtype")?;
    let dtype = Dtype::from_byte(code).ok_or_else(|| format_err(at, format!("unknown dtype {code}")))?;
    let at = r.pos;
    let [w, h, d, c] = [r.u32("w")?, r.u32("h")?, r.u32("d")?, r.u32("c")?].map(|v| v as usize);
    let dims = GridDims::new(w, h, d, c).map_err(|e| format_err(at, e.to_string()))?;
    let expected = dims.voxels() as u128 * c as u128 * dtype.width() as u128;
    let actual = (bytes.len() - r.pos) as u128;
    if actual < expected {
        return Err(format_err(bytes.len(), format!("truncated payload: {actual} of {expected} bytes")));
    }
    Ok((dtype, dims, r))
}

/// Encodes a feature grid; `dtype` must be `F32` or `F64`.
pub fn encode_grid(grid: &FeatureGrid, dtype: Dtype) -> Result<Vec<u8>> {
    let data = grid.data();
    let mut out = Vec::with_capacity(GRID_HEADER + data.len() * dtype.width());
    grid_header(&mut out, dtype, grid.dims())?;
    match dtype {
        Dtype::F64 => data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Dtype::F32 => data.iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::U16 => return Err(contract("feature grids are stored as f32 or f64")),
    }
    Ok(out)
}

/// Decodes an `f32` or `f64` grid into `f64` values.
pub fn decode_grid(bytes: &[u8]) -> Result<FeatureGrid> {
    let (dtype, dims, mut r) = read_grid_header(bytes)?;
    let n = dims.voxels() * dims.c;
    let data: Vec<f64> = match dtype {
        Dtype::F64 => r.take(n * 8, "payload")?.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect(),
        Dtype::F32 => r
            .take(n * 4, "payload")?
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
            .collect(),
        Dtype::U16 => return Err(format_err(5, "dtype mismatch: u16 labels where features were expected")),
    };
    r.finish()?;
    FeatureGrid::from_vec(dims, data)
}

/// Encodes a label grid as a single-channel `u16` VOXG file.
pub fn encode_labels(dims: GridDims, labels: &[u16]) -> Result<Vec<u8>> {
    if labels.len() != dims.voxels() {
        return Err(contract(format!("{} labels for {} voxels", labels.len(), dims.voxels())));
    }
    let mut out = Vec::with_capacity(GRID_HEADER + labels.len() * 2);
    grid_header(&mut out, Dtype::U16, dims.with_channels(1))?;
    labels.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    Ok(out)
}

pub fn decode_labels(bytes: &[u8]) -> Result<(GridDims, Vec<u16>)> {
    let (dtype, dims, mut r) = read_grid_header(bytes)?;
    if dtype != Dtype::U16 {
        return Err(format_err(5, format!("dtype mismatch: {dtype:?} where u16 labels were expected")));
    }
    if dims.c != 1 {
        return Err(format_err(18, format!("label files have one channel, found {}", dims.c)));
    }
    let labels = r
        .take(dims.voxels() * 2, "payload")?
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect();
    r.finish()?;
    Ok((dims.with_channels(0), labels))
}

pub fn encode_ordering(ordering: &Ordering) -> Result<Vec<u8>> {
    let dims = ordering.dims();
    let scheme = ordering.scheme();
    let mut out = Vec::with_capacity(ORDER_HEADER + ordering.len() * 8);
    out.extend_from_slice(ORDER_MAGIC);
    out.push(VERSION);
    out.push(scheme.scheme.code());
    out.push(u8::from(scheme.z_snake));
    for v in [dims.w, dims.h, dims.d] {
        out.extend_from_slice(&u32::try_from(v).map_err(|_| contract(format!("{dims} does not fit u32 fields")))?.to_le_bytes());
    }
    ordering.seq_to_linear().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    Ok(out)
}

/// Decodes a VORD file and validates that the entries form a permutation.
pub fn decode_ordering(bytes: &[u8]) -> Result<Ordering> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(ORDER_MAGIC)?;
    let at = r.pos;
    let code = r.u8("scheme")?;
    let scheme = Scheme::from_code(code).ok_or_else(|| format_err(at, format!("unknown scheme code {code}")))?;
    let at = r.pos;
    let z_snake = match r.u8("z_snake")? {
        0 => false,
        1 => true,
        v => return Err(format_err(at, format!("z_snake flag must be 0 or 1, got {v}"))),
    };
    let at = r.pos;
    let [w, h, d] = [r.u32("w")?, r.u32("h")?, r.u32("d")?].map(|v| v as usize);
    let dims = GridDims::spatial(w, h, d).map_err(|e| format_err(at, e.to_string()))?;
    let body = r.take(dims.voxels() * 8, "entries")?;
    r.finish()?;
    let entries = body.chunks_exact(8).map(|b| u64::from_le_bytes(b.try_into().unwrap())).collect();
    Ordering::from_permutation(OrderingScheme { scheme, z_snake }, dims, entries)
        .map_err(|e| format_err(ORDER_HEADER, e.to_string()))
}

pub fn write_grid(path: impl AsRef<Path>, grid: &FeatureGrid) -> Result<()> {
    Ok(fs::write(path, encode_grid(grid, Dtype::F64)?)?)
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<FeatureGrid> {
    decode_grid(&fs::read(path)?)
}

pub fn write_labels(path: impl AsRef<Path>, dims: GridDims, labels: &[u16]) -> Result<()> {
    Ok(fs::write(path, encode_labels(dims, labels)?)?)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<(GridDims, Vec<u16>)> {
    decode_labels(&fs::read(path)?)
}

pub fn write_ordering(path: impl AsRef<Path>, ordering: &Ordering) -> Result<()> {
    Ok(fs::write(path, encode_ordering(ordering)?)?)
}

pub fn read_ordering(path: impl AsRef<Path>) -> Result<Ordering> {
    decode_ordering(&fs::read(path)?)
}

pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}
