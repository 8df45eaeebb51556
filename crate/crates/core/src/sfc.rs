//! Bit-level codecs for 2D/3D Hilbert and Morton (Z-order) curves.
//!
//! The 2D Hilbert codec uses the rotate-and-reflect construction with the
//! curve starting at the origin and taking its first step along `+y`:
//!
//! ```text
//!   order 1:   1 --- 2
//!              |     |
//!              0     3
//! ```
//!
//! The 3D Hilbert codec follows the Gray-code formulation that tracks an
//! entry corner and an intra-cell direction per level, so coarser levels
//! are prefixes of finer ones (`index(order k) >> 3 == index(order k - 1)`
//! of the parent cell).
//!
//! Morton codes interleave coordinate bits with `x` in the lowest slot.

use crate::error::{range, Result};

/// Recursion depth of a power-of-two curve: side length is `2^bits`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CurveOrder(u32);

impl CurveOrder {
    pub const MAX_BITS: u32 = 21;

    pub fn new(bits_per_axis: u32) -> Result<Self> {
        if bits_per_axis == 0 || bits_per_axis > Self::MAX_BITS {
            return Err(range(format!(
                "bits_per_axis must be in 1..={}, got {bits_per_axis}",
                Self::MAX_BITS
            )));
        }
        Ok(Self(bits_per_axis))
    }

    /// Smallest order whose side covers `extent` cells (at least 1).
    pub fn covering(extent: u64) -> Result<Self> {
        let mut bits = 1;
        while (1u64 << bits) < extent {
            bits += 1;
            if bits > Self::MAX_BITS {
                return Err(range(format!("extent {extent} exceeds 2^{}", Self::MAX_BITS)));
            }
        }
        Self::new(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn side(self) -> u64 {
        1u64 << self.0
    }

    fn check_coord(self, v: u32, axis: &str) -> Result<()> {
        if u64::from(v) >= self.side() {
            return Err(range(format!(
                "{axis}={v} outside [0, {}) at order {}",
                self.side(),
                self.0
            )));
        }
        Ok(())
    }
}

pub fn hilbert2d_index(x: u32, y: u32, order: CurveOrder) -> Result<u64> {
    order.check_coord(x, "x")?;
    order.check_coord(y, "y")?;
    let n = order.side();
    let (mut x, mut y) = (u64::from(x), u64::from(y));
    let mut d = 0u64;
    let mut s = n >> 1;
    while s > 0 {
        let rx = u64::from(x & s != 0);
        let ry = u64::from(y & s != 0);
        d += s * s * ((3 * rx) ^ ry);
        rotate_quadrant(n, &mut x, &mut y, rx, ry);
        s >>= 1;
    }
    Ok(d)
}

pub fn hilbert2d_coord(index: u64, order: CurveOrder) -> Result<(u32, u32)> {
    let n = order.side();
    if index >= n * n {
        return Err(range(format!("index {index} outside [0, {})", n * n)));
    }
    let (mut x, mut y) = (0u64, 0u64);
    let mut t = index;
    let mut s = 1u64;
    while s < n {
        let rx = 1 & (t / 2);
        let ry = 1 & (t ^ rx);
        rotate_quadrant(s, &mut x, &mut y, rx, ry);
        x += s * rx;
        y += s * ry;
        t /= 4;
        s <<= 1;
    }
    Ok((x as u32, y as u32))
}

fn rotate_quadrant(n: u64, x: &mut u64, y: &mut u64, rx: u64, ry: u64) {
    if ry == 0 {
        if rx == 1 {
            *x = n - 1 - *x;
            *y = n - 1 - *y;
        }
        std::mem::swap(x, y);
    }
}

const DIMS3: u32 = 3;
const MASK3: u32 = (1 << DIMS3) - 1;

fn rotl3(v: u32, r: u32) -> u32 {
    let r = r % DIMS3;
    ((v << r) | (v >> (DIMS3 - r))) & MASK3
}

fn rotr3(v: u32, r: u32) -> u32 {
    let r = r % DIMS3;
    ((v >> r) | (v << (DIMS3 - r))) & MASK3
}

fn gray(i: u32) -> u32 {
    i ^ (i >> 1)
}

fn gray_inverse(g: u32) -> u32 {
    let mut i = g;
    let mut shift = 1;
    while shift < DIMS3 {
        i ^= i >> shift;
        shift <<= 1;
    }
    i
}

// entry corner of sub-cell w
fn entry_corner(w: u32) -> u32 {
    if w == 0 {
        0
    } else {
        gray(2 * ((w - 1) / 2))
    }
}

// axis along which sub-cell w is exited
fn intra_direction(w: u32) -> u32 {
    let d = if w == 0 {
        0
    } else if w % 2 == 0 {
        (w - 1).trailing_ones()
    } else {
        w.trailing_ones()
    };
    d % DIMS3
}

pub fn hilbert3d_index(x: u32, y: u32, z: u32, order: CurveOrder) -> Result<u64> {
    order.check_coord(x, "x")?;
    order.check_coord(y, "y")?;
    order.check_coord(z, "z")?;
    let (mut entry, mut dir) = (0u32, 0u32);
    let mut h = 0u64;
    for level in (0..order.bits()).rev() {
        let l = ((x >> level) & 1) | (((y >> level) & 1) << 1) | (((z >> level) & 1) << 2);
        let l = rotr3(l ^ entry, dir + 1);
        let w = gray_inverse(l);
        entry ^= rotl3(entry_corner(w), dir + 1);
        dir = (dir + intra_direction(w) + 1) % DIMS3;
        h = (h << DIMS3) | u64::from(w);
    }
    Ok(h)
}

pub fn hilbert3d_coord(index: u64, order: CurveOrder) -> Result<(u32, u32, u32)> {
    let total = 1u64 << (DIMS3 * order.bits());
    if index >= total {
        return Err(range(format!("index {index} outside [0, {total})")));
    }
    let (mut entry, mut dir) = (0u32, 0u32);
    let (mut x, mut y, mut z) = (0u32, 0u32, 0u32);
    for level in (0..order.bits()).rev() {
        let w = ((index >> (DIMS3 * level)) & u64::from(MASK3)) as u32;
        let l = rotl3(gray(w), dir + 1) ^ entry;
        x |= (l & 1) << level;
        y |= ((l >> 1) & 1) << level;
        z |= ((l >> 2) & 1) << level;
        entry ^= rotl3(entry_corner(w), dir + 1);
        dir = (dir + intra_direction(w) + 1) % DIMS3;
    }
    Ok((x, y, z))
}

fn spread2(v: u64) -> u64 {
    let mut v = v & 0xffff_ffff;
    v = (v | (v << 16)) & 0x0000_ffff_0000_ffff;
    v = (v | (v << 8)) & 0x00ff_00ff_00ff_00ff;
    v = (v | (v << 4)) & 0x0f0f_0f0f_0f0f_0f0f;
    v = (v | (v << 2)) & 0x3333_3333_3333_3333;
    (v | (v << 1)) & 0x5555_5555_5555_5555
}

fn compact2(v: u64) -> u64 {
    let mut v = v & 0x5555_5555_5555_5555;
    v = (v | (v >> 1)) & 0x3333_3333_3333_3333;
    v = (v | (v >> 2)) & 0x0f0f_0f0f_0f0f_0f0f;
    v = (v | (v >> 4)) & 0x00ff_00ff_00ff_00ff;
    v = (v | (v >> 8)) & 0x0000_ffff_0000_ffff;
    (v | (v >> 16)) & 0xffff_ffff
}

fn spread3(v: u64) -> u64 {
    let mut v = v & 0x1f_ffff;
    v = (v | (v << 32)) & 0x001f_0000_0000_ffff;
    v = (v | (v << 16)) & 0x001f_0000_ff00_00ff;
    v = (v | (v << 8)) & 0x100f_00f0_0f00_f00f;
    v = (v | (v << 4)) & 0x10c3_0c30_c30c_30c3;
    (v | (v << 2)) & 0x1249_2492_4924_9249
}

fn compact3(v: u64) -> u64 {
    let mut v = v & 0x1249_2492_4924_9249;
    v = (v | (v >> 2)) & 0x10c3_0c30_c30c_30c3;
    v = (v | (v >> 4)) & 0x100f_00f0_0f00_f00f;
    v = (v | (v >> 8)) & 0x001f_0000_ff00_00ff;
    v = (v | (v >> 16)) & 0x001f_0000_0000_ffff;
    (v | (v >> 32)) & 0x1f_ffff
}

pub fn morton2d_index(x: u64, y: u64) -> Result<u64> {
    if x > u64::from(u32::MAX) || y > u64::from(u32::MAX) {
        return Err(range(format!("({x}, {y}) does not fit a 64-bit 2D Morton code")));
    }
    Ok(spread2(x) | (spread2(y) << 1))
}

pub fn morton2d_coord(index: u64) -> (u64, u64) {
    (compact2(index), compact2(index >> 1))
}

pub fn morton3d_index(x: u64, y: u64, z: u64) -> Result<u64> {
    let limit = 1u64 << CurveOrder::MAX_BITS;
    if x >= limit || y >= limit || z >= limit {
        return Err(range(format!("({x}, {y}, {z}) does not fit a 64-bit 3D Morton code")));
    }
    Ok(spread3(x) | (spread3(y) << 1) | (spread3(z) << 2))
}

pub fn morton3d_coord(index: u64) -> (u64, u64, u64) {
    (compact3(index), compact3(index >> 1), compact3(index >> 2))
}
