//! Grid binary format ("HTGD") and CSV emitters for the tomographic data
//! objects.
//!
//! HTGD layout: magic bytes `48 54 47 44`, one version byte (= 1), one ndim
//! byte, ndim little-endian u32 dims, ndim little-endian f64 origin
//! components, one f64 spacing, then the values as little-endian f64,
//! row-major with the last axis fastest. The round trip is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{ScalarGrid, MAX_GRID_VALUES};

pub const HTGD_MAGIC: [u8; 4] = *b"HTGD";
pub const HTGD_VERSION: u8 = 1;

/// Serialize a grid into the HTGD byte layout.
pub fn grid_to_bytes(g: &ScalarGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + g.ndim() * 12 + 8 + g.len() * 8);
    out.extend_from_slice(&HTGD_MAGIC);
    out.push(HTGD_VERSION);
    out.push(g.ndim() as u8);
    for &d in g.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &o in g.origin() {
        out.extend_from_slice(&o.to_le_bytes());
    }
    out.extend_from_slice(&g.spacing().to_le_bytes());
    for &v in g.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Truncated {
                expected: self.pos + n - self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32_le(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64_le(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parse a grid from HTGD bytes.
pub fn grid_from_bytes(buf: &[u8]) -> Result<ScalarGrid> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != HTGD_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = c.take(1)?[0];
    if version != HTGD_VERSION {
        return Err(Error::BadVersion(version));
    }
    let ndim = c.take(1)?[0] as usize;
    if ndim != 2 && ndim != 3 {
        return Err(Error::InvalidGrid(format!("ndim byte must be 2 or 3, got {ndim}")));
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut total: u64 = 1;
    for _ in 0..ndim {
        let d = c.u32_le()? as u64;
        total = total.saturating_mul(d);
        dims.push(d as usize);
    }
    if total > MAX_GRID_VALUES {
        return Err(Error::DimOverflow(total));
    }
    let mut origin = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        origin.push(c.f64_le()?);
    }
    let spacing = c.f64_le()?;
    let n = total as usize;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(c.f64_le()?);
    }
    ScalarGrid::new(dims, origin, spacing, values)
}

pub fn write_grid<P: AsRef<Path>>(g: &ScalarGrid, path: P) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&grid_to_bytes(g))?;
    f.flush()?;
    Ok(())
}

pub fn read_grid<P: AsRef<Path>>(path: P) -> Result<ScalarGrid> {
    let mut buf = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut buf)?;
    grid_from_bytes(&buf)
}

/// Format a float with 17 significant digits, enough to round-trip f64.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write a 2D grid as an 8-bit binary portable graymap, values scaled so the
/// grid maximum maps to 255 (a zero grid maps to all black).
pub fn write_pgm<P: AsRef<Path>>(g: &ScalarGrid, path: P) -> Result<()> {
    if g.ndim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: g.ndim() });
    }
    let (nx, ny) = (g.dims()[0], g.dims()[1]);
    let max = g.values().iter().cloned().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let mut f = BufWriter::new(File::create(path)?);
    write!(f, "P5\n{ny} {nx}\n255\n")?;
    let mut row = Vec::with_capacity(ny);
    for i in 0..nx {
        row.clear();
        for j in 0..ny {
            let v = (g.at(&[i, j]).max(0.0) * scale).round().clamp(0.0, 255.0);
            row.push(v as u8);
        }
        f.write_all(&row)?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::grid_from_function;

    #[test]
    fn round_trip_2d_zeros() {
        let g = ScalarGrid::zeros(vec![2, 2], vec![0.0, 0.0], 1.0).unwrap();
        let bytes = grid_to_bytes(&g);
        // magic + version + ndim + 2 dims + 2 origin + spacing + 4 values
        assert_eq!(bytes.len(), 4 + 1 + 1 + 8 + 16 + 8 + 32);
        let back = grid_from_bytes(&bytes).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn round_trip_3d_bit_exact() {
        let g = grid_from_function(&[-1.0; 3], &[1.0; 3], &[2, 2, 2], |p| {
            p[0] * 0.1 + p[1] * std::f64::consts::PI + p[2].exp()
        })
        .unwrap();
        let back = grid_from_bytes(&grid_to_bytes(&g)).unwrap();
        assert_eq!(g, back);
        for (a, b) in g.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn bad_magic_detected() {
        let g = ScalarGrid::zeros(vec![2, 2], vec![0.0, 0.0], 1.0).unwrap();
        let mut bytes = grid_to_bytes(&g);
        bytes[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(grid_from_bytes(&bytes), Err(Error::BadMagic)));
    }

    #[test]
    fn truncation_and_overflow_detected() {
        let g = ScalarGrid::zeros(vec![2, 2], vec![0.0, 0.0], 1.0).unwrap();
        let bytes = grid_to_bytes(&g);
        assert!(matches!(
            grid_from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated { .. })
        ));
        let mut bytes = grid_to_bytes(&g);
        bytes[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
        bytes[10..14].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(grid_from_bytes(&bytes), Err(Error::DimOverflow(_))));
    }

    #[test]
    fn fmt17_round_trips() {
        for &x in &[0.1, std::f64::consts::PI, 1.0 / 3.0, 6.02e23, -1e-300] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }
}
