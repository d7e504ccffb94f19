//! On-disk formats: the `PFFIELD1` binary field container and CSV slices.
//!
//! Layout of a `.pff` file, all integers and floats little-endian 64-bit:
//!
//! ```text
//! bytes 0..16   ASCII magic "PFFIELD1" padded with spaces
//! u64           dim (1 or 2)
//! u64 * dim     cells per axis
//! f64 * dim     spacing per axis
//! f64 * len     values, row-major (x fastest)
//! ```

use crate::grid::{Field, Grid};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 16] = b"PFFIELD1        ";

#[derive(Debug, Error)]
pub enum FieldIoError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected PFFIELD1 header")]
    BadMagic,
    #[error("unsupported dimension {0}")]
    BadDim(u64),
    #[error("malformed grid header: {0}")]
    BadGrid(#[from] crate::grid::GridError),
}

pub fn write_field(path: impl AsRef<Path>, field: &Field) -> Result<(), FieldIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    let g = field.grid();
    w.write_all(MAGIC)?;
    w.write_all(&(g.dim() as u64).to_le_bytes())?;
    for axis in 0..g.dim() {
        w.write_all(&(g.cells(axis) as u64).to_le_bytes())?;
    }
    for axis in 0..g.dim() {
        w.write_all(&g.spacing(axis).to_le_bytes())?;
    }
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<Field, FieldIoError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 16];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FieldIoError::BadMagic);
    }
    let dim = read_u64(&mut r)?;
    if dim != 1 && dim != 2 {
        return Err(FieldIoError::BadDim(dim));
    }
    let mut n = [1usize; 2];
    for slot in n.iter_mut().take(dim as usize) {
        *slot = read_u64(&mut r)? as usize;
    }
    let mut h = [1.0f64; 2];
    for slot in h.iter_mut().take(dim as usize) {
        *slot = read_f64(&mut r)?;
    }
    let grid = if dim == 1 {
        Grid::new_1d(n[0], h[0])?
    } else {
        Grid::new_2d(n[0], n[1], h[0], h[1])?
    };
    let mut values = vec![0.0; grid.len()];
    for v in &mut values {
        *v = read_f64(&mut r)?;
    }
    Ok(Field::from_values(grid, values))
}

fn read_u64(r: &mut impl Read) -> Result<u64, FieldIoError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64, FieldIoError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Writes a 1D field, or the central x-slice of a 2D field, as `x,value` CSV.
pub fn write_csv_slice(path: impl AsRef<Path>, field: &Field) -> Result<(), FieldIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    let g = field.grid();
    writeln!(w, "x,value")?;
    let iy = if g.dim() == 2 { g.cells(1) / 2 } else { 0 };
    for ix in 0..g.cells(0) {
        let idx = g.index(ix, iy);
        writeln!(w, "{},{}", g.coord(idx)[0], field.values()[idx])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn roundtrip_2d() {
        let g = Grid::new_2d(6, 4, 0.25, 0.5).unwrap();
        let f = Field::from_fn(g, |x| x[0] * 7.0 - x[1] + 0.125);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.pff");
        write_field(&p, &f).unwrap();
        let back = read_field(&p).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.pff");
        std::fs::write(&p, b"not a field file at all........").unwrap();
        assert!(matches!(read_field(&p), Err(FieldIoError::BadMagic)));
    }

    proptest! {
        #[test]
        fn roundtrip_1d_random(values in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
            let g = Grid::new_1d(values.len(), 0.125).unwrap();
            let f = Field::from_values(g, values);
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("f.pff");
            write_field(&p, &f).unwrap();
            prop_assert_eq!(read_field(&p).unwrap(), f);
        }
    }
}
