//! Binary field snapshots.
//!
//! Layout (little-endian):
//! - magic `MNLSFLD1` (8 bytes)
//! - `u32` dimension N
//! - N x `u64` per-axis point counts
//! - N x `f64` per-axis box lengths
//! - `u32` component count M
//! - M x (n_total x (`f64` re, `f64` im)) interleaved values, row-major
//!
//! Values round-trip bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ComponentField, FieldVec};
use crate::grid::GridSpec;

const MAGIC: &[u8; 8] = b"MNLSFLD1";

pub fn write_snapshot(path: &Path, field: &FieldVec) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let grid = field.grid();
    w.write_all(MAGIC)?;
    w.write_all(&(grid.dim() as u32).to_le_bytes())?;
    for &n in grid.points() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for &l in grid.box_length() {
        w.write_all(&l.to_le_bytes())?;
    }
    w.write_all(&(field.len() as u32).to_le_bytes())?;
    for c in field.components() {
        for v in c.values() {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<FieldVec> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadSnapshot("bad magic".into()));
    }
    let dim = read_u32(&mut r)? as usize;
    if dim == 0 || dim > crate::grid::MAX_DIM {
        return Err(Error::BadSnapshot(format!("unsupported dimension {dim}")));
    }
    let mut points = Vec::with_capacity(dim);
    for _ in 0..dim {
        points.push(read_u64(&mut r)? as usize);
    }
    let mut lengths = Vec::with_capacity(dim);
    for _ in 0..dim {
        lengths.push(read_f64(&mut r)?);
    }
    let grid: Arc<GridSpec> = GridSpec::new(&points, &lengths)?;
    let m = read_u32(&mut r)? as usize;
    if m == 0 || m > 64 {
        return Err(Error::BadSnapshot(format!("unreasonable component count {m}")));
    }
    let npts = grid.total_points();
    let mut comps = Vec::with_capacity(m);
    for _ in 0..m {
        let mut vals = Vec::with_capacity(npts);
        for _ in 0..npts {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            vals.push(Complex64::new(re, im));
        }
        comps.push(ComponentField::from_values(&grid, vals)?);
    }
    FieldVec::new(comps)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_roundtrip_is_bit_exact() {
        let g = GridSpec::new(&[32, 16], &[7.5, 3.25]).unwrap();
        let u = FieldVec::new(vec![
            ComponentField::sample(&g, |x| Complex64::new(x[0] * 0.1, x[1].sin())).unwrap(),
            ComponentField::sample(&g, |x| Complex64::new((-x[0] * x[0]).exp(), 1.0 / 3.0))
                .unwrap(),
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.mnls");
        write_snapshot(&path, &u).unwrap();
        let v = read_snapshot(&path).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.grid().points(), g.points());
        for (a, b) in u.components().iter().zip(v.components()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
    }

    #[test]
    fn rejects_truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.mnls");
        std::fs::write(&path, b"MNLSFLD1\x01").unwrap();
        assert!(read_snapshot(&path).is_err());
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.mnls");
        std::fs::write(&path, vec![0u8; 64]).unwrap();
        assert!(matches!(read_snapshot(&path), Err(Error::BadSnapshot(_))));
    }
}
