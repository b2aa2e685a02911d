//! Affine map files.
//!
//! Layout, little-endian:
//!
//! | field   | type                            |
//! |---------|---------------------------------|
//! | magic   | `b"REGOPTMP"`                   |
//! | version | `u32` (= 1)                     |
//! | label   | `u32` length + UTF-8 (≤ 4096)   |
//! | n, m    | `u64`, `u64`                    |
//! | W       | `n × m` `f64`, row-major        |
//! | b       | `n` `f64`                       |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::AffineMap;

pub const MAP_MAGIC: &[u8; 8] = b"REGOPTMP";
const VERSION: u32 = 1;
const MAX_LABEL: usize = 4096;
const MAX_ENTRIES: u64 = 1 << 28;

pub fn write_map<W: Write>(mut w: W, label: &str, map: &AffineMap<f64>) -> Result<()> {
    if label.len() > MAX_LABEL {
        return Err(Error::Format("map label longer than 4096 bytes".into()));
    }
    w.write_all(MAP_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(label.len() as u32).to_le_bytes())?;
    w.write_all(label.as_bytes())?;
    w.write_all(&(map.w.nrows() as u64).to_le_bytes())?;
    w.write_all(&(map.w.ncols() as u64).to_le_bytes())?;
    for row in map.w.row_iter() {
        for v in row.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for v in map.b.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn exact<R: Read>(r: &mut R, len: usize, what: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(Error::Format(format!("map file ends inside {what}")));
    }
    Ok(buf)
}

fn u64_at(b: &[u8]) -> u64 {
    u64::from_le_bytes(b.try_into().expect("8 bytes"))
}

pub fn read_map<R: Read>(mut r: R) -> Result<(String, AffineMap<f64>)> {
    if exact(&mut r, 8, "magic")? != MAP_MAGIC {
        return Err(Error::Format("not a map file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(exact(&mut r, 4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported map version {version}")));
    }
    let len = u32::from_le_bytes(exact(&mut r, 4, "label length")?.try_into().expect("4 bytes")) as usize;
    if len > MAX_LABEL {
        return Err(Error::Format(format!("map label length {len} too large")));
    }
    let label = String::from_utf8(exact(&mut r, len, "label")?).map_err(|_| Error::Format("map label is not UTF-8".into()))?;
    let dims = exact(&mut r, 16, "shape")?;
    let (n, m) = (u64_at(&dims[..8]), u64_at(&dims[8..]));
    if n.saturating_mul(m) > MAX_ENTRIES {
        return Err(Error::Format(format!("map shape {n}x{m} too large")));
    }
    let (n, m) = (n as usize, m as usize);
    let vals: Vec<f64> = exact(&mut r, 8 * (n * m + n), "payload")?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after map payload".into()));
    }
    let w = DMatrix::from_row_slice(n, m, &vals[..n * m]);
    let b = DVector::from_column_slice(&vals[n * m..]);
    Ok((label, AffineMap::new(w, b)?))
}

pub fn save_map(path: &Path, label: &str, map: &AffineMap<f64>) -> Result<()> {
    crate::io_util::atomic_write(path, |f| write_map(BufWriter::new(f), label, map))
}

pub fn load_map(path: &Path) -> Result<(String, AffineMap<f64>)> {
    let f = File::open(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    read_map(BufReader::new(f)).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}
