//! Binary dataset container.
//!
//! Layout, all integers and floats little-endian:
//!
//! | field        | type          |
//! |--------------|---------------|
//! | magic        | `b"REGOPTDS"` |
//! | version      | `u32` (= 1)   |
//! | n            | `u64`         |
//! | m            | `u64`         |
//! | N            | `u64`         |
//! | seed         | `u64`         |
//! | η            | `f64`         |
//! | generator id | `u32` length + UTF-8 bytes |
//! | X            | `N × n` `f64`, row-major (one signal per row) |
//! | Y            | `N × m` `f64`, row-major |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::moments::{DatasetMeta, PairedDataset};

pub const DATASET_MAGIC: &[u8; 8] = b"REGOPTDS";
const VERSION: u32 = 1;
const MAX_GENERATOR_LEN: u32 = 4096;

pub fn write_dataset<W: Write>(mut w: W, data: &PairedDataset<f64>) -> Result<()> {
    let gen = data.meta.generator.as_bytes();
    if gen.len() > MAX_GENERATOR_LEN as usize {
        return Err(Error::Format("generator id longer than 4096 bytes".into()));
    }
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [
        data.signal_dim() as u64,
        data.measurement_dim() as u64,
        data.len() as u64,
        data.meta.seed,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&data.meta.noise_level.to_le_bytes())?;
    w.write_all(&(gen.len() as u32).to_le_bytes())?;
    w.write_all(gen)?;
    // column-major n×N storage is exactly row-major N×n
    write_f64s(&mut w, data.x().as_slice())?;
    write_f64s(&mut w, data.y().as_slice())?;
    w.flush()?;
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * 4096);
    for chunk in values.chunks(4096) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<PairedDataset<f64>> {
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format("not a dataset file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r, "version")?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let n = u64::from_le_bytes(read_array(&mut r, "n")?) as usize;
    let m = u64::from_le_bytes(read_array(&mut r, "m")?) as usize;
    let count = u64::from_le_bytes(read_array(&mut r, "N")?) as usize;
    let seed = u64::from_le_bytes(read_array(&mut r, "seed")?);
    let eta = f64::from_le_bytes(read_array(&mut r, "eta")?);
    let gen_len = u32::from_le_bytes(read_array(&mut r, "generator length")?);
    if gen_len > MAX_GENERATOR_LEN {
        return Err(Error::Format(format!("generator id length {gen_len} too large")));
    }
    let mut gen = vec![0u8; gen_len as usize];
    read_exact(&mut r, &mut gen, "generator id")?;
    let generator =
        String::from_utf8(gen).map_err(|_| Error::Format("generator id is not UTF-8".into()))?;

    let x = read_matrix(&mut r, n, count, "X")?;
    let y = read_matrix(&mut r, m, count, "Y")?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after Y payload".into()));
    }
    PairedDataset::new(
        x,
        y,
        DatasetMeta {
            seed,
            noise_level: eta,
            generator,
        },
    )
}

fn read_matrix<R: Read>(r: &mut R, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
    let len = rows
        .checked_mul(cols)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| Error::Format(format!("{what} payload size overflows")))?;
    // grows with the data actually present, so a corrupt header cannot
    // trigger a huge allocation
    let mut bytes = Vec::new();
    r.take(len as u64).read_to_end(&mut bytes)?;
    if bytes.len() != len {
        return Err(Error::Format(format!(
            "{what} payload truncated: expected {len} bytes, found {}",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: format!("{what} payload"),
            index: i,
        });
    }
    Ok(DMatrix::from_vec(rows, cols, values))
}

fn read_array<R: Read, const K: usize>(r: &mut R, what: &str) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    read_exact(r, &mut buf, what)?;
    Ok(buf)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("file ends inside {what}")),
        _ => Error::Io(e),
    })
}

/// Writes to a temporary sibling and renames it into place.
pub fn save_dataset(path: &Path, data: &PairedDataset<f64>) -> Result<()> {
    crate::io_util::atomic_write(path, |f| write_dataset(BufWriter::new(f), data))
}

pub fn load_dataset(path: &Path) -> Result<PairedDataset<f64>> {
    let f = File::open(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    read_dataset(BufReader::new(f)).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}
