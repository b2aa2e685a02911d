//! Training checkpoints.
//!
//! Layout, little-endian:
//!
//! | field          | type                        |
//! |----------------|-----------------------------|
//! | magic          | `b"REGOPTCK"`               |
//! | version        | `u32` (= 1)                 |
//! | variant tag    | `u8`: 0 aff, 1 lav, 2 quad, 3 tikh |
//! | step counter   | `u64` (Adam updates applied) |
//! | rows, cols     | `u64`, `u64` of the parameter matrix |
//! | offset length  | `u64`                       |
//! | matrix         | `rows × cols` `f64`, row-major |
//! | offset         | `f64` × length              |
//! | Adam m, v      | matrix-shaped, row-major, then offset-shaped, as `m_mat v_mat m_vec v_vec` |
//!
//! Parameter matrices are `W` (aff), `M` (lav), `L` (quad) and `R` (tikh);
//! offsets are `b` (aff) and the additive `c` otherwise.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{AdamState, TrainableParams, Variant};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"REGOPTCK";
const VERSION: u32 = 1;
/// Refuse headers describing more than this many entries per array.
const MAX_ENTRIES: u64 = 1 << 28;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: TrainableParams<f64>,
    pub adam: AdamState<f64>,
}

impl Checkpoint {
    pub fn new<T: Real>(params: &TrainableParams<T>, adam: &AdamState<T>) -> Self {
        let f = |m: &DMatrix<T>| m.map(|v| v.as_f64());
        let g = |m: &DVector<T>| m.map(|v| v.as_f64());
        Self {
            params: params.cast(),
            adam: AdamState {
                t: adam.t,
                m_mat: f(&adam.m_mat),
                v_mat: f(&adam.v_mat),
                m_vec: g(&adam.m_vec),
                v_vec: g(&adam.v_vec),
            },
        }
    }
}

fn put_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    for row in m.row_iter() {
        for v in row.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn put_vector<W: Write>(w: &mut W, v: &DVector<f64>) -> Result<()> {
    for x in v.iter() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_checkpoint<W: Write>(mut w: W, ck: &Checkpoint) -> Result<()> {
    let p = &ck.params;
    let (rows, cols) = p.matrix().shape();
    let len = p.vector().len();
    let a = &ck.adam;
    if a.m_mat.shape() != (rows, cols) || a.v_mat.shape() != (rows, cols) || a.m_vec.len() != len || a.v_vec.len() != len {
        return Err(Error::dim("Adam state vs parameter shape", format!("{rows}x{cols}+{len}"), "mismatched"));
    }
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[p.variant().tag()])?;
    for v in [a.t, rows as u64, cols as u64, len as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    put_matrix(&mut w, p.matrix())?;
    put_vector(&mut w, p.vector())?;
    put_matrix(&mut w, &a.m_mat)?;
    put_matrix(&mut w, &a.v_mat)?;
    put_vector(&mut w, &a.m_vec)?;
    put_vector(&mut w, &a.v_vec)?;
    w.flush()?;
    Ok(())
}

fn take<R: Read, const K: usize>(r: &mut R, what: &str) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("checkpoint ends inside {what}")),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn take_f64s<R: Read>(r: &mut R, count: usize, what: &str) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    r.take(8 * count as u64).read_to_end(&mut bytes)?;
    if bytes.len() != 8 * count {
        return Err(Error::Format(format!("checkpoint ends inside {what}")));
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if let Some(index) = vals.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: format!("checkpoint {what}"),
            index,
        });
    }
    Ok(vals)
}

fn take_matrix<R: Read>(r: &mut R, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
    Ok(DMatrix::from_row_slice(rows, cols, &take_f64s(r, rows * cols, what)?))
}

fn take_vector<R: Read>(r: &mut R, len: usize, what: &str) -> Result<DVector<f64>> {
    Ok(DVector::from_vec(take_f64s(r, len, what)?))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    if &take::<_, 8>(&mut r, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut r, "version")?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let [tag] = take::<_, 1>(&mut r, "variant tag")?;
    let variant = Variant::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown variant tag {tag}")))?;
    let t = u64::from_le_bytes(take(&mut r, "step counter")?);
    let mut dims = [0usize; 3];
    for (d, what) in dims.iter_mut().zip(["rows", "cols", "offset length"]) {
        let v = u64::from_le_bytes(take(&mut r, what)?);
        if v > MAX_ENTRIES {
            return Err(Error::Format(format!("checkpoint {what} {v} too large")));
        }
        *d = v as usize;
    }
    let [rows, cols, len] = dims;
    if (rows as u64) * (cols as u64) > MAX_ENTRIES {
        return Err(Error::Format("checkpoint matrix too large".into()));
    }
    let mat = take_matrix(&mut r, rows, cols, "parameter matrix")?;
    let vec = take_vector(&mut r, len, "offset")?;
    let adam = AdamState {
        t,
        m_mat: take_matrix(&mut r, rows, cols, "Adam m")?,
        v_mat: take_matrix(&mut r, rows, cols, "Adam v")?,
        m_vec: take_vector(&mut r, len, "Adam m offset")?,
        v_vec: take_vector(&mut r, len, "Adam v offset")?,
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint {
        params: TrainableParams::from_parts(variant, mat, vec),
        adam,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    crate::io_util::atomic_write(path, |f| write_checkpoint(BufWriter::new(f), ck))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = File::open(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    read_checkpoint(BufReader::new(f)).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}
