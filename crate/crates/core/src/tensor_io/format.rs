//! Little-endian binary layouts.
//!
//! ```text
//! MMPV: "MMPV" | u32 version | u64 dim              | dim × f64
//! MMMX: "MMMX" | u32 version | u64 rows | u64 cols  | rows·cols × f64 (row-major)
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{DenseMatrix, ParamVector};
use crate::error::{Error, Result};

pub const PVEC_MAGIC: &[u8; 4] = b"MMPV";
pub const MATRIX_MAGIC: &[u8; 4] = b"MMMX";
pub const FORMAT_VERSION: u32 = 1;

fn format_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, msg: msg.into() }
}

pub fn encode_pvec(v: &ParamVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * v.dim());
    out.extend_from_slice(PVEC_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(v.dim() as u64).to_le_bytes());
    for x in v.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn encode_matrix(m: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * m.as_slice().len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for x in m.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(format_err(
                self.pos,
                format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let m = self.take(4, "magic")?;
        if m != magic {
            return Err(format_err(
                0,
                format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(m), String::from_utf8_lossy(magic)),
            ));
        }
        let version = self.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(format_err(4, format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn payload(&mut self, count: u64) -> Result<Vec<f64>> {
        let start = self.pos;
        let remaining = (self.bytes.len() - start) as u64;
        let needed = count.checked_mul(8).ok_or_else(|| format_err(start, "payload size overflows"))?;
        if remaining < needed {
            return Err(format_err(
                self.bytes.len(),
                format!("truncated payload: header declares {count} values ({needed} bytes), found {remaining}"),
            ));
        }
        if remaining > needed {
            return Err(format_err(
                start + needed as usize,
                format!("dim mismatch: {} trailing bytes after {count} values", remaining - needed),
            ));
        }
        let mut values = Vec::with_capacity(count as usize);
        for i in 0..count as usize {
            let off = self.pos;
            let x = f64::from_le_bytes(self.take(8, "value")?.try_into().unwrap());
            if !x.is_finite() {
                return Err(format_err(off, format!("non-finite value at index {i}")));
            }
            values.push(x);
        }
        Ok(values)
    }
}

pub fn decode_pvec(bytes: &[u8]) -> Result<ParamVector> {
    let mut c = Cursor { bytes, pos: 0 };
    c.header(PVEC_MAGIC)?;
    let dim = c.u64("dim")?;
    if dim == 0 {
        return Err(format_err(8, "dim must be positive"));
    }
    Ok(ParamVector::from_raw(c.payload(dim)?))
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DenseMatrix> {
    let mut c = Cursor { bytes, pos: 0 };
    c.header(MATRIX_MAGIC)?;
    let rows = c.u64("rows")?;
    let cols = c.u64("cols")?;
    if rows == 0 || cols == 0 {
        return Err(format_err(8, "rows and cols must be positive"));
    }
    let count = rows.checked_mul(cols).ok_or_else(|| format_err(8, "rows*cols overflows"))?;
    let values = c.payload(count)?;
    DenseMatrix::new(rows as usize, cols as usize, values)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(bytes)?;
    w.flush()?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

pub fn write_pvec(v: &ParamVector, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pvec(v))
}

pub fn read_pvec(path: impl AsRef<Path>) -> Result<ParamVector> {
    decode_pvec(&read_bytes(path.as_ref())?)
}

pub fn write_matrix(m: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_matrix(m))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    decode_matrix(&read_bytes(path.as_ref())?)
}
