//! On-disk formats.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! "EXPD" | version: u16 = 1 | n_rows: u64 | n_cols: u64 | degree: u32 | seed: u64
//! | n_cols·degree row indices: u32, column-major, ascending within a column
//! ```

use std::path::Path;

use crate::error::{Error, Result};

use super::BipartiteExpander;

const MAGIC: &[u8; 4] = b"EXPD";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8 + 8 + 4 + 8;

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        if end > self.bytes.len() {
            return Err(format_err(self.pos, format!("truncated {what}")));
        }
        let mut out = [0u8; N];
        out.copy_from_slice(&self.bytes[self.pos..end]);
        self.pos = end;
        Ok(out)
    }
}

impl BipartiteExpander {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.nnz());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_cols as u64).to_le_bytes());
        out.extend_from_slice(&(self.degree as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for col in &self.columns {
            for &r in col {
                out.extend_from_slice(&r.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(format_err(bytes.len(), "truncated header"));
        }
        let mut rd = Reader { bytes, pos: 0 };
        if &rd.take::<4>("magic")? != MAGIC {
            return Err(format_err(0, "bad magic, expected \"EXPD\""));
        }
        let version = u16::from_le_bytes(rd.take("version")?);
        if version != VERSION {
            return Err(format_err(4, format!("unsupported version {version}")));
        }
        let n_rows = u64::from_le_bytes(rd.take("n_rows")?);
        let n_cols = u64::from_le_bytes(rd.take("n_cols")?);
        let degree = u32::from_le_bytes(rd.take("degree")?) as u64;
        let seed = u64::from_le_bytes(rd.take("seed")?);
        if n_rows == 0 || n_rows > u32::MAX as u64 {
            return Err(format_err(
                6,
                format!("n_rows = {n_rows} outside 1..=2^32-1"),
            ));
        }
        if n_cols == 0 {
            return Err(format_err(14, "n_cols = 0"));
        }
        if degree == 0 || degree > n_rows {
            return Err(format_err(
                22,
                format!("degree {degree} outside 1..=n_rows ({n_rows})"),
            ));
        }
        let expected = n_cols
            .checked_mul(degree)
            .and_then(|v| v.checked_mul(4))
            .and_then(|v| v.checked_add(HEADER_LEN as u64))
            .ok_or_else(|| format_err(14, "n_cols·degree overflows"))?;
        if (bytes.len() as u64) < expected {
            return Err(format_err(
                bytes.len(),
                format!("truncated index data: expected {expected} bytes"),
            ));
        }
        if (bytes.len() as u64) > expected {
            return Err(format_err(
                expected as usize,
                "trailing bytes after index data",
            ));
        }
        let (n_cols, degree) = (n_cols as usize, degree as usize);
        let mut columns = Vec::with_capacity(n_cols);
        for c in 0..n_cols {
            let mut col = Vec::with_capacity(degree);
            for _ in 0..degree {
                let at = rd.pos;
                let r = u32::from_le_bytes(rd.take("row index")?);
                if r as u64 >= n_rows {
                    return Err(format_err(
                        at,
                        format!("row index {r} >= n_rows = {n_rows} in column {c}"),
                    ));
                }
                if let Some(&prev) = col.last() {
                    if r <= prev {
                        return Err(format_err(
                            at,
                            format!("column {c} indices not strictly ascending"),
                        ));
                    }
                }
                col.push(r);
            }
            columns.push(col);
        }
        Ok(Self {
            n_rows: n_rows as usize,
            n_cols,
            degree,
            columns,
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// JSON debug form mirroring the binary header fields.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BipartiteExpander = serde_json::from_str(text)?;
        let checked = Self::from_parts(raw.n_rows, raw.columns, raw.seed)?;
        if checked.n_cols != raw.n_cols || checked.degree != raw.degree {
            return Err(Error::InvalidShape(format!(
                "header says {}x{} with degree {}, columns give {}x{} with degree {}",
                raw.n_rows, raw.n_cols, raw.degree, checked.n_rows, checked.n_cols, checked.degree
            )));
        }
        Ok(checked)
    }
}
