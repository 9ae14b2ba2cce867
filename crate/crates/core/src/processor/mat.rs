//! Reader for numeric arrays in MATLAB level-5 `.mat` files.
//!
//! Handles both byte orders, compressed elements and every numeric storage
//! type. Cells, structs, objects, sparse and char arrays are skipped.

use std::collections::BTreeMap;
use std::io::Read;

use flate2::read::ZlibDecoder;

const HEADER_LEN: usize = 128;

const MI_INT8: u32 = 1;
const MI_UINT8: u32 = 2;
const MI_INT16: u32 = 3;
const MI_UINT16: u32 = 4;
const MI_INT32: u32 = 5;
const MI_UINT32: u32 = 6;
const MI_SINGLE: u32 = 7;
const MI_DOUBLE: u32 = 9;
const MI_INT64: u32 = 12;
const MI_UINT64: u32 = 13;
const MI_MATRIX: u32 = 14;
const MI_COMPRESSED: u32 = 15;

const MX_DOUBLE: u8 = 6;
const MX_UINT64: u8 = 15;

/// A dense real array in column-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatArray {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl MatArray {
    pub fn rows(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        self.dims.iter().skip(1).product()
    }

    /// Element at (row, col) of the 2-D view.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.rows() + row]
    }

    pub fn is_vector(&self) -> bool {
        self.dims.iter().filter(|&&d| d != 1).count() <= 1
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MatError {
    #[error("not a level-5 MAT file")]
    NotMat5,
    #[error("truncated data element at byte {0}")]
    Truncated(usize),
    #[error("invalid compressed element: {0}")]
    Compression(String),
    #[error("malformed matrix `{name}`: {reason}")]
    Malformed { name: String, reason: String },
}

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    endian: Endian,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self) -> Result<u32, MatError> {
        let bytes = self.take(4)?;
        let arr = [bytes[0], bytes[1], bytes[2], bytes[3]];
        Ok(match self.endian {
            Endian::Little => u32::from_le_bytes(arr),
            Endian::Big => u32::from_be_bytes(arr),
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MatError> {
        let end = self.pos.checked_add(n).ok_or(MatError::Truncated(self.pos))?;
        if end > self.buf.len() {
            return Err(MatError::Truncated(self.pos));
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.buf.len()
    }

    /// Reads one tagged element, returning its type and payload. Payloads of
    /// uncompressed elements are followed by padding to 8 bytes.
    fn element(&mut self) -> Result<(u32, &'a [u8]), MatError> {
        let first = self.u32()?;
        if first >> 16 != 0 {
            // Small data element: type and size share the first word.
            let size = (first >> 16) as usize;
            let ty = first & 0xFFFF;
            let word = self.take(4)?;
            if size > 4 {
                return Err(MatError::Truncated(self.pos));
            }
            return Ok((ty, &word[..size]));
        }
        let size = self.u32()? as usize;
        let payload = self.take(size)?;
        if first != MI_COMPRESSED {
            let pad = (8 - size % 8) % 8;
            self.pos = (self.pos + pad).min(self.buf.len());
        }
        Ok((first, payload))
    }
}

fn numeric_values(ty: u32, bytes: &[u8], endian: Endian) -> Option<Vec<f64>> {
    macro_rules! decode {
        ($t:ty, $n:expr) => {
            bytes
                .chunks_exact($n)
                .map(|c| {
                    let arr: [u8; $n] = c.try_into().unwrap();
                    (match endian {
                        Endian::Little => <$t>::from_le_bytes(arr),
                        Endian::Big => <$t>::from_be_bytes(arr),
                    }) as f64
                })
                .collect()
        };
    }
    Some(match ty {
        MI_INT8 => bytes.iter().map(|&b| b as i8 as f64).collect(),
        MI_UINT8 => bytes.iter().map(|&b| b as f64).collect(),
        MI_INT16 => decode!(i16, 2),
        MI_UINT16 => decode!(u16, 2),
        MI_INT32 => decode!(i32, 4),
        MI_UINT32 => decode!(u32, 4),
        MI_SINGLE => decode!(f32, 4),
        MI_DOUBLE => decode!(f64, 8),
        MI_INT64 => decode!(i64, 8),
        MI_UINT64 => decode!(u64, 8),
        _ => return None,
    })
}

fn parse_matrix(payload: &[u8], endian: Endian, out: &mut BTreeMap<String, MatArray>) -> Result<(), MatError> {
    let mut cur = Cursor { buf: payload, pos: 0, endian };
    if payload.is_empty() {
        return Ok(());
    }
    let (_, flags) = cur.element()?;
    let flags = numeric_values(MI_UINT32, flags, endian).and_then(|v| v.first().copied()).unwrap_or(0.0) as u32;
    let class = (flags & 0xFF) as u8;
    let complex = flags & 0x0800 != 0;

    let (dims_ty, dims_raw) = cur.element()?;
    let dims: Vec<usize> = numeric_values(dims_ty, dims_raw, endian).unwrap_or_default().into_iter().map(|d| d as usize).collect();
    let (_, name_raw) = cur.element()?;
    let name = String::from_utf8_lossy(name_raw).into_owned();

    if !(MX_DOUBLE..=MX_UINT64).contains(&class) {
        return Ok(());
    }
    let malformed = |reason: String| MatError::Malformed { name: name.clone(), reason };
    let (data_ty, data_raw) = cur.element()?;
    let data = numeric_values(data_ty, data_raw, endian).ok_or_else(|| malformed(format!("unsupported storage type {data_ty}")))?;
    let expected: usize = dims.iter().product();
    if data.len() != expected {
        return Err(malformed(format!("dimensions {dims:?} need {expected} values, found {}", data.len())));
    }
    if complex {
        log::warn!("ignoring imaginary part of `{name}`");
    }
    out.insert(name, MatArray { dims, data });
    Ok(())
}

fn parse_elements(buf: &[u8], endian: Endian, out: &mut BTreeMap<String, MatArray>) -> Result<(), MatError> {
    let mut cur = Cursor { buf, pos: 0, endian };
    while !cur.at_end() {
        // Trailing padding shorter than a tag.
        if buf.len() - cur.pos < 8 {
            break;
        }
        let (ty, payload) = cur.element()?;
        match ty {
            MI_MATRIX => parse_matrix(payload, endian, out)?,
            MI_COMPRESSED => {
                let mut inflated = Vec::new();
                ZlibDecoder::new(payload).read_to_end(&mut inflated).map_err(|e| MatError::Compression(e.to_string()))?;
                parse_elements(&inflated, endian, out)?;
            }
            _ => {}
        }
    }
    Ok(())
}

/// Reads every numeric array in the file, keyed by variable name.
pub fn read_mat(bytes: &[u8]) -> Result<BTreeMap<String, MatArray>, MatError> {
    if bytes.len() < HEADER_LEN {
        return Err(MatError::NotMat5);
    }
    let endian = match &bytes[126..128] {
        b"IM" => Endian::Little,
        b"MI" => Endian::Big,
        _ => return Err(MatError::NotMat5),
    };
    let mut out = BTreeMap::new();
    parse_elements(&bytes[HEADER_LEN..], endian, &mut out)?;
    Ok(out)
}
