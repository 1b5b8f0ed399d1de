//! Binary container of named arrays.
//!
//! ```text
//! "MSGU" | u32 version
//! repeated: u32 name_len | name | u8 dtype | u8 rank | u32 dims[rank] | data
//! ```
//!
//! Integers and floats are little-endian. dtype: 0 = f32, 1 = f64, 2 = u8, 3 = u64.

use std::fs;
use std::path::Path;

use crate::tensor::{NamedTensor, Shape, Tensor};
use crate::{Error, Real, Result};

const MAGIC: &[u8; 4] = b"MSGU";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum RecordData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
    U64(Vec<u64>),
}

impl RecordData {
    fn code(&self) -> u8 {
        match self {
            RecordData::F32(_) => 0,
            RecordData::F64(_) => 1,
            RecordData::U8(_) => 2,
            RecordData::U64(_) => 3,
        }
    }

    fn len(&self) -> usize {
        match self {
            RecordData::F32(v) => v.len(),
            RecordData::F64(v) => v.len(),
            RecordData::U8(v) => v.len(),
            RecordData::U64(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: RecordData,
}

#[cfg(feature = "f64")]
fn real_data(v: Vec<Real>) -> RecordData {
    RecordData::F64(v)
}

#[cfg(not(feature = "f64"))]
fn real_data(v: Vec<Real>) -> RecordData {
    RecordData::F32(v)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub records: Vec<Record>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, name: &str, dims: Vec<u32>, data: RecordData) {
        self.records.push(Record {
            name: name.to_owned(),
            dims,
            data,
        });
    }

    pub fn push_tensor(&mut self, name: &str, t: &Tensor) {
        let dims = t.shape().dims().iter().map(|&d| d as u32).collect();
        self.push(name, dims, real_data(t.data().to_vec()));
    }

    pub fn push_reals(&mut self, name: &str, v: &[Real]) {
        self.push(name, vec![v.len() as u32], real_data(v.to_vec()));
    }

    pub fn push_u64(&mut self, name: &str, v: u64) {
        self.push(name, vec![1], RecordData::U64(vec![v]));
    }

    pub fn push_bytes(&mut self, name: &str, v: &[u8]) {
        self.push(name, vec![v.len() as u32], RecordData::U8(v.to_vec()));
    }

    pub fn get(&self, name: &str) -> Result<&Record> {
        self.records
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing record `{name}`")))
    }

    pub fn reals(&self, name: &str) -> Result<Vec<Real>> {
        match &self.get(name)?.data {
            RecordData::F32(v) => Ok(v.iter().map(|&x| x as Real).collect()),
            RecordData::F64(v) => Ok(v.iter().map(|&x| x as Real).collect()),
            _ => Err(Error::Checkpoint(format!("record `{name}` is not floating point"))),
        }
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        let r = self.get(name)?;
        let shape = match r.dims.as_slice() {
            &[n, c, h, w] => Shape::new(n as usize, c as usize, h as usize, w as usize),
            d => return Err(Error::Checkpoint(format!("record `{name}` has rank {}, expected 4", d.len()))),
        };
        Tensor::from_vec(shape, self.reals(name)?).map_err(|e| Error::Checkpoint(format!("record `{name}`: {e}")))
    }

    pub fn u64(&self, name: &str) -> Result<u64> {
        match &self.get(name)?.data {
            RecordData::U64(v) if v.len() == 1 => Ok(v[0]),
            _ => Err(Error::Checkpoint(format!("record `{name}` is not a single u64"))),
        }
    }

    pub fn bytes(&self, name: &str) -> Result<&[u8]> {
        match &self.get(name)?.data {
            RecordData::U8(v) => Ok(v),
            _ => Err(Error::Checkpoint(format!("record `{name}` is not a byte array"))),
        }
    }

    /// All rank-4 floating-point records as named tensors.
    pub fn named_tensors(&self) -> Vec<NamedTensor> {
        self.records
            .iter()
            .filter(|r| r.dims.len() == 4)
            .filter_map(|r| {
                self.tensor(&r.name).ok().map(|value| NamedTensor {
                    name: r.name.clone(),
                    value,
                })
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend(VERSION.to_le_bytes());
        for r in &self.records {
            out.extend((r.name.len() as u32).to_le_bytes());
            out.extend(r.name.as_bytes());
            out.push(r.data.code());
            out.push(r.dims.len() as u8);
            for d in &r.dims {
                out.extend(d.to_le_bytes());
            }
            match &r.data {
                RecordData::F32(v) => v.iter().for_each(|x| out.extend(x.to_le_bytes())),
                RecordData::F64(v) => v.iter().for_each(|x| out.extend(x.to_le_bytes())),
                RecordData::U8(v) => out.extend(v),
                RecordData::U64(v) => v.iter().for_each(|x| out.extend(x.to_le_bytes())),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic (not an MSGU checkpoint)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut records = Vec::new();
        while r.pos < bytes.len() {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Checkpoint("record name is not UTF-8".into()))?;
            let code = r.take(1)?[0];
            let rank = r.take(1)?[0] as usize;
            let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let count = dims.iter().map(|&d| d as usize).product::<usize>();
            let data = match code {
                0 => RecordData::F32(r.take(count * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
                1 => RecordData::F64(r.take(count * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
                2 => RecordData::U8(r.take(count)?.to_vec()),
                3 => RecordData::U64(r.take(count * 8)?.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect()),
                _ => return Err(Error::Checkpoint(format!("record `{name}` has unknown dtype {code}"))),
            };
            debug_assert_eq!(data.len(), count);
            records.push(Record { name, dims, data });
        }
        Ok(Checkpoint { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_layout_of_one_record() {
        let mut c = Checkpoint::new();
        c.push_bytes("ab", &[7, 8]);
        let b = c.to_bytes();
        assert_eq!(&b[..4], b"MSGU");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..12], &2u32.to_le_bytes());
        assert_eq!(&b[12..14], b"ab");
        assert_eq!(b[14], 2);
        assert_eq!(b[15], 1);
        assert_eq!(&b[16..20], &2u32.to_le_bytes());
        assert_eq!(&b[20..], &[7, 8]);
        assert_eq!(Checkpoint::from_bytes(&b).unwrap(), c);
    }

    #[test]
    fn truncation_and_magic_are_reported() {
        let mut c = Checkpoint::new();
        c.push_u64("step", 3);
        let b = c.to_bytes();
        assert!(Checkpoint::from_bytes(&b[..b.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(b"NOPE\x01\0\0\0").is_err());
    }
}
