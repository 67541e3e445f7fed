//! Little-endian binary conventions shared by dataset and weight files, and
//! the named-block container used for model weights.
//!
//! Weight file layout:
//!
//! ```text
//! magic      4 bytes  "MNOW"
//! version    u32      1
//! kind       str      model family, e.g. "fno"
//! n_meta     u32      followed by n_meta (key: str, value: str) pairs
//! n_blocks   u32      followed by n_blocks blocks:
//!   name     str
//!   dtype    u8       0 = real f64, 1 = complex f64 stored as (re, im) pairs
//!   ndim     u8
//!   dims     u64 * ndim
//!   data     f64 * (product(dims) * (1 + dtype))
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8 bytes. All integers and
//! floats are little-endian.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"MNOW";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("missing block {0:?}")]
    MissingBlock(String),
    #[error("missing metadata key {0:?}")]
    MissingMeta(String),
}

pub(crate) fn format_err<T>(msg: impl Into<String>) -> Result<T, ContainerError> {
    Err(ContainerError::Format(msg.into()))
}

pub(crate) trait WriteLe: Write {
    fn put_u8(&mut self, v: u8) -> io::Result<()> {
        self.write_all(&[v])
    }
    fn put_u32(&mut self, v: u32) -> io::Result<()> {
        self.write_all(&v.to_le_bytes())
    }
    fn put_u64(&mut self, v: u64) -> io::Result<()> {
        self.write_all(&v.to_le_bytes())
    }
    fn put_f64(&mut self, v: f64) -> io::Result<()> {
        self.write_all(&v.to_le_bytes())
    }
    fn put_f64s(&mut self, vs: &[f64]) -> io::Result<()> {
        for &v in vs {
            self.put_f64(v)?;
        }
        Ok(())
    }
    fn put_str(&mut self, s: &str) -> io::Result<()> {
        self.put_u32(s.len() as u32)?;
        self.write_all(s.as_bytes())
    }
}

impl<W: Write + ?Sized> WriteLe for W {}

pub(crate) trait ReadLe: Read {
    fn get_array<const N: usize>(&mut self) -> io::Result<[u8; N]> {
        let mut b = [0u8; N];
        self.read_exact(&mut b)?;
        Ok(b)
    }
    fn get_u8(&mut self) -> io::Result<u8> {
        Ok(self.get_array::<1>()?[0])
    }
    fn get_u32(&mut self) -> io::Result<u32> {
        Ok(u32::from_le_bytes(self.get_array()?))
    }
    fn get_u64(&mut self) -> io::Result<u64> {
        Ok(u64::from_le_bytes(self.get_array()?))
    }
    fn get_f64(&mut self) -> io::Result<f64> {
        Ok(f64::from_le_bytes(self.get_array()?))
    }
    fn get_f64s(&mut self, n: usize) -> io::Result<Vec<f64>> {
        let mut bytes = vec![0u8; n * 8];
        self.read_exact(&mut bytes)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn get_str(&mut self) -> Result<String, ContainerError> {
        let n = self.get_u32()? as usize;
        if n > 1 << 20 {
            return format_err("string length out of range");
        }
        let mut b = vec![0u8; n];
        self.read_exact(&mut b)?;
        String::from_utf8(b).or_else(|_| format_err("invalid UTF-8"))
    }
}

impl<R: Read + ?Sized> ReadLe for R {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    Real = 0,
    Complex = 1,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    /// Real values, or interleaved (re, im) pairs for complex blocks.
    pub data: Vec<f64>,
}

impl Block {
    pub fn real(name: &str, shape: &[usize], data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            name: name.into(),
            dtype: DType::Real,
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn complex(name: &str, shape: &[usize], interleaved: Vec<f64>) -> Self {
        debug_assert_eq!(2 * shape.iter().product::<usize>(), interleaved.len());
        Self {
            name: name.into(),
            dtype: DType::Complex,
            shape: shape.to_vec(),
            data: interleaved,
        }
    }
}

/// Named tensors plus string metadata, as stored in a weight file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub blocks: Vec<Block>,
}

impl Container {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.into(),
            ..Default::default()
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn push(&mut self, block: Block) {
        self.blocks.push(block);
    }

    pub fn block(&self, name: &str) -> Result<&Block, ContainerError> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| ContainerError::MissingBlock(name.into()))
    }

    pub fn meta(&self, key: &str) -> Result<&str, ContainerError> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| ContainerError::MissingMeta(key.into()))
    }

    pub fn meta_parse<V: std::str::FromStr>(&self, key: &str) -> Result<V, ContainerError> {
        self.meta(key)?
            .parse()
            .or_else(|_| format_err(format!("bad value for {key}")))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), ContainerError> {
        w.write_all(&WEIGHTS_MAGIC)?;
        w.put_u32(WEIGHTS_VERSION)?;
        w.put_str(&self.kind)?;
        w.put_u32(self.meta.len() as u32)?;
        for (k, v) in &self.meta {
            w.put_str(k)?;
            w.put_str(v)?;
        }
        w.put_u32(self.blocks.len() as u32)?;
        for b in &self.blocks {
            w.put_str(&b.name)?;
            w.put_u8(b.dtype as u8)?;
            w.put_u8(b.shape.len() as u8)?;
            for &d in &b.shape {
                w.put_u64(d as u64)?;
            }
            w.put_f64s(&b.data)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, ContainerError> {
        if r.get_array::<4>()? != WEIGHTS_MAGIC {
            return format_err("not a weight file (bad magic)");
        }
        let version = r.get_u32()?;
        if version != WEIGHTS_VERSION {
            return format_err(format!("unsupported weight file version {version}"));
        }
        let kind = r.get_str()?;
        let n_meta = r.get_u32()?;
        let mut meta = Vec::new();
        for _ in 0..n_meta {
            meta.push((r.get_str()?, r.get_str()?));
        }
        let n_blocks = r.get_u32()?;
        let mut blocks = Vec::new();
        for _ in 0..n_blocks {
            let name = r.get_str()?;
            let dtype = match r.get_u8()? {
                0 => DType::Real,
                1 => DType::Complex,
                t => return format_err(format!("unknown dtype tag {t}")),
            };
            let ndim = r.get_u8()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.get_u64()? as usize);
            }
            let n = shape.iter().product::<usize>() * if dtype == DType::Complex { 2 } else { 1 };
            if n > 1 << 32 {
                return format_err("block too large");
            }
            let data = r.get_f64s(n)?;
            blocks.push(Block {
                name,
                dtype,
                shape,
                data,
            });
        }
        Ok(Self { kind, meta, blocks })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ContainerError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ContainerError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut c = Container::new("fno").with_meta("n_v", 4);
        c.push(Block::real("P", &[2, 1], vec![1.5, -0.25]));
        c.push(Block::complex("R", &[1, 1, 1], vec![0.5, -3.0]));
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        let back = Container::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.meta_parse::<usize>("n_v").unwrap(), 4);
        assert!(back.block("Q").is_err());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(Container::read_from(&mut &b"XXXX\x01\0\0\0"[..]).is_err());
        let mut c = Container::new("x");
        c.push(Block::real("a", &[3], vec![1.0, 2.0, 3.0]));
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 4);
        assert!(Container::read_from(&mut buf.as_slice()).is_err());
    }
}
