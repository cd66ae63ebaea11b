//! The `RDM1` model container.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "RDM1" | version = 1 | config length | config (UTF-8 key=value lines)
//! tensor count | per tensor: name length, name, rank, dims..., f32 values
//! ```
//!
//! Values are IEEE-754 binary32, row-major. Sizes are checked against the
//! remaining input before anything is allocated.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"RDM1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContainerError {
    #[error("bad magic: expected \"RDM1\"")]
    BadMagic,
    #[error("unsupported container version {0}")]
    Version(u32),
    #[error("truncated file while reading {0}")]
    Truncated(&'static str),
    #[error("invalid UTF-8 in {0}")]
    Utf8(&'static str),
    #[error("trailing bytes after last tensor")]
    TrailingBytes,
    #[error("config: {0}")]
    Config(String),
    #[error("tensor `{name}`: expected shape {expected:?}, found {found:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, values: Vec<f32>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), values.len());
        Tensor {
            name: name.into(),
            dims,
            values,
        }
    }

    pub fn scalar(name: impl Into<String>, value: f32) -> Self {
        Tensor::new(name, vec![1], vec![value])
    }
}

/// Ordered `key=value` configuration carried in the container header.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigBlob {
    entries: Vec<(String, String)>,
}

impl ConfigBlob {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, ContainerError> {
        self.get(key)
            .ok_or_else(|| ContainerError::Config(format!("missing key `{key}`")))
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<T, ContainerError> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| ContainerError::Config(format!("bad value `{raw}` for `{key}`")))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ContainerError> {
        let mut blob = ConfigBlob::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ContainerError::Config(format!("line without `=`: {line}")))?;
            blob.set(k.trim(), v.trim());
        }
        Ok(blob)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub config: ConfigBlob,
    pub tensors: Vec<Tensor>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        let text = self.config.to_text();
        put_u32(&mut out, text.len() as u32);
        out.extend_from_slice(text.as_bytes());
        put_u32(&mut out, self.tensors.len() as u32);
        for t in &self.tensors {
            put_u32(&mut out, t.name.len() as u32);
            out.extend_from_slice(t.name.as_bytes());
            put_u32(&mut out, t.dims.len() as u32);
            for &d in &t.dims {
                put_u32(&mut out, d as u32);
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic").map_err(|_| ContainerError::BadMagic)? != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(ContainerError::Version(version));
        }
        let config_len = r.u32("config length")? as usize;
        let config_text = std::str::from_utf8(r.take(config_len, "config")?)
            .map_err(|_| ContainerError::Utf8("config"))?;
        let config = ConfigBlob::from_text(config_text)?;

        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = r.u32("tensor name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| ContainerError::Utf8("tensor name"))?
                .to_string();
            let rank = r.u32("tensor rank")? as usize;
            if rank.saturating_mul(4) > r.remaining() {
                return Err(ContainerError::Truncated("tensor dims"));
            }
            let dims = (0..rank)
                .map(|_| r.u32("tensor dims").map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let elements = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or(ContainerError::Truncated("tensor values"))?;
            let raw = r.take(
                elements
                    .checked_mul(4)
                    .ok_or(ContainerError::Truncated("tensor values"))?,
                "tensor values",
            )?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(Tensor { name, dims, values });
        }
        if r.remaining() != 0 {
            return Err(ContainerError::TrailingBytes);
        }
        Ok(Container { config, tensors })
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor, ContainerError> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| ContainerError::MissingTensor(name.to_string()))
    }

    /// Fetches a tensor and checks its shape.
    pub fn tensor_with_shape(&self, name: &str, dims: &[usize]) -> Result<&Tensor, ContainerError> {
        let t = self.tensor(name)?;
        if t.dims != dims {
            return Err(ContainerError::Shape {
                name: name.to_string(),
                expected: dims.to_vec(),
                found: t.dims.clone(),
            });
        }
        Ok(t)
    }

    pub fn scalar(&self, name: &str) -> Result<f32, ContainerError> {
        Ok(self.tensor_with_shape(name, &[1])?.values[0])
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ContainerError> {
        if n > self.remaining() {
            return Err(ContainerError::Truncated(what));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, ContainerError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
