//! Versioned single-file parameter store.
//!
//! Layout (little endian):
//!
//! ```text
//! b"XTALCKPT"  u32 version
//! u32 len, utf8 model kind
//! u32 len, utf8 JSON architecture config
//! u32 tensor count
//! per tensor: u32 len, utf8 name; u32 ndim; u64 dims[ndim]; f32 data[prod(dims)]
//! ```

use std::fs;
use std::path::Path;

use super::layers::Layer;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"XTALCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config_json: String,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    /// Capture every parameter and buffer of a model in visitation order.
    pub fn capture(kind: &str, config_json: String, model: &mut dyn Layer) -> Self {
        let mut tensors = Vec::new();
        model.visit_params(&mut |p| {
            tensors.push(NamedTensor { name: p.name.clone(), shape: p.shape.clone(), data: p.value.clone() })
        });
        Self { kind: kind.to_string(), config_json, tensors }
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Copy stored tensors into a model by parameter name.
    ///
    /// Every parameter must be present unless `skip` accepts its name;
    /// skipped parameters keep their current (fresh) values. Returns the
    /// number of parameters loaded.
    pub fn load_into(&self, model: &mut dyn Layer, skip: &dyn Fn(&str) -> bool) -> Result<usize> {
        let mut loaded = 0;
        let mut failure = None;
        model.visit_params(&mut |p| {
            if failure.is_some() || skip(&p.name) {
                return;
            }
            match self.get(&p.name) {
                None => failure = Some(format!("layer {} missing from checkpoint", p.name)),
                Some(t) if t.shape != p.shape => {
                    failure = Some(format!("layer {} has shape {:?} in checkpoint but {:?} in model", p.name, t.shape, p.shape))
                }
                Some(t) => {
                    p.value.copy_from_slice(&t.data);
                    loaded += 1;
                }
            }
        });
        match failure {
            Some(msg) => Err(Error::Checkpoint(msg)),
            None => Ok(loaded),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_str(&mut out, &self.kind);
        put_str(&mut out, &self.config_json);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version} (expected {FORMAT_VERSION})")));
        }
        let kind = r.string()?;
        let config_json = r.string()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let raw = r.take(len * 4)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
        }
        Ok(Self { kind, config_json, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Checkpoint("invalid utf-8 string".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            kind: "unet".into(),
            config_json: "{\"depth\":2}".into(),
            tensors: vec![
                NamedTensor { name: "a.weight".into(), shape: vec![2, 3], data: vec![1.0, -2.0, 3.5, 0.0, 1e-8, f32::MAX] },
                NamedTensor { name: "a.bias".into(), shape: vec![2], data: vec![0.25, -0.25] },
            ],
        }
    }

    #[test]
    fn bytes_round_trip() {
        let ck = sample();
        assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap(), ck);
    }

    #[test]
    fn rejects_other_version() {
        let mut bytes = sample().to_bytes();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        let err = Checkpoint::from_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("version 7"), "{err}");
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'Y';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
