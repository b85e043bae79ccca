//! Flat binary parameter container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic      8 bytes  "CFMDCKPT"
//! version    u32      = 1
//! n_meta     u32
//!   key      u32 length + UTF-8 bytes
//!   value    u32 length + UTF-8 bytes
//! n_records  u32
//!   name     u32 length + UTF-8 bytes
//!   ndim     u32
//!   dims     u64 × ndim
//!   data     f64 × prod(dims)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::param::Module;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CFMDCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub records: Vec<Record>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends every parameter of `module`, keeping their names.
    pub fn add_module(&mut self, module: &dyn Module) {
        module.visit(&mut |p| {
            self.records.push(Record {
                name: p.name().to_string(),
                shape: p.shape().to_vec(),
                data: p.value().to_vec(),
            })
        });
    }

    pub fn record(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }

    /// Copies values into `module` by name. Every parameter must be present
    /// with a matching shape.
    pub fn load_into(&self, module: &mut dyn Module) -> Result<()> {
        let index: BTreeMap<&str, &Record> = self.records.iter().map(|r| (r.name.as_str(), r)).collect();
        let mut err = None;
        module.visit_mut(&mut |p| {
            if err.is_some() {
                return;
            }
            match index.get(p.name()) {
                None => err = Some(Error::Format(format!("checkpoint is missing `{}`", p.name()))),
                Some(r) if r.shape != p.shape() => {
                    err = Some(Error::Format(format!(
                        "checkpoint `{}` has shape {:?}, model expects {:?}",
                        p.name(),
                        r.shape,
                        p.shape()
                    )))
                }
                Some(r) => p.value_mut().copy_from_slice(&r.data),
            }
        });
        err.map_or(Ok(()), Err)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let put_str = |out: &mut Vec<u8>, s: &str| {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        };
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            put_str(&mut out, &r.name);
            out.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
            for &d in &r.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &r.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = rd.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut ck = Checkpoint::new();
        for _ in 0..rd.u32()? {
            let k = rd.string()?;
            let v = rd.string()?;
            ck.meta.insert(k, v);
        }
        for _ in 0..rd.u32()? {
            let name = rd.string()?;
            let ndim = rd.u32()? as usize;
            let shape = (0..ndim).map(|_| rd.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let n = n.filter(|&n| n.saturating_mul(8) <= bytes.len()).ok_or_else(|| {
                Error::Format(format!("record `{name}` has implausible shape {shape:?}"))
            })?;
            let data = (0..n).map(|_| rd.f64()).collect::<Result<Vec<_>>>()?;
            ck.records.push(Record { name, shape, data });
        }
        if rd.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after checkpoint records",
                bytes.len() - rd.pos
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("non-UTF-8 name in checkpoint".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Parameter;

    #[test]
    fn bit_exact_roundtrip() {
        let mut ck = Checkpoint::new();
        ck.meta.insert("config".into(), "a = 1".into());
        let params = vec![
            Parameter::new("codec.w", &[2, 3], vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300, -3.5, 0.1]),
            Parameter::new("vq.p", &[1], vec![std::f64::consts::PI]),
        ];
        ck.add_module(&params);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        for (a, b) in back.records.iter().zip(&ck.records) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn load_into_checks_names_and_shapes() {
        let src = vec![Parameter::new("a", &[2], vec![1.0, 2.0])];
        let mut ck = Checkpoint::new();
        ck.add_module(&src);
        let mut dst = vec![Parameter::zeros("a", &[2])];
        ck.load_into(&mut dst).unwrap();
        assert_eq!(dst[0].value(), &[1.0, 2.0]);
        let mut wrong = vec![Parameter::zeros("a", &[3])];
        assert!(ck.load_into(&mut wrong).is_err());
        let mut missing = vec![Parameter::zeros("b", &[2])];
        assert!(ck.load_into(&mut missing).is_err());
    }

    #[test]
    fn corrupt_inputs_are_format_errors() {
        let mut ck = Checkpoint::new();
        ck.add_module(&vec![Parameter::zeros("a", &[4])]);
        let bytes = ck.to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format(_))));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(Checkpoint::from_bytes(&long), Err(Error::Format(_))));
    }
}
