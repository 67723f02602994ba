//! Versioned binary checkpoints: a metadata map plus a name -> tensor map.
//!
//! Layout (little endian): `b"VRID"`, `u32` version, `u8` dtype code,
//! `u32` metadata count then `(str key, str value)` entries, `u32` tensor
//! count then `(str name, u32 rank, u64 dims.., values)` entries. Strings
//! are a `u32` byte length followed by UTF-8.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Sequential;
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"VRID";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub metadata: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Default for Checkpoint<T> {
    fn default() -> Self {
        Self {
            metadata: BTreeMap::new(),
            tensors: BTreeMap::new(),
        }
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
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end =
            end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("string is not UTF-8".into()))
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(T::DTYPE.code());
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                match T::DTYPE {
                    DType::F32 => out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
                    DType::F64 => out.extend_from_slice(&v.as_f64().to_le_bytes()),
                }
            }
        }
        out
    }

    /// Decodes a checkpoint, converting stored values to `T` if needed.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}"
            )));
        }
        let code = r.take(1)?[0];
        let dtype = DType::from_code(code)
            .ok_or_else(|| Error::Checkpoint(format!("unknown dtype code {code}")))?;
        let mut ck = Checkpoint::default();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            ck.metadata.insert(k, v);
        }
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let width = dtype.code() as usize;
            let raw = r.take(
                n.checked_mul(width)
                    .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?,
            )?;
            let data = raw
                .chunks_exact(width)
                .map(|c| match dtype {
                    DType::F32 => T::lit(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64),
                    DType::F64 => T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))),
                })
                .collect();
            ck.tensors.insert(name, Tensor::from_vec(&shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Stores every parameter of `net` as `<prefix><layer>.weight|bias`.
    pub fn put_network(&mut self, prefix: &str, net: &Sequential<T>) {
        for (name, t) in net.params() {
            self.tensors.insert(format!("{prefix}{name}"), t.clone());
        }
    }

    /// Loads every parameter of `net` from `<prefix>`-named tensors.
    pub fn get_network(&self, prefix: &str, net: &mut Sequential<T>) -> Result<()> {
        let names: Vec<String> = net
            .params()
            .into_iter()
            .map(|(n, _)| format!("{prefix}{n}"))
            .collect();
        for (name, slot) in names.iter().zip(net.params_mut()) {
            let t = self
                .tensors
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            slot.data_mut().copy_from_slice(t.data());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Layer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64) -> Sequential<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut n = Sequential::new(&[4]);
        n.push("0", Layer::Dense(Dense::new(4, 3, 1.0, &mut rng)));
        n
    }

    #[test]
    fn round_trip_restores_weights() {
        let a = net(1);
        let mut ck = Checkpoint::default();
        ck.metadata.insert("k".into(), "v".into());
        ck.put_network("head.", &a);
        let back = Checkpoint::<f32>::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        let mut b = net(2);
        back.get_network("head.", &mut b).unwrap();
        assert_eq!(a.params(), b.params());
        let wide = Checkpoint::<f64>::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(
            wide.tensors["head.0.weight"].data()[0] as f32,
            a.params()[0].1.data()[0]
        );
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let mut ck = Checkpoint::<f32>::default();
        ck.put_network("", &net(0));
        let bytes = ck.to_bytes();
        assert!(Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::<f32>::from_bytes(b"NOPE").is_err());
        let mut b = net(0);
        assert!(ck.get_network("x.", &mut b).is_err());
    }
}
