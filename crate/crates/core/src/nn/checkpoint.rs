//! Versioned binary checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "NMSTCKPT"            8-byte magic
//! u32 version           currently 1
//! u32 len, bytes        label (UTF-8), e.g. "ppo-binary"
//! u32 count             metadata entries, each: u32 len + key, u32 len + value
//! u32 count             networks
//!   per network:  u32 len + name, u32 k, k × u64 layer sizes
//! f64 …                 parameters of every network in order; per layer the
//!                       row-major `out × in` weights followed by the biases
//! ```

use std::path::Path;

use super::Mlp;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub const MAGIC: &[u8; 8] = b"NMSTCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub label: String,
    pub meta: Vec<(String, String)>,
    pub nets: Vec<(String, Mlp)>,
}

impl Checkpoint {
    pub fn new(label: impl Into<String>) -> Self {
        Checkpoint {
            label: label.into(),
            meta: Vec::new(),
            nets: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn with_net(mut self, name: impl Into<String>, net: &Mlp) -> Self {
        self.nets.push((name.into(), net.clone()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn net(&self, name: &str) -> Option<&Mlp> {
        self.nets.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.label);
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.nets.len() as u32).to_le_bytes());
        for (name, net) in &self.nets {
            put_str(&mut out, name);
            let sizes = net.layer_sizes();
            out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
            for s in sizes {
                out.extend_from_slice(&(s as u64).to_le_bytes());
            }
        }
        for (_, net) in &self.nets {
            for p in net.flatten() {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let label = r.string()?;
        let meta = (0..r.u32()?)
            .map(|_| Ok((r.string()?, r.string()?)))
            .collect::<Result<Vec<_>>>()?;
        let count = r.u32()? as usize;
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let k = r.u32()? as usize;
            let sizes = (0..k)
                .map(|_| r.u64().map(|s| s as usize))
                .collect::<Result<Vec<_>>>()?;
            shapes.push((name, sizes));
        }
        let mut nets = Vec::with_capacity(count);
        for (name, sizes) in shapes {
            let mut net = Mlp::new(&sizes, &mut rng_from_seed(0))
                .map_err(|e| Error::Checkpoint(format!("network {name}: {e}")))?;
            let params = (0..net.num_params())
                .map(|_| r.f64())
                .collect::<Result<Vec<_>>>()?;
            net.load_flat(&params)?;
            nets.push((name, net));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint { label, meta, nets })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
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
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
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
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("label is not UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut rng = rng_from_seed(1);
        let a = Mlp::new(&[4, 6, 2], &mut rng).unwrap();
        let b = Mlp::new(&[4, 3, 3, 1], &mut rng).unwrap();
        let ck = Checkpoint::new("ppo-binary")
            .with_meta("sensors", 6)
            .with_net("actor", &a)
            .with_net("critic", &b);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.meta("sensors"), Some("6"));
    }

    #[test]
    fn header_is_fixed() {
        let bytes = Checkpoint::new("x").to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let mut rng = rng_from_seed(2);
        let net = Mlp::new(&[2, 2], &mut rng).unwrap();
        let bytes = Checkpoint::new("x").with_net("n", &net).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut longer = bytes;
        longer.push(0);
        assert!(Checkpoint::from_bytes(&longer).is_err());
    }
}
