//! Self-describing little-endian weight format.
//!
//! ```text
//! magic "RGTW" | version u32 | arch u8 | seq_len, horizon, hidden, layers, kernel: u32
//! | backbone_len u64 | head_len u64 | backbone f64* | head f64*
//! ```

use std::path::Path;

use super::{Architecture, ModelShape, ModelWeights};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RGTW";
const VERSION: u32 = 1;

impl ModelWeights {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.arch.tag());
        for v in [
            self.shape.seq_len,
            self.shape.horizon,
            self.shape.hidden,
            self.shape.layers,
            self.shape.kernel,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.backbone.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.head.len() as u64).to_le_bytes());
        for v in self.backbone.iter().chain(&self.head) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Reader { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let tag = cur.take(1)?[0];
        let arch = Architecture::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown architecture tag {tag}")))?;
        let shape = ModelShape {
            seq_len: cur.u32()? as usize,
            horizon: cur.u32()? as usize,
            hidden: cur.u32()? as usize,
            layers: cur.u32()? as usize,
            kernel: cur.u32()? as usize,
        };
        let nb = cur.u64()? as usize;
        let nh = cur.u64()? as usize;
        if (nb, nh) != ModelWeights::expected_lengths(arch, &shape) {
            return Err(Error::Format("parameter counts do not match shape".into()));
        }
        let backbone = (0..nb).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let head = (0..nh).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        if cur.pos != bytes.len() {
            return Err(Error::Format("trailing bytes".into()));
        }
        Ok(ModelWeights {
            arch,
            shape,
            backbone,
            head,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("truncated weight file".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_weights(weights: &ModelWeights, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, weights.to_bytes())?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights> {
    ModelWeights::from_bytes(&std::fs::read(path)?)
}
