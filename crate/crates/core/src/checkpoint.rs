//! Binary checkpoint container.
//!
//! Layout (little endian):
//!
//! ```text
//! "CLIC"                      magic
//! u32                         format version
//! u32 + bytes                 UTF-8 metadata (`key = value` lines)
//! u32                         tensor count
//! per tensor:
//!   u32 + bytes               name
//!   u32                       rank
//!   u32 * rank                dims
//!   f32 * prod(dims)          payload
//! ```

use crate::encoder::{Architecture, EncoderState};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::trainer::finetune::FineTuneHead;

pub const MAGIC: &[u8; 4] = b"CLIC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    /// Ordered `key = value` pairs.
    pub metadata: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Tensors whose names start with `prefix`, prefix stripped, in file order.
    pub fn with_prefix(&self, prefix: &str) -> Vec<(&str, &Tensor)> {
        self.tensors
            .iter()
            .filter_map(|(n, t)| n.strip_prefix(prefix).map(|rest| (rest, t)))
            .collect()
    }

    fn set_meta(&mut self, key: &str, value: String) {
        match self.metadata.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.metadata.push((key.to_string(), value)),
        }
    }

    /// Appends the parameters of `enc` under `prefix` and records its
    /// architecture in the metadata.
    pub fn push_encoder(&mut self, prefix: &str, enc: &EncoderState) {
        let arch = enc.arch();
        let widths: Vec<String> = arch.widths.iter().map(|w| w.to_string()).collect();
        self.set_meta("arch.in_channels", arch.in_channels.to_string());
        self.set_meta("arch.widths", widths.join(","));
        self.set_meta("arch.embed_dim", arch.embed_dim.to_string());
        for (name, t) in enc.param_names().into_iter().zip(enc.params()) {
            self.tensors.push((format!("{prefix}{name}"), t.clone()));
        }
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let field = |key: &str| {
            self.meta(key)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks {key}")))
        };
        let num = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad architecture field '{v}'")))
        };
        Ok(Architecture {
            in_channels: num(field("arch.in_channels")?)?,
            widths: field("arch.widths")?.split(',').map(num).collect::<Result<_>>()?,
            embed_dim: num(field("arch.embed_dim")?)?,
        })
    }

    /// Stores a regression head as `head.*` metadata. Values are written
    /// in shortest round-trip form so reloading is exact.
    pub fn set_head(&mut self, head: &FineTuneHead) {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        self.set_meta("head.bias", head.bias.to_string());
        self.set_meta("head.weight", join(&head.weight));
        self.set_meta("head.mean", join(&head.mean));
        self.set_meta("head.scale", join(&head.scale));
    }

    /// Head saved by [`Checkpoint::set_head`], if any.
    pub fn head(&self) -> Result<Option<FineTuneHead>> {
        let Some(bias) = self.meta("head.bias") else {
            return Ok(None);
        };
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad head value '{v}'")))
        };
        let list = |key: &str| -> Result<Vec<f64>> {
            let v = self
                .meta(key)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks {key}")))?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(num).collect()
        };
        let head = FineTuneHead {
            weight: list("head.weight")?,
            bias: num(bias)?,
            mean: list("head.mean")?,
            scale: list("head.scale")?,
        };
        if head.mean.len() != head.dim() || head.scale.len() != head.dim() {
            return Err(Error::Format("head vectors differ in length".into()));
        }
        Ok(Some(head))
    }

    /// Encoder stored under `prefix` by [`Checkpoint::push_encoder`].
    pub fn encoder(&self, prefix: &str) -> Result<EncoderState> {
        let shell = EncoderState::zeros(self.architecture()?)?;
        let params = shell
            .param_names()
            .iter()
            .map(|n| {
                self.tensor(&format!("{prefix}{n}"))
                    .cloned()
                    .ok_or_else(|| Error::Format(format!("checkpoint lacks {prefix}{n}")))
            })
            .collect::<Result<Vec<_>>>()?;
        shell.with_params(params)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut meta = String::new();
        for (k, v) in &self.metadata {
            if k.contains(['\n', '=']) || v.contains('\n') {
                return Err(Error::Format(format!("metadata entry '{k}' is not line safe")));
            }
            meta.push_str(&format!("{k} = {v}\n"));
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_bytes(&mut out, meta.as_bytes())?;
        put_u32(&mut out, self.tensors.len())?;
        for (name, t) in &self.tensors {
            put_bytes(&mut out, name.as_bytes())?;
            put_u32(&mut out, t.rank())?;
            for &d in t.shape() {
                put_u32(&mut out, d)?;
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("missing CLIC magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let meta = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| Error::Format("metadata is not UTF-8".into()))?;
        let metadata = meta
            .lines()
            .map(|line| {
                line.split_once(" = ")
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::Format(format!("bad metadata line '{line}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let payload = r.take(numel.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
            let data = payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { metadata, tensors })
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} overflows u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) -> Result<()> {
    put_u32(out, b.len())?;
    out.extend_from_slice(b);
    Ok(())
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
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
