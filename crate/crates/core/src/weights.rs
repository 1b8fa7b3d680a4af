//! Named tensor storage and the `LYF1` binary container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "LYF1" | u32 version = 1 | u32 tensor_count
//! directory, one entry per tensor:
//!     u16 name_len | name (UTF-8) | u8 dtype (0 = f32) | u8 rank | u32 dims[rank] | u64 byte_offset
//! zero padding up to the next 64-byte file offset
//! payload: contiguous f32 tensors, each starting at a 64-byte aligned offset
//! ```
//!
//! `byte_offset` is relative to the start of the payload region, which
//! itself begins at the first 64-byte boundary after the directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"LYF1";
pub const VERSION: u32 = 1;
pub const ALIGN: usize = 64;
const DTYPE_F32: u8 = 0;

/// A stored tensor of arbitrary rank.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightTensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl WeightTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected = dims.iter().product::<usize>();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(WeightTensor { dims, data })
    }

    pub fn vector(data: Vec<f32>) -> Self {
        WeightTensor {
            dims: vec![data.len()],
            data,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

impl From<Tensor> for WeightTensor {
    fn from(t: Tensor) -> Self {
        WeightTensor {
            dims: t.shape().to_vec(),
            data: t.into_vec(),
        }
    }
}

/// What a parameter tensor is, which decides its initialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorRole {
    ConvWeight { fan_in: usize },
    Bias,
    BnGamma,
    BnBeta,
    BnMean,
    BnVar,
}

impl TensorRole {
    /// Learnable parameters; BN running statistics are buffers.
    pub fn is_parameter(self) -> bool {
        !matches!(self, TensorRole::BnMean | TensorRole::BnVar)
    }
}

/// A tensor a graph expects to find in its weight store.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub role: TensorRole,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoreMeta {
    pub variant: String,
    pub nc: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightStore {
    entries: BTreeMap<String, WeightTensor>,
    /// Not persisted by the container; filled in by `init_weights` or by
    /// the caller after a successful `validate`.
    pub meta: Option<StoreMeta>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: WeightTensor) -> Option<WeightTensor> {
        self.entries.insert(name.into(), t)
    }

    pub fn get(&self, name: &str) -> Option<&WeightTensor> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &WeightTensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    fn lookup(&self, name: &str, dims: &[usize]) -> Result<&WeightTensor> {
        let t = self
            .entries
            .get(name)
            .ok_or_else(|| Error::Load(format!("missing tensor `{name}`")))?;
        if t.dims != dims {
            return Err(Error::Load(format!(
                "tensor `{name}` has shape {:?}, expected {dims:?}",
                t.dims
            )));
        }
        Ok(t)
    }

    /// Fetches a rank-4 tensor with the exact given shape.
    pub fn tensor(&self, name: &str, shape: [usize; 4]) -> Result<Tensor> {
        let t = self.lookup(name, &shape)?;
        Tensor::from_vec(shape, t.data.clone())
    }

    /// Fetches a rank-1 tensor of exactly `len` values.
    pub fn vector(&self, name: &str, len: usize) -> Result<Vec<f32>> {
        Ok(self.lookup(name, &[len])?.data.clone())
    }

    /// Checks the store against the tensors a graph requires. Missing or
    /// mis-shaped tensors are always errors; unexpected extras only when
    /// `strict`.
    pub fn validate(&self, specs: &[TensorSpec], strict: bool) -> Result<()> {
        for spec in specs {
            self.lookup(&spec.name, &spec.dims)?;
        }
        if strict {
            let wanted: std::collections::HashSet<&str> =
                specs.iter().map(|s| s.name.as_str()).collect();
            let extras: Vec<&str> = self
                .names()
                .filter(|n| !wanted.contains(n))
                .collect();
            if !extras.is_empty() {
                return Err(Error::Load(format!(
                    "unexpected tensors in strict mode: {}",
                    extras.join(", ")
                )));
            }
        }
        Ok(())
    }

    /// Deterministic initialization: conv weights uniform in
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases 0, BN `(γ, β, μ, σ²) = (1, 0, 0, 1)`.
    pub fn init(specs: &[TensorSpec], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = WeightStore::new();
        for spec in specs {
            let n = spec.numel();
            let data = match spec.role {
                TensorRole::ConvWeight { fan_in } => {
                    let bound = init_bound(fan_in);
                    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
                }
                TensorRole::Bias | TensorRole::BnBeta | TensorRole::BnMean => vec![0.0; n],
                TensorRole::BnGamma | TensorRole::BnVar => vec![1.0; n],
            };
            store.insert(spec.name.clone(), WeightTensor {
                dims: spec.dims.clone(),
                data,
            });
        }
        store
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut dir = Vec::new();
        let mut offset = 0usize;
        let mut offsets = Vec::with_capacity(self.entries.len());
        for (name, t) in &self.entries {
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::format(format!("tensor name too long: {name}")))?;
            let rank = u8::try_from(t.dims.len())
                .map_err(|_| Error::format(format!("rank too large for `{name}`")))?;
            dir.extend_from_slice(&name_len.to_le_bytes());
            dir.extend_from_slice(name.as_bytes());
            dir.push(DTYPE_F32);
            dir.push(rank);
            for &d in &t.dims {
                let d = u32::try_from(d)
                    .map_err(|_| Error::format(format!("dimension overflow in `{name}`")))?;
                dir.extend_from_slice(&d.to_le_bytes());
            }
            dir.extend_from_slice(&(offset as u64).to_le_bytes());
            offsets.push(offset);
            offset = align_up(offset + t.data.len() * 4);
        }

        let header_len = 12 + dir.len();
        let payload_start = align_up(header_len);
        let mut out = Vec::with_capacity(payload_start + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        out.extend_from_slice(&dir);
        out.resize(payload_start, 0);
        for (t, off) in self.entries.values().zip(offsets) {
            out.resize(payload_start + off, 0);
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format("bad magic, expected LYF1"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;

        struct Entry {
            name: String,
            dims: Vec<usize>,
            offset: usize,
            numel: usize,
        }
        let mut dir = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::format("tensor name is not UTF-8"))?
                .to_string();
            let dtype = r.u8()?;
            if dtype != DTYPE_F32 {
                return Err(Error::format(format!("`{name}`: unsupported dtype {dtype}")));
            }
            let rank = r.u8()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32()? as usize);
            }
            let offset = usize::try_from(r.u64()?)
                .map_err(|_| Error::format(format!("`{name}`: offset overflow")))?;
            if offset % ALIGN != 0 {
                return Err(Error::format(format!("`{name}`: offset {offset} not 64-byte aligned")));
            }
            let numel = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::format(format!("`{name}`: shape overflow")))?;
            dir.push(Entry {
                name,
                dims,
                offset,
                numel,
            });
        }

        let payload_start = align_up(r.pos);
        let mut store = WeightStore::new();
        for e in dir {
            let start = payload_start
                .checked_add(e.offset)
                .ok_or_else(|| Error::format(format!("`{}`: offset overflow", e.name)))?;
            let len = e
                .numel
                .checked_mul(4)
                .ok_or_else(|| Error::format(format!("`{}`: size overflow", e.name)))?;
            let end = start
                .checked_add(len)
                .ok_or_else(|| Error::format(format!("`{}`: size overflow", e.name)))?;
            if end > bytes.len() {
                return Err(Error::format(format!(
                    "truncated payload for `{}`: needs bytes up to {end}, file has {}",
                    e.name,
                    bytes.len()
                )));
            }
            let data = bytes[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if store.entries.contains_key(&e.name) {
                return Err(Error::format(format!("duplicate tensor name `{}`", e.name)));
            }
            store.entries.insert(e.name, WeightTensor { dims: e.dims, data });
        }
        Ok(store)
    }
}

pub(crate) fn init_bound(fan_in: usize) -> f32 {
    (1.0 / fan_in.max(1) as f64).sqrt() as f32
}

fn align_up(n: usize) -> usize {
    n.div_ceil(ALIGN) * ALIGN
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
            .ok_or_else(|| Error::format(format!("truncated header at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_weights(store: &WeightStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, store.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    WeightStore::from_bytes(&bytes)
}
