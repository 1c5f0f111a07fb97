//! Versioned container of named `f64` tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "RVLCKPT1"
//! desc_len     u32
//! description  desc_len bytes of UTF-8
//! count        u32
//! count x {
//!     name_len u32, name bytes (UTF-8)
//!     rank     u32
//!     dims     rank x u64
//!     values   prod(dims) x f64
//! }
//! ```
//!
//! The description lists the networks stored in the file as
//! `prefix=spec` entries joined by `;`, for example
//! `actor=28,64,64,16:tanh;critic=44,64,64,1:identity`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Layer, Mlp, MlpSpec};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RVLCKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub description: String,
    pub tensors: Vec<NamedTensor>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| bad(format!("non UTF-8 string: {e}")))
}

fn write_string(w: &mut impl Write, s: &str) -> Result<()> {
    let len = u32::try_from(s.len()).map_err(|_| bad("string too long"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

impl Checkpoint {
    /// Packs networks under their prefixes, tensors named `prefix.layerI.weight|bias`.
    pub fn from_networks(nets: &[(&str, &Mlp)]) -> Self {
        let description = nets.iter().map(|(p, n)| format!("{p}={}", n.spec())).collect::<Vec<_>>().join(";");
        let tensors = nets
            .iter()
            .flat_map(|(prefix, net)| {
                net.named_tensors().map(move |(name, dims, data)| NamedTensor { name: format!("{prefix}.{name}"), dims, data })
            })
            .collect();
        Self { description, tensors }
    }

    pub fn network_prefixes(&self) -> Vec<&str> {
        self.description.split(';').filter_map(|e| e.split_once('=').map(|(p, _)| p)).collect()
    }

    /// Rebuilds the network stored under `prefix`.
    pub fn network(&self, prefix: &str) -> Result<Mlp> {
        let spec: MlpSpec = self
            .description
            .split(';')
            .find_map(|e| e.split_once('=').filter(|(p, _)| *p == prefix).map(|(_, s)| s))
            .ok_or_else(|| bad(format!("no network named {prefix:?}")))?
            .parse()?;
        let tensor = |name: String| {
            self.tensors.iter().find(|t| t.name == name).ok_or_else(|| bad(format!("missing tensor {name}")))
        };
        let mut layers = Vec::new();
        for (i, w) in spec.layer_sizes.windows(2).enumerate() {
            let wt = tensor(format!("{prefix}.layer{i}.weight"))?;
            let bt = tensor(format!("{prefix}.layer{i}.bias"))?;
            if wt.dims != [w[0], w[1]] || bt.dims != [w[1]] {
                return Err(bad(format!("tensor shapes for {prefix}.layer{i} do not match {spec}")));
            }
            let weight = Array2::from_shape_vec((w[0], w[1]), wt.data.clone()).map_err(|e| bad(e.to_string()))?;
            layers.push(Layer { weight, bias: Array1::from(bt.data.clone()) });
        }
        Mlp::from_layers(spec, layers)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        write_string(w, &self.description)?;
        let count = u32::try_from(self.tensors.len()).map_err(|_| bad("too many tensors"))?;
        w.write_all(&count.to_le_bytes())?;
        for t in &self.tensors {
            let expected: usize = t.dims.iter().product();
            if expected != t.data.len() {
                return Err(bad(format!("tensor {} has {} values for dims {:?}", t.name, t.data.len(), t.dims)));
            }
            write_string(w, &t.name)?;
            w.write_all(&(t.dims.len() as u32).to_le_bytes())?;
            for d in &t.dims {
                w.write_all(&(*d as u64).to_le_bytes())?;
            }
            for v in &t.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let description = read_string(r)?;
        let count = read_u32(r)? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = read_string(r)?;
            let rank = read_u32(r)? as usize;
            let dims = (0..rank).map(|_| read_u64(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = dims.iter().product();
            let mut data = Vec::with_capacity(len.min(1 << 24));
            let mut b = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            tensors.push(NamedTensor { name, dims, data });
        }
        Ok(Self { description, tensors })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingCheckpoint(path.to_path_buf()));
        }
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
