//! Checkpoint container. All integers and floats are little-endian.
//!
//! ```text
//! magic    8 bytes   "HODGENET"
//! version  u32       1
//! hash     32 bytes  SHA-256 of the task and model sections
//! config   u32 byte length, then the run configuration as UTF-8 TOML,
//!          with the paths section left empty
//! step     u64       optimizer steps taken
//! epoch    u64       epochs completed
//! count    u32       number of tensors
//! tensor   u16 name length, UTF-8 name, u32 rank, rank × u64 dims,
//!          then the row-major f64 payload
//! ```
//!
//! Tensors, for every network `net` in `f g gbar h o` order:
//! `net.params`, `net.bn<l>.mean` and `net.bn<l>.var` for each hidden layer
//! `l`, `adam.m.net` and `adam.v.net`.

use std::path::Path;

use hodgenet_core::model::HodgeNet;
use thiserror::Error;

use crate::config::{ConfigError, PathsSection, RunConfig};
use crate::io::{write_file, IoError};

pub const MAGIC: &[u8; 8] = b"HODGENET";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint: unsupported version {0}")]
    Version(u32),
    #[error("checkpoint: {0}")]
    Config(#[from] ConfigError),
    #[error("checkpoint: model hash does not match the stored configuration")]
    Hash,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub epoch: u64,
    pub net: HodgeNet,
}

fn tensors(net: &HodgeNet) -> Vec<Tensor> {
    let mut out = Vec::new();
    for (name, mlp) in &net.store.networks {
        out.push(Tensor { name: format!("{name}.params"), shape: vec![mlp.num_parameters()], data: mlp.params().to_vec() });
        for (l, (m, v)) in mlp.running_mean().iter().zip(mlp.running_var()).enumerate() {
            out.push(Tensor { name: format!("{name}.bn{l}.mean"), shape: vec![m.len()], data: m.clone() });
            out.push(Tensor { name: format!("{name}.bn{l}.var"), shape: vec![v.len()], data: v.clone() });
        }
    }
    let (m, v) = net.store.optimizer.moments();
    for (i, (name, _)) in net.store.networks.iter().enumerate() {
        out.push(Tensor { name: format!("adam.m.{name}"), shape: vec![m[i].len()], data: m[i].clone() });
        out.push(Tensor { name: format!("adam.v.{name}"), shape: vec![v[i].len()], data: v[i].clone() });
    }
    out
}

pub fn encode(cfg: &RunConfig, net: &HodgeNet, epoch: u64) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.extend_from_slice(&cfg.model_hash());
    let text = RunConfig { paths: PathsSection::default(), ..cfg.clone() }.to_toml();
    b.extend_from_slice(&(text.len() as u32).to_le_bytes());
    b.extend_from_slice(text.as_bytes());
    b.extend_from_slice(&net.store.optimizer.step_count().to_le_bytes());
    b.extend_from_slice(&epoch.to_le_bytes());
    let ts = tensors(net);
    b.extend_from_slice(&(ts.len() as u32).to_le_bytes());
    for t in &ts {
        b.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        b.extend_from_slice(t.name.as_bytes());
        b.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            b.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in &t.data {
            b.extend_from_slice(&x.to_le_bytes());
        }
    }
    b
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| CheckpointError::Corrupt("truncated file".into()))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn utf8(&mut self, n: usize) -> Result<&'a str, CheckpointError> {
        std::str::from_utf8(self.take(n)?).map_err(|_| CheckpointError::Corrupt("invalid UTF-8".into()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { buf: bytes, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(CheckpointError::Corrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let hash: [u8; 32] = r.array()?;
    let len = r.u32()? as usize;
    let config = RunConfig::from_toml(r.utf8(len)?)?;
    if config.model_hash() != hash {
        return Err(CheckpointError::Hash);
    }
    let step = r.u64()?;
    let epoch = r.u64()?;
    let count = r.u32()? as usize;
    let mut stored = std::collections::HashMap::with_capacity(count);
    for _ in 0..count {
        let n = r.u16()? as usize;
        let name = r.utf8(n)?.to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let len = shape.iter().product::<usize>();
        let raw = r.take(len.checked_mul(8).ok_or_else(|| CheckpointError::Corrupt("tensor too large".into()))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        stored.insert(name.clone(), Tensor { name, shape, data });
    }
    if r.at != bytes.len() {
        return Err(CheckpointError::Corrupt("trailing bytes".into()));
    }

    let mut net = HodgeNet::new(config.model_config()).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let mut take = |expect: &Tensor| -> Result<Vec<f64>, CheckpointError> {
        let t = stored.remove(&expect.name).ok_or_else(|| CheckpointError::Corrupt(format!("missing tensor {}", expect.name)))?;
        if t.shape != expect.shape {
            return Err(CheckpointError::Corrupt(format!("tensor {} has shape {:?}, expected {:?}", t.name, t.shape, expect.shape)));
        }
        Ok(t.data)
    };
    let layout = tensors(&net);
    let mut it = layout.iter();
    for (_, mlp) in net.store.networks.iter_mut() {
        let p = take(it.next().expect("layout"))?;
        mlp.params_mut().copy_from_slice(&p);
        for l in 0..mlp.running_mean().len() {
            let m = take(it.next().expect("layout"))?;
            let v = take(it.next().expect("layout"))?;
            mlp.set_running_stats(l, &m, &v).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        }
    }
    let mut ms = Vec::new();
    let mut vs = Vec::new();
    for _ in 0..net.store.networks.len() {
        ms.push(take(it.next().expect("layout"))?);
        vs.push(take(it.next().expect("layout"))?);
    }
    net.store.optimizer.restore(step, ms, vs).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    if let Some(extra) = stored.keys().next() {
        return Err(CheckpointError::Corrupt(format!("unexpected tensor {extra}")));
    }
    Ok(Checkpoint { config, epoch, net })
}

pub fn save(path: &Path, cfg: &RunConfig, net: &HodgeNet, epoch: u64) -> Result<(), CheckpointError> {
    Ok(write_file(path, encode(cfg, net, epoch))?)
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    decode(&bytes)
}
