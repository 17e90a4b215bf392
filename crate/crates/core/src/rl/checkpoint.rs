//! Policy checkpoint container:
//!
//! ```text
//! magic "GRPOLICY" | u32 LE format version | u64 LE header length
//! | JSON header | f32 LE weights, tensors in header order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::nn::{Architecture, PolicyNet};
use super::norm::RunningNorm;
use super::train::Policy;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GRPOLICY";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub algo: String,
    pub case: String,
    pub scenario: String,
    pub seed: u64,
    pub step: usize,
    /// Devices frozen by RID while training, if any.
    #[serde(default)]
    pub frozen: Vec<String>,
    /// Training configuration as run.
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub architecture: Architecture,
    pub tensors: Vec<TensorEntry>,
    pub obs_norm: Option<RunningNorm>,
    pub meta: CheckpointMeta,
    pub producer: String,
}

pub fn write_checkpoint<W: Write>(mut w: W, policy: &Policy, meta: &CheckpointMeta) -> Result<()> {
    let header = CheckpointHeader {
        architecture: policy.net.arch.clone(),
        tensors: policy.net.layout().iter().map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone() }).collect(),
        obs_norm: policy.norm.clone(),
        meta: meta.clone(),
        producer: concat!("gridresponder ", env!("CARGO_PKG_VERSION")).to_string(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut body = Vec::with_capacity(4 * policy.net.params.len());
    for p in &policy.net.params {
        body.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    w.write_all(&body)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(Policy, CheckpointHeader)> {
    let bad = |m: String| Error::Checkpoint(m);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("file too short for a checkpoint".into()))?;
    if &magic != MAGIC {
        return Err(bad("not a policy checkpoint (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|_| bad("truncated header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    let expected = header.architecture.layout();
    if expected.len() != header.tensors.len()
        || expected.iter().zip(&header.tensors).any(|(a, b)| a.name != b.name || a.shape != b.shape)
    {
        return Err(bad("tensor list does not match the declared architecture".into()));
    }
    let n: usize = expected.iter().map(|t| t.len()).sum();
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != 4 * n {
        return Err(bad(format!("expected {} weight bytes, found {}", 4 * n, body.len())));
    }
    let params = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    let net = PolicyNet::from_params(header.architecture.clone(), params)?;
    net.check_finite()?;
    Ok((Policy { net, norm: header.obs_norm.clone() }, header))
}

pub fn save_checkpoint(path: &Path, policy: &Policy, meta: &CheckpointMeta) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(f);
    write_checkpoint(&mut w, policy, meta)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Policy, CheckpointHeader)> {
    let f = std::fs::File::open(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    read_checkpoint(std::io::BufReader::new(f))
}
