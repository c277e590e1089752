//! The `ARIADNE-CKPT v1` checkpoint format:
//!
//! ```text
//! ARIADNE-CKPT v1\n
//! <u32 LE manifest length><manifest JSON>
//! <f32 LE tensor data, in manifest order>
//! ```
//!
//! The manifest lists every tensor's name and shape plus a free-form `meta`
//! object (configs and training state).

use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::matrix::Matrix;
use super::params::ParamSet;

pub const CKPT_MAGIC: &str = "ARIADNE-CKPT v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not an {CKPT_MAGIC} file")]
    BadMagic,
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("missing tensor {0}")]
    Missing(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    tensors: Vec<TensorEntry>,
    meta: serde_json::Value,
}

/// Named tensors plus metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Matrix<f32>)>,
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, m: Matrix<f32>) {
        self.tensors.push((name.into(), m));
    }

    /// Adds every tensor of `params` under `prefix/`.
    pub fn push_params(&mut self, prefix: &str, params: &ParamSet<f32>) {
        for (name, m) in params.names().iter().zip(params.values()) {
            self.push(format!("{prefix}/{name}"), m.clone());
        }
    }

    /// Adds tensors aligned with `params` (e.g. optimizer moments).
    pub fn push_aligned(&mut self, prefix: &str, params: &ParamSet<f32>, values: &[Matrix<f32>]) {
        for (name, m) in params.names().iter().zip(values) {
            self.push(format!("{prefix}/{name}"), m.clone());
        }
    }

    pub fn get(&self, name: &str) -> Option<&Matrix<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Fills tensors aligned with `params` from `prefix/`, refusing on any
    /// missing tensor or shape difference (all differences are reported).
    pub fn load_aligned(
        &self,
        prefix: &str,
        params: &ParamSet<f32>,
        out: &mut [Matrix<f32>],
    ) -> Result<(), CheckpointError> {
        let mut diffs = Vec::new();
        for (name, slot) in params.names().iter().zip(out.iter_mut()) {
            let full = format!("{prefix}/{name}");
            let m = self
                .get(&full)
                .ok_or_else(|| CheckpointError::Missing(full.clone()))?;
            if m.shape() != slot.shape() {
                diffs.push(format!(
                    "{full}: checkpoint {:?} vs model {:?}",
                    m.shape(),
                    slot.shape()
                ));
                continue;
            }
            slot.data_mut().copy_from_slice(m.data());
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(CheckpointError::Shape(diffs.join("; ")))
        }
    }

    pub fn load_params(
        &self,
        prefix: &str,
        params: &mut ParamSet<f32>,
    ) -> Result<(), CheckpointError> {
        let mut vals = params.values().to_vec();
        self.load_aligned(prefix, params, &mut vals)?;
        for (dst, src) in params.values_mut().iter_mut().zip(vals) {
            *dst = src;
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        let manifest = Manifest {
            tensors: self
                .tensors
                .iter()
                .map(|(n, m)| TensorEntry {
                    name: n.clone(),
                    shape: [m.rows(), m.cols()],
                })
                .collect(),
            meta: self.meta.clone(),
        };
        let json =
            serde_json::to_vec(&manifest).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        w.write_all(CKPT_MAGIC.as_bytes())?;
        w.write_all(b"\n")?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, m) in &self.tensors {
            let mut buf = Vec::with_capacity(m.data().len() * 4);
            for v in m.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = vec![0u8; CKPT_MAGIC.len() + 1];
        r.read_exact(&mut magic)
            .map_err(|_| CheckpointError::BadMagic)?;
        if &magic[..CKPT_MAGIC.len()] != CKPT_MAGIC.as_bytes() || magic[CKPT_MAGIC.len()] != b'\n' {
            return Err(CheckpointError::BadMagic);
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let manifest: Manifest =
            serde_json::from_slice(&json).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for e in manifest.tensors {
            let n = e.shape[0] * e.shape[1];
            let mut buf = vec![0u8; n * 4];
            r.read_exact(&mut buf)?;
            let data = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((e.name, Matrix::from_vec(e.shape[0], e.shape[1], data)));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(CheckpointError::Manifest(format!(
                "{} trailing bytes",
                rest.len()
            )));
        }
        Ok(Self {
            meta: manifest.meta,
            tensors,
        })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("tmp");
    {
        let f = std::fs::File::create(&tmp)?;
        let mut w = io::BufWriter::new(f);
        ckpt.write_to(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let f = std::fs::File::open(path)?;
    Checkpoint::read_from(io::BufReader::new(f))
}
