use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::Result;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CSIK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: u64,
    pub val_loss: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Serialized weights and batch-norm statistics for one model or autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec_hash: [u8; 32],
    pub meta: CheckpointMeta,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    /// Layout: magic, version, spec hash, epoch u64, val loss f64, seed u64,
    /// array count u32, then per array: name, rank u32, dims u64, values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.bytes(&self.spec_hash);
        w.u64(self.meta.epoch);
        w.f64(self.meta.val_loss);
        w.u64(self.meta.seed);
        w.u32(self.arrays.len() as u32);
        for a in &self.arrays {
            w.str(&a.name);
            w.u32(a.shape.len() as u32);
            for &d in &a.shape {
                w.u64(d as u64);
            }
            w.f64s(&a.data);
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(data, path);
        r.expect_magic(CHECKPOINT_MAGIC)?;
        r.expect_version(CHECKPOINT_VERSION)?;
        let spec_hash: [u8; 32] = r.take(32)?.try_into().expect("took 32 bytes");
        let meta = CheckpointMeta {
            epoch: r.u64()?,
            val_loss: r.f64()?,
            seed: r.u64()?,
        };
        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name = r.str()?;
            let rank = r.u32()? as usize;
            if rank > 8 {
                return Err(r.err(format!("array {name} has implausible rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| r.err(format!("array {name} size overflows")))?;
            let data = r.f64s(n)?;
            arrays.push(NamedArray { name, shape, data });
        }
        r.finish()?;
        Ok(Self {
            spec_hash,
            meta,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?, path)
    }
}
