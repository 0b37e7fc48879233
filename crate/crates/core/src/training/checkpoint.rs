//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "QINRCKPT" | u32 version | u64 body length | body | sha256(preceding bytes)
//! body = u64 json length | json metadata | u32 tensor count | tensors
//! tensor = u32 name length | name | u32 rank | u64 dims… | f64 values…
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AdamState, Seeds, TrainRecord, TrainSettings, Trainer};
use crate::error::{Error, Result};
use crate::losses::LossSchedule;
use crate::models::{Model, ModelConfig};
use crate::neural::Module;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"QINRCKPT";
const HEADER: usize = 8 + 4 + 8;
const DIGEST: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub settings: TrainSettings,
    pub schedule: LossSchedule,
    pub seeds: Seeds,
    pub epoch: u32,
    pub adam_step: u64,
    pub records: Vec<TrainRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Everything needed to resume training or rebuild the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<NamedTensor>,
}

const ADAM_M: &str = "adam.m.";
const ADAM_V: &str = "adam.v.";

impl Checkpoint {
    pub fn capture(t: &Trainer) -> Self {
        let mut tensors = Vec::new();
        t.model.visit("", &mut |name, x| {
            tensors.push(NamedTensor { name, shape: x.shape().to_vec(), values: x.values().to_vec() });
        });
        for (name, (m, v)) in &t.adam.moments {
            for (prefix, vals) in [(ADAM_M, m), (ADAM_V, v)] {
                tensors.push(NamedTensor {
                    name: format!("{prefix}{name}"),
                    shape: vec![vals.len()],
                    values: vals.clone(),
                });
            }
        }
        Self {
            meta: CheckpointMeta {
                model: t.model.config.clone(),
                settings: t.settings.clone(),
                schedule: t.schedule.clone(),
                seeds: t.seeds,
                epoch: t.epoch,
                adam_step: t.adam.step,
                records: t.records.clone(),
            },
            tensors,
        }
    }

    /// Rebuilds the model with the stored weights and running statistics.
    pub fn model(&self) -> Result<Model> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut model = Model::new(self.meta.model.clone(), &mut rng)?;
        let mut missing = None;
        let mut mismatch = None;
        model.visit_mut("", &mut |name, t| {
            match self.tensors.iter().find(|n| n.name == name) {
                None => missing = missing.take().or(Some(name)),
                Some(n) if n.shape != t.shape() => mismatch = mismatch.take().or(Some(name)),
                Some(n) => t.values_mut().copy_from_slice(&n.values),
            }
        });
        if let Some(name) = missing {
            return Err(Error::CheckpointCorrupted(format!("tensor {name} missing")));
        }
        if let Some(name) = mismatch {
            return Err(Error::CheckpointCorrupted(format!("tensor {name} has the wrong shape")));
        }
        Ok(model)
    }

    /// Rebuilds the full training state.
    pub fn into_trainer(self) -> Result<Trainer> {
        let model = self.model()?;
        let mut adam = AdamState { step: self.meta.adam_step, ..AdamState::default() };
        for t in &self.tensors {
            if let Some(name) = t.name.strip_prefix(ADAM_M) {
                let v = self
                    .tensors
                    .iter()
                    .find(|x| x.name.strip_prefix(ADAM_V) == Some(name))
                    .ok_or_else(|| Error::CheckpointCorrupted(format!("second moment of {name} missing")))?;
                adam.moments.insert(name.to_string(), (t.values.clone(), v.values.clone()));
            }
        }
        Ok(Trainer {
            model,
            adam,
            settings: self.meta.settings,
            schedule: self.meta.schedule,
            seeds: self.meta.seeds,
            epoch: self.meta.epoch,
            records: self.meta.records,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let json = serde_json::to_vec(&self.meta).map_err(|e| Error::Config(e.to_string()))?;
        let mut body = Vec::new();
        body.extend_from_slice(&(json.len() as u64).to_le_bytes());
        body.extend_from_slice(&json);
        body.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            body.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            body.extend_from_slice(t.name.as_bytes());
            body.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for d in &t.shape {
                body.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in &t.values {
                body.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(HEADER + body.len() + DIGEST);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(body.len() as u64).to_le_bytes());
        out.extend_from_slice(&body);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER {
            return Err(Error::CheckpointTruncated(format!("{} bytes, header needs {HEADER}", bytes.len())));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::CheckpointCorrupted("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion { found: version, expected: CHECKPOINT_VERSION });
        }
        let body_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let want = HEADER.saturating_add(body_len).saturating_add(DIGEST);
        if bytes.len() < want {
            return Err(Error::CheckpointTruncated(format!("{} of {want} bytes present", bytes.len())));
        }
        if bytes.len() > want {
            return Err(Error::CheckpointCorrupted(format!("{} trailing bytes", bytes.len() - want)));
        }
        let (signed, digest) = bytes.split_at(HEADER + body_len);
        if Sha256::digest(signed).as_slice() != digest {
            return Err(Error::CheckpointCorrupted("checksum mismatch".into()));
        }
        let mut r = Reader { bytes: &signed[HEADER..], pos: 0 };
        let json_len = r.u64()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(json_len)?)
            .map_err(|e| Error::CheckpointCorrupted(format!("metadata: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::CheckpointCorrupted("tensor name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::CheckpointCorrupted("size overflow".into()))?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(NamedTensor { name, shape, values });
        }
        Ok(Self { meta, tensors })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::CheckpointCorrupted("record runs past the end of the body".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Writes to a temporary sibling file and renames it into place.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = ckpt.to_bytes()?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
