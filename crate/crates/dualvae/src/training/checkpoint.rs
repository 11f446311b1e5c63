//! Versioned checkpoint container: configuration, every named parameter
//! tensor (IEEE-754 32-bit little-endian), optimizer state, and the RNG
//! bookkeeping (master seed + next step) that makes resumption bit-exact.
//!
//! Layout: magic "SVAECKPT", version u32, meta JSON (u32 length prefix),
//! parameter count u32, then per parameter: name (u16 length prefix), rank
//! u8, extents u32 each, values f32 LE. After the parameters: Adam step
//! counter u64 and per parameter the m then v arrays, same order and lengths
//! as the parameters.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{ModelConfig, ModelParams, ParamTensor};
use crate::training::{AdamHyper, AdamState, Moments, TrainError, TrainRunConfig};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SVAECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    model: ModelConfig,
    run: TrainRunConfig,
    adam_hyper: AdamHyper,
    master_seed: u64,
    next_step: u64,
}

/// Everything needed to resume a run exactly.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub run: TrainRunConfig,
    pub params: ModelParams<f32>,
    pub adam: AdamState<f32>,
    pub master_seed: u64,
    pub next_step: u64,
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<(), TrainError> {
    let meta = Meta {
        model: ck.model.clone(),
        run: ck.run.clone(),
        adam_hyper: ck.adam.hyper,
        master_seed: ck.master_seed,
        next_step: ck.next_step,
    };
    let meta_json = serde_json::to_vec(&meta)?;

    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta_json);

    buf.extend_from_slice(&(ck.params.len() as u32).to_le_bytes());
    for (name, p) in ck.params.iter() {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.push(p.shape.len() as u8);
        for &d in &p.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &p.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    buf.extend_from_slice(&ck.adam.t.to_le_bytes());
    for (name, _) in ck.params.iter() {
        let mom = ck
            .adam
            .moments(name)
            .ok_or_else(|| TrainError::Config(format!("optimizer state missing for {name}")))?;
        for v in &mom.m {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in &mom.v {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        if self.pos + n > self.bytes.len() {
            return Err(TrainError::Format {
                offset: self.bytes.len() as u64,
                msg: format!("truncated: need {n} bytes at offset {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16, TrainError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u8(&mut self) -> Result<u8, TrainError> {
        Ok(self.take(1)?[0])
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, TrainError> {
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load(path: &Path) -> Result<Checkpoint, TrainError> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    let magic = r.take(8)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(TrainError::Format {
            offset: 0,
            msg: format!("bad magic {magic:?}, expected {CHECKPOINT_MAGIC:?}"),
        });
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(TrainError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let meta_len = r.u32()? as usize;
    let meta: Meta = serde_json::from_slice(r.take(meta_len)?)?;

    let param_count = r.u32()? as usize;
    let mut params: ModelParams<f32> = ModelParams::zeros(&meta.model)?;
    if param_count != params.len() {
        return Err(TrainError::Format {
            offset: r.pos as u64,
            msg: format!(
                "checkpoint holds {param_count} parameters, configuration expects {}",
                params.len()
            ),
        });
    }
    let mut order: Vec<String> = Vec::with_capacity(param_count);
    for _ in 0..param_count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|e| {
            TrainError::Format {
                offset: r.pos as u64,
                msg: format!("parameter name not UTF-8: {e}"),
            }
        })?;
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let values = r.f32s(n)?;
        match params.get(&name) {
            Some(existing) if existing.shape == shape => {}
            _ => {
                return Err(TrainError::Format {
                    offset: r.pos as u64,
                    msg: format!("unexpected parameter {name} with shape {shape:?}"),
                });
            }
        }
        params.insert(name.clone(), ParamTensor { shape, values });
        order.push(name);
    }

    let t = r.u64()?;
    let mut adam = AdamState::new(
        &params,
        meta.adam_hyper,
    );
    adam.t = t;
    for name in &order {
        let n = params.get(name).unwrap().values.len();
        let m = r.f32s(n)?;
        let v = r.f32s(n)?;
        *adam.moments_mut(name).unwrap() = Moments { m, v };
    }
    if r.pos != bytes.len() {
        return Err(TrainError::Format {
            offset: r.pos as u64,
            msg: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }

    Ok(Checkpoint {
        model: meta.model,
        run: meta.run,
        params,
        adam,
        master_seed: meta.master_seed,
        next_step: meta.next_step,
    })
}
