//! Binary checkpoint format.
//!
//! ```text
//! "CSSMCK01"            8 bytes
//! version               u32
//! header length         u64, then that many bytes of UTF-8 JSON:
//!                       {config, hyper, history, epochs_done, best_epoch}
//! best_val_acc          f64
//! optimizer step        u64
//! tensor count          u32
//! per tensor            u32 name length, name, u32 rank, rank x u64 dims
//! value blocks          current params, best params, first moments,
//!                       second moments; each the concatenation of all
//!                       tensors in order as f64
//! ```
//!
//! Integers and floats are little-endian; floats are raw IEEE-754 bits.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::OptimState;
use super::train::{Checkpoint, EpochRecord, TrainHyper};
use crate::cortical_blocks::{ModelConfig, ModelParams, ParamStore};
use crate::error::{CssmError, Result};
use crate::signal_io::write_atomic;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CSSMCK01";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    hyper: TrainHyper,
    history: Vec<EpochRecord>,
    epochs_done: usize,
    best_epoch: usize,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let header = Header {
        config: ck.config.clone(),
        hyper: ck.hyper.clone(),
        history: ck.history.clone(),
        epochs_done: ck.epochs_done,
        best_epoch: ck.best_epoch,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&ck.best_val_acc.to_le_bytes());
    out.extend_from_slice(&ck.optim.step.to_le_bytes());
    let store = &ck.params.store;
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.names().iter().zip(store.tensors()) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    let mut put = |vals: &[f64]| {
        for v in vals {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    for t in store.tensors() {
        put(t.data());
    }
    for t in ck.best_params.store.tensors() {
        put(t.data());
    }
    for m in &ck.optim.m {
        put(m);
    }
    for v in &ck.optim.v {
        put(v);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(CssmError::format(
                self.pos as u64,
                format!("truncated while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| CssmError::format(self.pos as u64, "size overflow"))?,
            what,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(CssmError::format(0, "not a checkpoint file (bad magic)"));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CssmError::format(
            8,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let hlen = r.u64("header length")? as usize;
    let hpos = r.pos as u64;
    let header: Header = serde_json::from_slice(r.take(hlen, "header")?)
        .map_err(|e| CssmError::format(hpos, format!("invalid header: {e}")))?;
    let best_val_acc = f64::from_le_bytes(r.take(8, "best accuracy")?.try_into().unwrap());
    let step = r.u64("optimizer step")?;
    let n = r.u32("tensor count")? as usize;
    let mut names = Vec::with_capacity(n);
    let mut shapes = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.u32("name length")? as usize;
        let at = r.pos as u64;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| CssmError::format(at, "parameter name is not UTF-8"))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64("dimension")? as usize);
        }
        names.push(name);
        shapes.push(shape);
    }
    let mut block = |what: &str| -> Result<Vec<Vec<f64>>> {
        shapes
            .iter()
            .map(|s| r.f64s(s.iter().product(), what))
            .collect()
    };
    let cur = block("parameters")?;
    let best = block("best parameters")?;
    let m = block("first moments")?;
    let v = block("second moments")?;
    if r.pos != bytes.len() {
        return Err(CssmError::format(
            r.pos as u64,
            "trailing bytes after checkpoint",
        ));
    }
    let mk_store = |vals: Vec<Vec<f64>>| {
        let mut st = ParamStore::new();
        for ((name, shape), data) in names.iter().zip(&shapes).zip(vals) {
            st.push(name.clone(), Tensor::from_vec(shape, data));
        }
        st
    };
    let params = ModelParams::from_store(&header.config, mk_store(cur))?;
    let best_params = ModelParams::from_store(&header.config, mk_store(best))?;
    Ok(Checkpoint {
        optim: OptimState {
            cfg: header.hyper.optimizer,
            step,
            m,
            v,
        },
        config: header.config,
        hyper: header.hyper,
        epochs_done: header.epochs_done,
        best_val_acc,
        best_epoch: header.best_epoch,
        params,
        best_params,
        history: header.history,
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ck))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| CssmError::io(path, e))?;
    decode_checkpoint(&bytes)
}
