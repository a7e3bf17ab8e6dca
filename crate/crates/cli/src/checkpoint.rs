//! Binary containers for model weights and optimizer state.
//!
//! Layout: 8-byte magic, u32 format version, u64 header length, a JSON
//! header, then the blobs. Integers and reals are little-endian.

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use paradox_core::model::{ModelConfig, Paradox};
use paradox_core::numerics::{AdamConfig, AdamState, ParamStore};
use paradox_core::train::TrainState;
use serde::{Deserialize, Serialize};

const MODEL_MAGIC: &[u8; 8] = b"PRDXCKPT";
const STATE_MAGIC: &[u8; 8] = b"PRDXSTAT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    config: ModelConfig,
    /// Training user ids; position `i` is user row `i`.
    users: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct StateHeader {
    epochs_done: usize,
    /// Bit pattern, so that infinity survives JSON.
    best_val_loss_bits: u64,
    best_epoch: usize,
    bad_epochs: usize,
    adam: AdamConfig,
    adam_step: u64,
}

/// A trained model with the user table it was trained on.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Paradox,
    pub users: Vec<String>,
}

impl Checkpoint {
    pub fn user_ref(&self, user_id: &str) -> paradox_core::model::UserRef {
        crate::data::user_ref(&self.users, user_id)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(magic: &[u8; 8], header: &impl Serialize) -> Result<Self> {
        let json = serde_json::to_vec(header)?;
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(magic);
        w.u32(VERSION);
        w.u64(json.len() as u64);
        w.0.extend_from_slice(&json);
        Ok(w)
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn reals(&mut self, values: &[f64]) {
        self.0.reserve(values.len() * 8);
        for v in values {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    /// Checks magic and version and returns the decoded header.
    fn open<H: for<'de> Deserialize<'de>>(buf: &'a [u8], path: &'a Path, magic: &[u8; 8]) -> Result<(Self, H)> {
        let mut r = Reader { buf, pos: 0, path };
        ensure!(r.take(8)? == magic, "{} is not a {} file", path.display(), String::from_utf8_lossy(magic));
        let version = r.u32()?;
        ensure!(version == VERSION, "{}: unsupported format version {version}", path.display());
        let len = r.len()?;
        let header = serde_json::from_slice(r.take(len)?)
            .with_context(|| format!("{}: malformed header", path.display()))?;
        Ok((r, header))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            bail!("{} is truncated", self.path.display());
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into()?))
    }

    fn len(&mut self) -> Result<usize> {
        Ok(usize::try_from(self.u64()?)?)
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).context("blob size overflow")?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        ensure!(self.pos == self.buf.len(), "{} has trailing bytes", self.path.display());
        Ok(())
    }
}

pub fn save_checkpoint(path: &Path, model: &Paradox, users: &[String]) -> Result<()> {
    let header = ModelHeader {
        config: model.config().clone(),
        users: users.to_vec(),
    };
    let mut w = Writer::new(MODEL_MAGIC, &header)?;
    w.u32(model.params.len() as u32);
    for (name, t) in model.params.iter() {
        w.u32(name.len() as u32);
        w.0.extend_from_slice(name.as_bytes());
        w.u32(t.shape().len() as u32);
        for &d in t.shape() {
            w.u64(d as u64);
        }
        w.reals(t.values());
    }
    write_atomic(path, &w.0)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = fs::read(path).with_context(|| format!("cannot read checkpoint {}", path.display()))?;
    let (mut r, header): (_, ModelHeader) = Reader::open(&buf, path, MODEL_MAGIC)?;
    let count = r.u32()? as usize;
    let mut blobs = Vec::with_capacity(count);
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(n)?)
            .with_context(|| format!("{}: parameter name is not UTF-8", path.display()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.len()?);
        }
        let values = r.reals(shape.iter().product())?;
        blobs.push((name, shape, values));
    }
    r.finish()?;
    ensure!(
        header.users.len() == header.config.n_users,
        "{}: {} user ids for {} user rows",
        path.display(),
        header.users.len(),
        header.config.n_users
    );
    let model = Paradox::from_blobs(
        header.config,
        blobs.iter().map(|(n, s, v)| (n.as_str(), s.as_slice(), v.clone())),
    )
    .with_context(|| format!("checkpoint {}", path.display()))?;
    Ok(Checkpoint {
        model,
        users: header.users,
    })
}

/// Loads a checkpoint and rejects it unless its ablation switches match
/// `requested`.
pub fn load_compatible(path: &Path, requested: &ModelConfig) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    ck.model
        .config()
        .check_same_ablation(requested)
        .with_context(|| format!("checkpoint {} does not match the configuration", path.display()))?;
    Ok(ck)
}

pub fn save_train_state(path: &Path, state: &TrainState) -> Result<()> {
    let header = StateHeader {
        epochs_done: state.epochs_done,
        best_val_loss_bits: state.best_val_loss.to_bits(),
        best_epoch: state.best_epoch,
        bad_epochs: state.bad_epochs,
        adam: state.adam.config,
        adam_step: state.adam.step,
    };
    let mut w = Writer::new(STATE_MAGIC, &header)?;
    w.u32(state.adam.m.len() as u32);
    for (m, v) in state.adam.m.iter().zip(&state.adam.v) {
        w.u64(m.len() as u64);
        w.reals(m);
        w.reals(v);
    }
    write_atomic(path, &w.0)
}

/// Reads optimizer state; moment sizes must match `params`.
pub fn load_train_state(path: &Path, params: &ParamStore) -> Result<TrainState> {
    let buf = fs::read(path).with_context(|| format!("cannot read training state {}", path.display()))?;
    let (mut r, h): (_, StateHeader) = Reader::open(&buf, path, STATE_MAGIC)?;
    let count = r.u32()? as usize;
    ensure!(
        count == params.len(),
        "{}: state for {count} parameters, model has {}",
        path.display(),
        params.len()
    );
    let (mut m, mut v) = (Vec::with_capacity(count), Vec::with_capacity(count));
    for id in params.ids() {
        let n = r.len()?;
        ensure!(
            n == params.get(id).numel(),
            "{}: moments of `{}` have {n} values",
            path.display(),
            params.name(id)
        );
        m.push(r.reals(n)?);
        v.push(r.reals(n)?);
    }
    r.finish()?;
    Ok(TrainState {
        epochs_done: h.epochs_done,
        best_val_loss: f64::from_bits(h.best_val_loss_bits),
        best_epoch: h.best_epoch,
        bad_epochs: h.bad_epochs,
        adam: AdamState {
            config: h.adam,
            step: h.adam_step,
            m,
            v,
        },
    })
}

/// Write to a sibling temp file, then rename, so an interrupted run never
/// leaves a half-written checkpoint behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))
}
