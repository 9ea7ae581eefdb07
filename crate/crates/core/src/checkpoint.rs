//! INRCKPT1 checkpoints and the optimizer-state sidecar used to resume.
//!
//! Checkpoint layout (little endian):
//!
//! ```text
//! "INRCKPT1"                      8 bytes
//! version                         u32 (= 1)
//! spatial_dims                    u8
//! latent_dim, hidden_dim, layers  u32 ×3
//! omega0, s0                      f32 ×2
//! for each layer 1..N:            f32: U (row-major m×n), b_u, V, b_v
//! latent section flag             u8 (0 = none, 1 = present)
//! if present:
//!   keying                        u8 (0 = per scan, 1 = per subject)
//!   entry count                   u32
//!   entries (key order):          u32 key length, UTF-8 key, λ × f32
//!   global latent                 λ × f32
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{InrNetwork, NetworkConfig, WireLayer};
use crate::optim::{AdamW, AdamWConfig};
use crate::training::{LatentKeying, LatentTable, TrainState};
use crate::volume::ByteReader;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"INRCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const STATE_MAGIC: &[u8; 8] = b"INRSTAT1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: InrNetwork,
    pub latents: Option<LatentTable>,
}

#[derive(Default)]
struct ByteWriter(Vec<u8>);

impl ByteWriter {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, v: &[f32]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

impl ByteReader<'_> {
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        if self.remaining() < n * 4 {
            return Err(Error::Format(format!("truncated while reading {what}")));
        }
        (0..n).map(|_| self.f32(what)).collect()
    }
    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        if self.remaining() < n * 8 {
            return Err(Error::Format(format!("truncated while reading {what}")));
        }
        (0..n).map(|_| self.f64(what)).collect()
    }
    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Format(format!("{what} is not UTF-8")))
    }
}

pub fn encode_checkpoint(net: &InrNetwork, latents: Option<&LatentTable>) -> Vec<u8> {
    let mut w = ByteWriter::default();
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    let c = net.config();
    w.u8(c.spatial_dims as u8);
    w.u32(c.latent_dim as u32);
    w.u32(c.hidden_dim as u32);
    w.u32(c.layers as u32);
    w.f32s(&[c.omega0, c.s0]);
    for g in net.param_groups() {
        w.f32s(g);
    }
    match latents {
        None => w.u8(0),
        Some(t) => {
            w.u8(1);
            w.u8(match t.keying() {
                LatentKeying::PerScan => 0,
                LatentKeying::PerSubject => 1,
            });
            w.u32(t.len() as u32);
            for (k, v) in t.entries() {
                w.str(k);
                w.f32s(v);
            }
            w.f32s(t.global());
        }
    }
    w.0
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(bytes);
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let config = NetworkConfig {
        spatial_dims: r.u8("spatial dims")? as usize,
        latent_dim: r.u32("latent dim")? as usize,
        hidden_dim: r.u32("hidden dim")? as usize,
        layers: r.u32("layer count")? as usize,
        omega0: r.f32("omega0")?,
        s0: r.f32("s0")?,
    };
    config.validate().map_err(|e| Error::Format(e.to_string()))?;
    let mut layers = Vec::with_capacity(config.layers);
    for (n, m) in config.layer_shapes() {
        layers.push(WireLayer {
            inputs: n,
            outputs: m,
            u_weight: r.f32s(n * m, "parameters")?,
            u_bias: r.f32s(m, "parameters")?,
            v_weight: r.f32s(n * m, "parameters")?,
            v_bias: r.f32s(m, "parameters")?,
        });
    }
    let network = InrNetwork::from_layers(config, layers)?;
    let latents = match r.u8("latent flag")? {
        0 => None,
        1 => {
            let keying = match r.u8("keying")? {
                0 => LatentKeying::PerScan,
                1 => LatentKeying::PerSubject,
                k => return Err(Error::Format(format!("unknown latent keying {k}"))),
            };
            let count = r.u32("entry count")? as usize;
            let mut entries = BTreeMap::new();
            for _ in 0..count {
                let key = r.string("latent key")?;
                let v = r.f32s(config.latent_dim, "latent entry")?;
                entries.insert(key, v);
            }
            let global = r.f32s(config.latent_dim, "global latent")?;
            Some(LatentTable::from_parts(config.latent_dim, keying, entries, global)?)
        }
        f => return Err(Error::Format(format!("bad latent section flag {f}"))),
    };
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes", r.remaining())));
    }
    Ok(Checkpoint { network, latents })
}

pub fn save_checkpoint(net: &InrNetwork, latents: Option<&LatentTable>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(net, latents)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

fn write_adamw(w: &mut ByteWriter, opt: &AdamW) {
    let c = opt.config;
    w.f64s(&[c.lr, c.beta1, c.beta2, c.eps, c.weight_decay]);
    w.u8(opt.decayable as u8);
    w.u64(opt.step_count());
    w.u32(opt.first_moments().len() as u32);
    for (m, v) in opt.first_moments().iter().zip(opt.second_moments()) {
        w.u32(m.len() as u32);
        w.f64s(m);
        w.f64s(v);
    }
}

fn read_adamw(r: &mut ByteReader) -> Result<AdamW> {
    let c = r.f64s(5, "optimizer config")?;
    let config = AdamWConfig {
        lr: c[0],
        beta1: c[1],
        beta2: c[2],
        eps: c[3],
        weight_decay: c[4],
    };
    let decayable = r.u8("decay flag")? != 0;
    let step = r.u64("step")?;
    let groups = r.u32("group count")? as usize;
    let (mut m, mut v) = (Vec::with_capacity(groups), Vec::with_capacity(groups));
    for _ in 0..groups {
        let n = r.u32("group size")? as usize;
        m.push(r.f64s(n, "first moments")?);
        v.push(r.f64s(n, "second moments")?);
    }
    AdamW::from_parts(config, decayable, step, m, v)
}

/// Optimizer state sidecar (`INRSTAT1`), written next to a checkpoint so
/// that training can resume exactly.
pub fn encode_train_state(state: &TrainState) -> Vec<u8> {
    let mut w = ByteWriter::default();
    w.0.extend_from_slice(STATE_MAGIC);
    w.u64(state.iteration);
    write_adamw(&mut w, &state.net_opt);
    write_adamw(&mut w, &state.global_opt);
    w.u32(state.latent_opts.len() as u32);
    for (k, opt) in &state.latent_opts {
        w.str(k);
        write_adamw(&mut w, opt);
    }
    w.0
}

pub fn decode_train_state(bytes: &[u8]) -> Result<TrainState> {
    let mut r = ByteReader::new(bytes);
    if r.take(8, "magic")? != STATE_MAGIC {
        return Err(Error::Format("bad training-state magic".into()));
    }
    let iteration = r.u64("iteration")?;
    let net_opt = read_adamw(&mut r)?;
    let global_opt = read_adamw(&mut r)?;
    let n = r.u32("latent optimizer count")? as usize;
    let mut latent_opts = BTreeMap::new();
    for _ in 0..n {
        let k = r.string("latent key")?;
        latent_opts.insert(k, read_adamw(&mut r)?);
    }
    if r.remaining() != 0 {
        return Err(Error::Format("trailing bytes in training state".into()));
    }
    Ok(TrainState {
        iteration,
        net_opt,
        latent_opts,
        global_opt,
    })
}
