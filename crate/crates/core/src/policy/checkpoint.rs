//! Binary checkpoints and the CSV learning curve.
//!
//! Layout (little endian): magic `BFCK`, format version, SHA-256 of the
//! training configuration, RNG position, progress counters, network shape,
//! parameters, then the Adam step count and moment vectors.

use std::fmt::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::net::{Adam, PolicyNet};
use super::ppo::TrainConfig;
use super::CurvePoint;
use crate::error::{Error, Result};
use crate::io::write_atomic;

const MAGIC: &[u8; 4] = b"BFCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainProgress {
    pub env_steps: u64,
    pub updates: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: PolicyNet,
    pub opt: Adam,
    pub progress: TrainProgress,
    pub config_hash: [u8; 32],
    pub rng_seed: [u8; 32],
    pub rng_stream: u64,
    pub rng_word_pos: u128,
}

/// Hash of every setting except the step budget, so a run can be resumed
/// with a larger budget.
pub(crate) fn config_hash(cfg: &TrainConfig) -> [u8; 32] {
    let mut c = cfg.clone();
    c.total_env_steps = 0;
    let json = serde_json::to_vec(&c).expect("config serializes");
    Sha256::digest(&json).into()
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("file is truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().expect("16 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn array32(&mut self) -> Result<[u8; 32]> {
        Ok(self.take(32)?.try_into().expect("32 bytes"))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(16 + self.net.param_count() * 24);
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&self.config_hash);
        b.extend_from_slice(&self.rng_seed);
        b.extend_from_slice(&self.rng_stream.to_le_bytes());
        b.extend_from_slice(&self.rng_word_pos.to_le_bytes());
        b.extend_from_slice(&self.progress.env_steps.to_le_bytes());
        b.extend_from_slice(&self.progress.updates.to_le_bytes());
        b.extend_from_slice(&(self.net.input_size() as u64).to_le_bytes());
        b.extend_from_slice(&(self.net.hidden().len() as u64).to_le_bytes());
        for &h in self.net.hidden() {
            b.extend_from_slice(&(h as u64).to_le_bytes());
        }
        b.extend_from_slice(&(self.net.action_count() as u64).to_le_bytes());
        b.extend_from_slice(&(self.net.param_count() as u64).to_le_bytes());
        let opt = &self.opt;
        for v in self.net.params() {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for v in [opt.lr, opt.beta1, opt.beta2, opt.eps] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&opt.t.to_le_bytes());
        for v in opt.m.iter().chain(&opt.v) {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let config_hash = r.array32()?;
        let rng_seed = r.array32()?;
        let rng_stream = r.u64()?;
        let rng_word_pos = r.u128()?;
        let progress = TrainProgress {
            env_steps: r.u64()?,
            updates: r.u64()?,
        };
        let input = r.u64()? as usize;
        let layers = r.u64()? as usize;
        if layers == 0 || layers > 64 {
            return Err(Error::Checkpoint(format!("implausible layer count {layers}")));
        }
        let hidden: Vec<usize> = (0..layers).map(|_| r.u64().map(|v| v as usize)).collect::<Result<_>>()?;
        let actions = r.u64()? as usize;
        let n = r.u64()? as usize;
        if n > buf.len() / 8 {
            return Err(Error::Checkpoint("parameter count exceeds file size".into()));
        }
        let params = r.f64s(n)?;
        let net = PolicyNet::from_parts(input, &hidden, actions, params)?;
        let (lr, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let t = r.u64()?;
        let m = r.f64s(n)?;
        let v = r.f64s(n)?;
        if r.pos != buf.len() {
            return Err(Error::Checkpoint("trailing bytes after optimizer state".into()));
        }
        Ok(Self {
            net,
            opt: Adam {
                lr,
                beta1,
                beta2,
                eps,
                t,
                m,
                v,
            },
            progress,
            config_hash,
            rng_seed,
            rng_stream,
            rng_word_pos,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    write_atomic(path, &ck.to_bytes())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

pub const CURVE_HEADER: &str = "update,env_steps,mean_final_scom,mean_reward";

/// Curve rows without the header, one per line.
pub fn curve_csv_rows(curve: &[CurvePoint]) -> String {
    let mut out = String::new();
    for p in curve {
        writeln!(
            out,
            "{},{},{},{}",
            p.update, p.env_steps, p.mean_final_scom, p.mean_reward
        )
        .expect("string write");
    }
    out
}

/// Writes [`CURVE_HEADER`] followed by one row per point.
pub fn write_curve_csv(path: impl AsRef<Path>, curve: &[CurvePoint]) -> Result<()> {
    let out = format!("{CURVE_HEADER}\n{}", curve_csv_rows(curve));
    write_atomic(path, out.as_bytes())
}
