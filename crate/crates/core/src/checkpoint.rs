//! Versioned checkpoint container.
//!
//! ```text
//! magic        16 bytes "ZSMSTM-CKPT\0\0\0\0\x01"
//! config       u32 length + key=value text (model configuration)
//! stats        pose, mel, text streams: u32 dim, dim f64 means, dim f64 stds, dim u8 flags
//! params       u32 count, then per tensor: u32 name length, name, u32 rows, u32 cols, f32 values
//! train state  u8 present; if 1: u64 step, f64 best validation loss,
//!              then per tensor f32 first moments followed by f32 second moments
//! ```
//!
//! All integers and floats are little-endian. Parameters and optimizer moments
//! are kept at `f32` precision during training, so the round trip is exact.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::normalize::{FeatureStats, NormalizationStats};
use crate::error::{Error, Result};
use crate::kv;
use crate::model::{Model, ModelConfig};
use crate::params::ParamStore;
use crate::tensor::Matrix;

pub const MAGIC: [u8; 16] = *b"ZSMSTM-CKPT\0\0\0\0\x01";

/// Optimizer state carried across a resume.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSnapshot {
    /// Completed optimizer steps.
    pub step: u64,
    pub best_valid: f64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub stats: NormalizationStats,
    pub params: ParamStore,
    pub train: Option<TrainSnapshot>,
}

impl Checkpoint {
    pub fn model(&self) -> Result<Model> {
        let m = Model::new(self.config.clone())?;
        m.check_params(&self.params)?;
        Ok(m)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        let cfg = kv::render(&self.config.to_kv());
        put_u32(&mut out, cfg.len());
        out.extend_from_slice(cfg.as_bytes());
        for s in [&self.stats.pose, &self.stats.mel, &self.stats.text] {
            put_u32(&mut out, s.dim());
            for v in s.mean.iter().chain(&s.std) {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend(s.degenerate.iter().map(|&d| d as u8));
        }
        put_u32(&mut out, self.params.len());
        for (spec, value) in self.params.specs().iter().zip(self.params.values()) {
            put_u32(&mut out, spec.name.len());
            out.extend_from_slice(spec.name.as_bytes());
            put_u32(&mut out, spec.rows);
            put_u32(&mut out, spec.cols);
            put_f32s(&mut out, value);
        }
        match &self.train {
            None => out.push(0),
            Some(t) => {
                out.push(1);
                out.extend_from_slice(&t.step.to_le_bytes());
                out.extend_from_slice(&t.best_valid.to_le_bytes());
                for m in t.m.iter().chain(&t.v) {
                    put_f32s(&mut out, m);
                }
            }
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(16)? != MAGIC {
            return Err(Error::Checkpoint("bad magic or unsupported version".into()));
        }
        let len = r.u32()?;
        let text = std::str::from_utf8(r.take(len)?).map_err(|_| Error::Checkpoint("config is not UTF-8".into()))?;
        let mut config = ModelConfig::default();
        config.apply_kv(&kv::parse(text)?)?;
        config.validate()?;
        let mut streams = Vec::with_capacity(3);
        for _ in 0..3 {
            let dim = r.u32()?;
            let mean = r.f64s(dim)?;
            let std = r.f64s(dim)?;
            let degenerate = r.take(dim)?.iter().map(|&b| b != 0).collect();
            streams.push(FeatureStats { mean, std, degenerate });
        }
        let text_stats = streams.pop().unwrap();
        let mel = streams.pop().unwrap();
        let pose = streams.pop().unwrap();
        let stats = NormalizationStats { pose, mel, text: text_stats };
        let model = Model::new(config.clone())?;
        let specs = model.specs();
        let count = r.u32()?;
        if count != specs.len() {
            return Err(Error::Checkpoint(format!("{count} tensors, layout has {}", specs.len())));
        }
        let mut values = Vec::with_capacity(count);
        for spec in specs {
            let n = r.u32()?;
            let name = std::str::from_utf8(r.take(n)?).map_err(|_| Error::Checkpoint("bad tensor name".into()))?;
            let (rows, cols) = (r.u32()?, r.u32()?);
            if name != spec.name || rows != spec.rows || cols != spec.cols {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} {rows}x{cols} does not match layout entry {} {}x{}",
                    spec.name, spec.rows, spec.cols
                )));
            }
            values.push(r.f32_matrix(rows, cols)?);
        }
        let params = ParamStore::from_values(specs, values)?;
        let train = match r.take(1)?[0] {
            0 => None,
            1 => {
                let step = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
                let best_valid = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
                let read_all = |r: &mut Reader| -> Result<Vec<Matrix>> {
                    specs.iter().map(|s| r.f32_matrix(s.rows, s.cols)).collect()
                };
                let m = read_all(&mut r)?;
                let v = read_all(&mut r)?;
                Some(TrainSnapshot { step, best_valid, m, v })
            }
            other => return Err(Error::Checkpoint(format!("bad train-state flag {other}"))),
        };
        if r.pos != buf.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Self { config, stats, params, train })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// SHA-256 of the parameter values only.
    pub fn param_digest(&self) -> String {
        self.params.digest()
    }
}

/// SHA-256 hex digest of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(crate::params::hex(&Sha256::digest(&bytes)))
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, m: &Matrix) {
    for v in m.as_slice() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self.take(n * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn f32_matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let data = self
            .take(rows * cols * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(Matrix::from_vec(rows, cols, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_checkpoint(with_state: bool) -> Checkpoint {
        let cfg = ModelConfig::tiny();
        let model = Model::new(cfg.clone()).unwrap();
        let params = model.init_params(3);
        let train = with_state.then(|| {
            let mut m: Vec<Matrix> = params.values().iter().map(|v| v.map(|x| x * 0.5)).collect();
            let mut v: Vec<Matrix> = params.values().iter().map(|v| v.map(|x| x * x)).collect();
            m.iter_mut().chain(v.iter_mut()).for_each(Matrix::round_to_f32);
            TrainSnapshot { step: 42, best_valid: 0.125, m, v }
        });
        let mut stats = NormalizationStats::identity(cfg.pose_dim(), cfg.n_mels, cfg.d_text);
        stats.pose.mean[1] = 0.3;
        stats.mel.degenerate[0] = true;
        Checkpoint { config: cfg, stats, params, train }
    }

    #[test]
    fn round_trip_is_exact() {
        for with_state in [false, true] {
            let c = sample_checkpoint(with_state);
            let back = Checkpoint::decode(&c.encode()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.param_digest(), c.param_digest());
        }
    }

    #[test]
    fn truncation_is_reported() {
        let bytes = sample_checkpoint(true).encode();
        assert!(matches!(Checkpoint::decode(&bytes[..bytes.len() - 3]), Err(Error::Checkpoint(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::decode(&bad).is_err());
    }
}
