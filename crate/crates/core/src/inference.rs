//! Zero-shot style extraction and style-conditioned generation.
//!
//! Nothing here mutates parameters: a checkpoint is only ever borrowed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::checkpoint::Checkpoint;
use crate::data::manifest::{load_samples, DatasetManifest, Split};
use crate::data::normalize::normalize;
use crate::data::sample::Sample;
use crate::error::{Error, Result};
use crate::model::{Model, StyleEmbedding};
use crate::tensor::Matrix;

/// A checkpoint with its model layout, ready for evaluation.
#[derive(Debug, Clone)]
pub struct Engine<'a> {
    pub ckpt: &'a Checkpoint,
    pub model: Model,
}

impl<'a> Engine<'a> {
    pub fn new(ckpt: &'a Checkpoint) -> Result<Self> {
        Ok(Self { model: ckpt.model()?, ckpt })
    }

    /// Mean `h_style` over the samples (raw data units).
    pub fn extract_style(&self, samples: &[Sample]) -> Result<StyleEmbedding> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("no samples to extract a style from".into()));
        }
        let mut acc = vec![0.0; self.model.config().d_style()];
        for s in samples {
            let n = normalize(s, &self.ckpt.stats)?;
            let h = self.model.style_embedding(&self.ckpt.params, &n)?;
            for (a, v) in acc.iter_mut().zip(&h.0) {
                *a += v;
            }
        }
        Ok(StyleEmbedding(acc.into_iter().map(|a| a / samples.len() as f64).collect()))
    }

    /// Generates the source's content in `style`, autoregressively, in data units.
    pub fn transfer(&self, source: &Sample, style: &StyleEmbedding) -> Result<Matrix> {
        if style.dim() != self.model.config().d_style() {
            return Err(Error::DimensionMismatch(format!(
                "style has {} values, model expects {}",
                style.dim(),
                self.model.config().d_style()
            )));
        }
        let n = normalize(source, &self.ckpt.stats)?;
        let hc = self.model.content_embedding(&self.ckpt.params, &n)?;
        let out = self.model.generate(&self.ckpt.params, &hc, style, &n.alignment, None)?;
        self.ckpt.stats.pose.denormalize_matrix(&out, "generated pose")
    }
}

pub fn extract_style(ckpt: &Checkpoint, samples: &[Sample]) -> Result<StyleEmbedding> {
    Engine::new(ckpt)?.extract_style(samples)
}

pub fn transfer(ckpt: &Checkpoint, source: &Sample, style: &StyleEmbedding) -> Result<Matrix> {
    Engine::new(ckpt)?.transfer(source, style)
}

const BANK_MAGIC: [u8; 16] = *b"ZSMSTM-STYLES\0\0\x01";
const BANK_CSV_TAG: &str = "#zsmstm-styles,1";

/// Averaged style embedding per speaker.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StyleBank {
    pub entries: BTreeMap<String, (StyleEmbedding, usize)>,
}

impl StyleBank {
    pub fn get(&self, speaker: &str) -> Option<&StyleEmbedding> {
        self.entries.get(speaker).map(|(e, _)| e)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn encode_binary(&self) -> Vec<u8> {
        let mut out = BANK_MAGIC.to_vec();
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (id, (e, n)) in &self.entries {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            out.extend_from_slice(&(*n as u32).to_le_bytes());
            out.extend_from_slice(&(e.dim() as u32).to_le_bytes());
            for v in &e.0 {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode_binary(buf: &[u8]) -> Result<Self> {
        let bad = || Error::MalformedInterval("truncated style bank".into());
        let mut pos = 16;
        if buf.len() < 16 || buf[..16] != BANK_MAGIC {
            return Err(Error::MalformedInterval("not a style bank".into()));
        }
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = buf.get(pos..pos + n).ok_or_else(bad)?;
            pos += n;
            Ok(s)
        };
        let u32_of = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
        let count = u32_of(take(4)?);
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let len = u32_of(take(4)?);
            let id = String::from_utf8(take(len)?.to_vec()).map_err(|_| bad())?;
            let n = u32_of(take(4)?);
            let dim = u32_of(take(4)?);
            let v = take(dim * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            entries.insert(id, (StyleEmbedding(v), n));
        }
        if pos != buf.len() {
            return Err(Error::MalformedInterval("trailing bytes in style bank".into()));
        }
        Ok(Self { entries })
    }

    /// `speaker,count,v0,v1,...` per line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{BANK_CSV_TAG}\n");
        for (id, (e, n)) in &self.entries {
            let _ = write!(out, "{id},{n}");
            for v in &e.0 {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(BANK_CSV_TAG) {
            return Err(Error::MalformedInterval("missing style bank header".into()));
        }
        let mut entries = BTreeMap::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || Error::MalformedInterval(format!("style bank line {}", i + 2));
            let mut f = line.split(',');
            let id = f.next().ok_or_else(bad)?.to_string();
            let n = f.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let v = f.map(|x| x.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
            entries.insert(id, (StyleEmbedding(v), n));
        }
        Ok(Self { entries })
    }

    /// Writes CSV when the extension is `.csv`, binary otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = if path.extension().is_some_and(|e| e == "csv") {
            self.to_csv().into_bytes()
        } else {
            self.encode_binary()
        };
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(&BANK_MAGIC) {
            Self::decode_binary(&bytes)
        } else {
            let text = String::from_utf8(bytes).map_err(|_| Error::MalformedInterval("style bank is not UTF-8".into()))?;
            Self::from_csv(&text)
        }
    }
}

/// One averaged embedding per requested speaker, over that speaker's
/// intervals in `split` (all splits when `None`).
pub fn build_style_bank<S: AsRef<str>>(
    ckpt: &Checkpoint,
    manifest: &DatasetManifest,
    speakers: &[S],
    split: Option<Split>,
) -> Result<StyleBank> {
    let engine = Engine::new(ckpt)?;
    let mut bank = StyleBank::default();
    for spk in speakers {
        let spk = spk.as_ref();
        let entries: Vec<_> = manifest.entries_for(spk, split).collect();
        if entries.is_empty() {
            return Err(Error::UnknownSpeaker(spk.to_string()));
        }
        let samples = load_samples(manifest, entries)?;
        bank.entries.insert(spk.to_string(), (engine.extract_style(&samples)?, samples.len()));
    }
    Ok(bank)
}
