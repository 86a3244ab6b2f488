//! Patch-transformer speech encoder over per-word mel segments.

use crate::autograd::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::layers::{EncoderLayer, Linear};
use crate::params::{Init, LayoutBuilder, ParamId, ParamStore};
use crate::tensor::Matrix;

/// Cuts `mel` (`[T_w × n_mels]`) into overlapping square patches.
///
/// Patches are ordered time-major: all frequency positions of the first time
/// step, then the second, and so on. Each row is one patch flattened
/// row-major (time rows, frequency columns).
pub fn patchify(mel: &Matrix, patch_size: usize, patch_stride: usize) -> Result<Matrix> {
    let (frames, bins) = mel.shape();
    if frames < patch_size || bins < patch_size {
        return Err(Error::TooShort(format!(
            "mel {frames}x{bins} is smaller than one {patch_size}x{patch_size} patch"
        )));
    }
    if patch_stride == 0 {
        return Err(Error::Config("patch_stride must be positive".into()));
    }
    let t_steps = (frames - patch_size) / patch_stride + 1;
    let f_steps = (bins - patch_size) / patch_stride + 1;
    let dim = patch_size * patch_size;
    let mut out = Matrix::zeros(t_steps * f_steps, dim);
    for ti in 0..t_steps {
        for fi in 0..f_steps {
            let row = out.row_mut(ti * f_steps + fi);
            for dt in 0..patch_size {
                let src = &mel.row(ti * patch_stride + dt)[fi * patch_stride..fi * patch_stride + patch_size];
                row[dt * patch_size..(dt + 1) * patch_size].copy_from_slice(src);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SpeechEncoder {
    pub patch_proj: Linear,
    pub cls: ParamId,
    pub pos: ParamId,
    pub layers: Vec<EncoderLayer>,
    patch_size: usize,
    patch_stride: usize,
    n_mels: usize,
    max_mel_frames: usize,
}

impl SpeechEncoder {
    pub fn new(l: &mut LayoutBuilder, name: &str, cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        Self {
            patch_proj: Linear::new(l, &format!("{name}.patch_proj"), cfg.patch_dim(), d),
            cls: l.add(format!("{name}.cls"), 1, d, Init::Uniform(0.02)),
            pos: l.add(format!("{name}.pos"), cfg.max_patches() + 1, d, Init::Uniform(0.02)),
            layers: (0..cfg.speech_layers)
                .map(|i| {
                    EncoderLayer::new(
                        l,
                        &format!("{name}.layer{i}"),
                        d,
                        cfg.speech_heads,
                        cfg.ffn_mult * d,
                    )
                })
                .collect(),
            patch_size: cfg.patch_size,
            patch_stride: cfg.patch_stride,
            n_mels: cfg.n_mels,
            max_mel_frames: cfg.max_mel_frames,
        }
    }

    /// Returns the CLS output row `[1 × d_model]`.
    pub fn forward(&self, g: &mut Graph, p: &ParamStore, mel: &Matrix) -> Result<NodeId> {
        if mel.cols() != self.n_mels {
            return Err(Error::DimensionMismatch(format!(
                "mel has {} bins, model expects {}",
                mel.cols(),
                self.n_mels
            )));
        }
        // Frames past the positional table are dropped, like frames past the patch grid.
        let usable = mel.rows().min(self.max_mel_frames);
        let mel = if usable < mel.rows() { mel.slice_rows(0, usable) } else { mel.clone() };
        let patches = patchify(&mel, self.patch_size, self.patch_stride)?;
        let n_tokens = patches.rows() + 1;
        let patches = g.constant(patches);
        let proj = self.patch_proj.forward(g, p, patches);
        let cls = g.param(p, self.cls);
        let tokens = g.concat_rows(&[cls, proj]);
        let pos_table = g.param(p, self.pos);
        let pos = g.slice_rows(pos_table, 0, n_tokens);
        let mut x = g.add(tokens, pos);
        for layer in &self.layers {
            x = layer.forward(g, p, x);
        }
        Ok(g.slice_rows(x, 0, 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_counts() {
        let mel = Matrix::zeros(16, 128);
        assert_eq!(patchify(&mel, 16, 10).unwrap().shape(), (12, 256));
        let mel = Matrix::zeros(64, 128);
        assert_eq!(patchify(&mel, 16, 10).unwrap().rows(), 60);
        let mel = Matrix::zeros(32, 128);
        assert_eq!(patchify(&mel, 16, 16).unwrap().rows(), 16);
    }

    #[test]
    fn patches_are_exact_submatrices() {
        let mel = Matrix::from_fn(26, 40, |t, f| (t * 1000 + f) as f64);
        let p = patchify(&mel, 16, 10).unwrap();
        let f_steps = (40 - 16) / 10 + 1;
        assert_eq!(f_steps, 3);
        // second time step, third frequency step
        let row = p.row(f_steps + 2);
        for dt in 0..16 {
            for df in 0..16 {
                assert_eq!(row[dt * 16 + df], mel.get(10 + dt, 20 + df));
            }
        }
    }

    #[test]
    fn too_short_is_an_error() {
        assert!(matches!(patchify(&Matrix::zeros(15, 128), 16, 10), Err(Error::TooShort(_))));
    }
}
