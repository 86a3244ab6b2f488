use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv;

/// Every architectural hyperparameter of the network.
///
/// Defaults reproduce the published architecture: 768-wide speech encoders
/// with 12 layers and 12 heads, 4-head content/style attention over
/// `d_att = d_model + d_text`, a 3-layer pose LSTM and a single 2-head
/// decoder layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub d_text: usize,
    pub n_mels: usize,
    pub patch_size: usize,
    pub patch_stride: usize,
    /// Longest per-word mel segment the positional table covers.
    pub max_mel_frames: usize,
    pub speech_layers: usize,
    pub speech_heads: usize,
    pub content_att_heads: usize,
    pub style_att_heads: usize,
    pub pose_lstm_layers: usize,
    pub decoder_layers: usize,
    pub decoder_heads: usize,
    /// Feed-forward width as a multiple of the layer width.
    pub ffn_mult: usize,
    pub joints: usize,
    pub frames: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 768,
            d_text: 768,
            n_mels: 128,
            patch_size: 16,
            patch_stride: 10,
            max_mel_frames: 128,
            speech_layers: 12,
            speech_heads: 12,
            content_att_heads: 4,
            style_att_heads: 4,
            pose_lstm_layers: 3,
            decoder_layers: 1,
            decoder_heads: 2,
            ffn_mult: 4,
            joints: 10,
            frames: 64,
        }
    }
}

impl ModelConfig {
    /// Small configuration used for gradient checks and desk-scale training.
    pub fn tiny() -> Self {
        Self {
            d_model: 16,
            d_text: 8,
            n_mels: 32,
            patch_size: 16,
            patch_stride: 10,
            max_mel_frames: 16,
            speech_layers: 1,
            speech_heads: 2,
            content_att_heads: 4,
            style_att_heads: 4,
            pose_lstm_layers: 3,
            decoder_layers: 1,
            decoder_heads: 2,
            ffn_mult: 2,
            joints: 3,
            frames: 8,
        }
    }

    pub fn d_att(&self) -> usize {
        self.d_model + self.d_text
    }

    pub fn d_style(&self) -> usize {
        self.d_att() + self.d_model
    }

    pub fn pose_dim(&self) -> usize {
        2 * self.joints
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn freq_steps(&self) -> usize {
        (self.n_mels - self.patch_size) / self.patch_stride + 1
    }

    pub fn time_steps(&self, mel_frames: usize) -> usize {
        (mel_frames - self.patch_size) / self.patch_stride + 1
    }

    /// Patch count of the longest supported mel segment.
    pub fn max_patches(&self) -> usize {
        self.freq_steps() * self.time_steps(self.max_mel_frames)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("d_text", self.d_text),
            ("n_mels", self.n_mels),
            ("patch_size", self.patch_size),
            ("patch_stride", self.patch_stride),
            ("speech_heads", self.speech_heads),
            ("content_att_heads", self.content_att_heads),
            ("style_att_heads", self.style_att_heads),
            ("pose_lstm_layers", self.pose_lstm_layers),
            ("decoder_heads", self.decoder_heads),
            ("ffn_mult", self.ffn_mult),
            ("joints", self.joints),
            ("frames", self.frames),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.patch_size > self.n_mels {
            return Err(Error::Config("patch_size exceeds n_mels".into()));
        }
        if self.max_mel_frames < self.patch_size {
            return Err(Error::Config("max_mel_frames below patch_size".into()));
        }
        let divides = [
            ("speech_heads", self.d_model, self.speech_heads),
            ("content_att_heads", self.d_att(), self.content_att_heads),
            ("style_att_heads", self.d_att(), self.style_att_heads),
            ("decoder_heads", self.d_model, self.decoder_heads),
        ];
        for (name, width, heads) in divides {
            if width % heads != 0 {
                return Err(Error::Config(format!("{name}={heads} does not divide width {width}")));
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        [
            ("d_model", self.d_model),
            ("d_text", self.d_text),
            ("n_mels", self.n_mels),
            ("patch_size", self.patch_size),
            ("patch_stride", self.patch_stride),
            ("max_mel_frames", self.max_mel_frames),
            ("speech_layers", self.speech_layers),
            ("speech_heads", self.speech_heads),
            ("content_att_heads", self.content_att_heads),
            ("style_att_heads", self.style_att_heads),
            ("pose_lstm_layers", self.pose_lstm_layers),
            ("decoder_layers", self.decoder_layers),
            ("decoder_heads", self.decoder_heads),
            ("ffn_mult", self.ffn_mult),
            ("joints", self.joints),
            ("frames", self.frames),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
    }

    /// Applies any recognized keys from `map` on top of `self`.
    pub fn apply_kv(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        kv::take(map, "d_model", &mut self.d_model)?;
        kv::take(map, "d_text", &mut self.d_text)?;
        kv::take(map, "n_mels", &mut self.n_mels)?;
        kv::take(map, "patch_size", &mut self.patch_size)?;
        kv::take(map, "patch_stride", &mut self.patch_stride)?;
        kv::take(map, "max_mel_frames", &mut self.max_mel_frames)?;
        kv::take(map, "speech_layers", &mut self.speech_layers)?;
        kv::take(map, "speech_heads", &mut self.speech_heads)?;
        kv::take(map, "content_att_heads", &mut self.content_att_heads)?;
        kv::take(map, "style_att_heads", &mut self.style_att_heads)?;
        kv::take(map, "pose_lstm_layers", &mut self.pose_lstm_layers)?;
        kv::take(map, "decoder_layers", &mut self.decoder_layers)?;
        kv::take(map, "decoder_heads", &mut self.decoder_heads)?;
        kv::take(map, "ffn_mult", &mut self.ffn_mult)?;
        kv::take(map, "joints", &mut self.joints)?;
        kv::take(map, "frames", &mut self.frames)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_size_dimensions() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.d_att(), 1536);
        assert_eq!(c.d_style(), 2304);
        assert_eq!(c.freq_steps(), 12);
        assert_eq!(c.patch_dim(), 256);
    }

    #[test]
    fn tiny_dimensions() {
        let c = ModelConfig::tiny();
        c.validate().unwrap();
        assert_eq!(c.d_att(), 24);
        assert_eq!(c.d_style(), 40);
    }

    #[test]
    fn rejects_indivisible_heads() {
        let c = ModelConfig { speech_heads: 5, ..ModelConfig::tiny() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn kv_round_trip() {
        let c = ModelConfig { joints: 7, ..ModelConfig::tiny() };
        let map: BTreeMap<_, _> = c.to_kv().into_iter().collect();
        let mut back = ModelConfig::default();
        back.apply_kv(&map).unwrap();
        assert_eq!(back, c);
    }
}
