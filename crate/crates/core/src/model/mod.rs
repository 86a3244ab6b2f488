//! The style-transfer network.
//!
//! * content encoder: per-word speech CLS embedding concatenated with the text
//!   vector, followed by multi-head self-attention over the words;
//! * style encoder: the same construction with its own speech encoder, mean
//!   pooled over words, concatenated with the last hidden state of a stacked
//!   LSTM over the pose sequence;
//! * generator: a transformer decoder over frame-rate content+style memory,
//!   teacher forced with the pose sequence shifted right by one frame;
//! * discriminator: an MLP regressing the style embedding from pooled content.

pub mod config;
pub mod layers;
pub mod speech;

use crate::autograd::{Graph, NodeId};
use crate::data::sample::{frame_to_word, Sample, Span};
use crate::error::{Error, Result};
use crate::params::{Init, LayoutBuilder, ParamId, ParamSpec, ParamStore};
use crate::tensor::Matrix;

pub use config::ModelConfig;
use layers::{DecoderLayer, LayerNorm, Linear, Lstm, MultiHeadAttention};
pub use speech::{patchify, SpeechEncoder};

/// `[W × d_att]`, one row per word.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentEmbedding(pub Matrix);

/// Fixed-size `d_style` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleEmbedding(pub Vec<f64>);

impl StyleEmbedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn cosine(&self, other: &StyleEmbedding) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let na = self.0.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = other.0.iter().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeechBranch {
    Content,
    Style,
}

/// Self-attention with residual connection and layer norm.
#[derive(Debug, Clone)]
struct AttentionBlock {
    attn: MultiHeadAttention,
    norm: LayerNorm,
}

impl AttentionBlock {
    fn new(l: &mut LayoutBuilder, name: &str, width: usize, heads: usize) -> Self {
        Self {
            attn: MultiHeadAttention::new(l, &format!("{name}.attn"), width, heads),
            norm: LayerNorm::new(l, &format!("{name}.norm"), width),
        }
    }

    fn forward(&self, g: &mut Graph, p: &ParamStore, x: NodeId) -> NodeId {
        let a = self.attn.forward(g, p, x, x, false);
        let x = g.add(x, a);
        self.norm.forward(g, p, x)
    }
}

#[derive(Debug, Clone)]
struct Generator {
    memory_proj: Linear,
    memory_pos: ParamId,
    pose_in: Linear,
    start: ParamId,
    pos: ParamId,
    layers: Vec<DecoderLayer>,
    head: Linear,
}

#[derive(Debug, Clone)]
struct Discriminator {
    l1: Linear,
    l2: Linear,
    out: Linear,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    specs: Vec<ParamSpec>,
    speech_content: SpeechEncoder,
    speech_style: SpeechEncoder,
    content_attn: AttentionBlock,
    style_attn: AttentionBlock,
    pose_lstm: Lstm,
    generator: Generator,
    disc: Discriminator,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut l = LayoutBuilder::default();
        let speech_content = SpeechEncoder::new(&mut l, "content.speech", c);
        let content_attn = AttentionBlock::new(&mut l, "content.sa", c.d_att(), c.content_att_heads);
        let speech_style = SpeechEncoder::new(&mut l, "style.speech", c);
        let style_attn = AttentionBlock::new(&mut l, "style.sa", c.d_att(), c.style_att_heads);
        let pose_lstm = Lstm::new(&mut l, "style.pose_lstm", c.pose_dim(), c.d_model, c.pose_lstm_layers);
        let d = c.d_model;
        let generator = Generator {
            memory_proj: Linear::new(&mut l, "gen.memory_proj", c.d_att() + c.d_style(), d),
            memory_pos: l.add("gen.memory_pos", c.frames, d, Init::Uniform(0.02)),
            pose_in: Linear::new(&mut l, "gen.pose_in", c.pose_dim(), d),
            start: l.add("gen.start", 1, d, Init::Uniform(0.02)),
            pos: l.add("gen.pos", c.frames, d, Init::Uniform(0.02)),
            layers: (0..c.decoder_layers)
                .map(|i| DecoderLayer::new(&mut l, &format!("gen.layer{i}"), d, c.decoder_heads, c.ffn_mult * d))
                .collect(),
            head: Linear::new(&mut l, "gen.head", d, c.pose_dim()),
        };
        let disc = Discriminator {
            l1: Linear::new(&mut l, "disc.l1", c.d_att(), d),
            l2: Linear::new(&mut l, "disc.l2", d, d),
            out: Linear::new(&mut l, "disc.out", d, c.d_style()),
        };
        Ok(Self {
            config,
            specs: l.finish(),
            speech_content,
            speech_style,
            content_attn,
            style_attn,
            pose_lstm,
            generator,
            disc,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn init_params(&self, seed: u64) -> ParamStore {
        ParamStore::init(&self.specs, seed)
    }

    /// Checks that a store was built for this layout.
    pub fn check_params(&self, p: &ParamStore) -> Result<()> {
        if p.specs() != self.specs.as_slice() {
            return Err(Error::DimensionMismatch("parameter layout does not match the model".into()));
        }
        Ok(())
    }

    fn check_sample(&self, s: &Sample, needs_pose: bool) -> Result<()> {
        let c = &self.config;
        if s.words.is_empty() {
            return Err(Error::DimensionMismatch("sample has no words".into()));
        }
        if s.d_text() != c.d_text {
            return Err(Error::DimensionMismatch(format!("d_text {} != {}", s.d_text(), c.d_text)));
        }
        if s.n_mels() != c.n_mels {
            return Err(Error::DimensionMismatch(format!("n_mels {} != {}", s.n_mels(), c.n_mels)));
        }
        if needs_pose && s.pose.cols() != c.pose_dim() {
            return Err(Error::DimensionMismatch(format!(
                "pose width {} != 2J = {}",
                s.pose.cols(),
                c.pose_dim()
            )));
        }
        if s.frames() > c.frames {
            return Err(Error::DimensionMismatch(format!(
                "{} frames exceed the model's {}",
                s.frames(),
                c.frames
            )));
        }
        Ok(())
    }

    pub fn speech_encode(
        &self,
        g: &mut Graph,
        p: &ParamStore,
        branch: SpeechBranch,
        mel: &Matrix,
    ) -> Result<NodeId> {
        match branch {
            SpeechBranch::Content => self.speech_content.forward(g, p, mel),
            SpeechBranch::Style => self.speech_style.forward(g, p, mel),
        }
    }

    fn speech_rows(&self, g: &mut Graph, p: &ParamStore, branch: SpeechBranch, s: &Sample) -> Result<NodeId> {
        let rows = s
            .words
            .iter()
            .map(|w| self.speech_encode(g, p, branch, &w.mel))
            .collect::<Result<Vec<_>>>()?;
        Ok(if rows.len() == 1 { rows[0] } else { g.concat_rows(&rows) })
    }

    /// `h_content`, `[W × d_att]`.
    pub fn encode_content(&self, g: &mut Graph, p: &ParamStore, s: &Sample) -> Result<NodeId> {
        self.check_sample(s, false)?;
        let speech = self.speech_rows(g, p, SpeechBranch::Content, s)?;
        let text = g.constant(s.text_matrix());
        let x = g.concat_cols(&[speech, text]);
        Ok(self.content_attn.forward(g, p, x))
    }

    /// `h_style`, `[1 × d_style]`.
    pub fn encode_style(&self, g: &mut Graph, p: &ParamStore, s: &Sample) -> Result<NodeId> {
        self.check_sample(s, true)?;
        let speech = self.speech_rows(g, p, SpeechBranch::Style, s)?;
        let text = g.constant(s.text_matrix());
        let x = g.concat_cols(&[text, speech]);
        let att = self.style_attn.forward(g, p, x);
        let pooled = g.mean_rows(att);
        let pose = g.constant(s.pose.clone());
        let hidden = self.pose_lstm.forward(g, p, pose);
        let last = g.slice_rows(hidden, s.frames() - 1, 1);
        Ok(g.concat_cols(&[pooled, last]))
    }

    /// Frame-rate decoder memory `[T × d_model]`.
    fn memory(
        &self,
        g: &mut Graph,
        p: &ParamStore,
        h_content: NodeId,
        h_style: NodeId,
        alignment: &[Span],
        frames: usize,
    ) -> Result<NodeId> {
        let c = &self.config;
        let (words, width) = g.shape(h_content);
        if width != c.d_att() || words != alignment.len() {
            return Err(Error::DimensionMismatch(format!(
                "h_content is {words}x{width}, expected {}x{}",
                alignment.len(),
                c.d_att()
            )));
        }
        if g.shape(h_style) != (1, c.d_style()) {
            return Err(Error::DimensionMismatch(format!(
                "h_style is {:?}, expected 1x{}",
                g.shape(h_style),
                c.d_style()
            )));
        }
        if frames > c.frames {
            return Err(Error::DimensionMismatch(format!("{frames} frames exceed {}", c.frames)));
        }
        let index = frame_to_word(alignment, frames)?;
        let up = g.gather_rows(h_content, index);
        let style = g.gather_rows(h_style, vec![0; frames]);
        let joined = g.concat_cols(&[up, style]);
        let mem = self.generator.memory_proj.forward(g, p, joined);
        let pos_table = g.param(p, self.generator.memory_pos);
        let pos = g.slice_rows(pos_table, 0, frames);
        Ok(g.add(mem, pos))
    }

    /// Runs the decoder over `inputs` (`[n × 2J]` previous poses, `n < frames`),
    /// producing predictions for positions `0..=n`.
    fn decode(&self, g: &mut Graph, p: &ParamStore, memory: NodeId, inputs: Option<NodeId>) -> NodeId {
        let gen = &self.generator;
        let start = g.param(p, gen.start);
        let seq = match inputs {
            Some(prev) => {
                let emb = gen.pose_in.forward(g, p, prev);
                g.concat_rows(&[start, emb])
            }
            None => start,
        };
        let len = g.shape(seq).0;
        let pos_table = g.param(p, gen.pos);
        let pos = g.slice_rows(pos_table, 0, len);
        let mut x = g.add(seq, pos);
        for layer in &gen.layers {
            x = layer.forward(g, p, x, memory);
        }
        gen.head.forward(g, p, x)
    }

    /// Teacher-forced generation: position `t` sees `target[0..t]`.
    pub fn generate_teacher_forced(
        &self,
        g: &mut Graph,
        p: &ParamStore,
        h_content: NodeId,
        h_style: NodeId,
        alignment: &[Span],
        target: &Matrix,
    ) -> Result<NodeId> {
        let frames = target.rows();
        if target.cols() != self.config.pose_dim() {
            return Err(Error::DimensionMismatch(format!(
                "target pose width {} != {}",
                target.cols(),
                self.config.pose_dim()
            )));
        }
        let memory = self.memory(g, p, h_content, h_style, alignment, frames)?;
        let inputs = (frames > 1).then(|| g.constant(target.slice_rows(0, frames - 1)));
        Ok(self.decode(g, p, memory, inputs))
    }

    /// `ĥ_style`, `[1 × d_style]`.
    pub fn discriminate(&self, g: &mut Graph, p: &ParamStore, h_content: NodeId) -> Result<NodeId> {
        if g.shape(h_content).1 != self.config.d_att() {
            return Err(Error::DimensionMismatch(format!(
                "h_content width {} != {}",
                g.shape(h_content).1,
                self.config.d_att()
            )));
        }
        let pooled = g.mean_rows(h_content);
        let h = self.disc.l1.forward(g, p, pooled);
        let h = g.gelu(h);
        let h = self.disc.l2.forward(g, p, h);
        let h = g.gelu(h);
        Ok(self.disc.out.forward(g, p, h))
    }

    // Evaluation-mode wrappers returning plain values.

    pub fn speech_embedding(&self, p: &ParamStore, branch: SpeechBranch, mel: &Matrix) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let n = self.speech_encode(&mut g, p, branch, mel)?;
        Ok(g.value(n).as_slice().to_vec())
    }

    pub fn content_embedding(&self, p: &ParamStore, s: &Sample) -> Result<ContentEmbedding> {
        let mut g = Graph::new();
        let n = self.encode_content(&mut g, p, s)?;
        Ok(ContentEmbedding(g.value(n).clone()))
    }

    pub fn style_embedding(&self, p: &ParamStore, s: &Sample) -> Result<StyleEmbedding> {
        let mut g = Graph::new();
        let n = self.encode_style(&mut g, p, s)?;
        Ok(StyleEmbedding(g.value(n).as_slice().to_vec()))
    }

    pub fn discriminate_eval(&self, p: &ParamStore, h: &ContentEmbedding) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let hc = g.constant(h.0.clone());
        let n = self.discriminate(&mut g, p, hc)?;
        Ok(g.value(n).as_slice().to_vec())
    }

    /// Generates `[T × 2J]` poses. With a target the decoder is teacher forced;
    /// without one it decodes autoregressively from the start token.
    pub fn generate(
        &self,
        p: &ParamStore,
        h_content: &ContentEmbedding,
        h_style: &StyleEmbedding,
        alignment: &[Span],
        target: Option<&Matrix>,
    ) -> Result<Matrix> {
        let frames = alignment.last().map_or(0, |s| s.end);
        let mut g = Graph::new();
        let hc = g.constant(h_content.0.clone());
        let hs = g.constant(Matrix::row_vector(h_style.0.clone()));
        if let Some(t) = target {
            if t.rows() != frames {
                return Err(Error::DimensionMismatch(format!(
                    "target has {} frames, alignment covers {frames}",
                    t.rows()
                )));
            }
            let out = self.generate_teacher_forced(&mut g, p, hc, hs, alignment, t)?;
            return Ok(g.value(out).clone());
        }
        let mem_node = self.memory(&mut g, p, hc, hs, alignment, frames)?;
        let memory = g.value(mem_node).clone();
        let mut out = Matrix::zeros(frames, self.config.pose_dim());
        for t in 0..frames {
            let mut step = Graph::new();
            let mem = step.constant(memory.clone());
            let inputs = (t > 0).then(|| step.constant(out.slice_rows(0, t)));
            let pred = self.decode(&mut step, p, mem, inputs);
            out.row_mut(t).copy_from_slice(step.value(pred).row(t));
        }
        Ok(out)
    }
}

/// Repeats each word's content row over its aligned frame span.
pub fn upsample_content(h_content: &ContentEmbedding, alignment: &[Span]) -> Result<Matrix> {
    let frames = alignment.last().map_or(0, |s| s.end);
    if alignment.len() != h_content.0.rows() {
        return Err(Error::AlignmentGap(format!(
            "{} spans for {} content rows",
            alignment.len(),
            h_content.0.rows()
        )));
    }
    let index = frame_to_word(alignment, frames)?;
    let mut out = Matrix::zeros(frames, h_content.0.cols());
    for (t, &w) in index.iter().enumerate() {
        out.row_mut(t).copy_from_slice(h_content.0.row(w));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sample::WordFeature;

    fn tiny_sample(cfg: &ModelConfig, words: usize, frames: usize, seed: u64) -> Sample {
        let mut k = seed as f64;
        let mut next = move || {
            k += 1.0;
            ((k * 12.9898).sin() * 43758.5453).fract()
        };
        let mut alignment = Vec::new();
        let per = frames / words;
        for w in 0..words {
            let end = if w + 1 == words { frames } else { (w + 1) * per };
            alignment.push(Span::new(w * per, end));
        }
        Sample {
            speaker_id: "s".into(),
            words: (0..words)
                .map(|_| WordFeature {
                    text_vec: (0..cfg.d_text).map(|_| next()).collect(),
                    mel: Matrix::from_fn(cfg.patch_size, cfg.n_mels, |_, _| next()),
                })
                .collect(),
            pose: Matrix::from_fn(frames, cfg.pose_dim(), |_, _| next()),
            alignment,
            fps: 15.0,
        }
    }

    #[test]
    fn tiny_shapes() {
        let cfg = ModelConfig::tiny();
        let m = Model::new(cfg.clone()).unwrap();
        let p = m.init_params(0);
        let s = tiny_sample(&cfg, 3, 8, 1);
        let hc = m.content_embedding(&p, &s).unwrap();
        assert_eq!(hc.0.shape(), (3, 24));
        let hs = m.style_embedding(&p, &s).unwrap();
        assert_eq!(hs.dim(), 40);
        assert_eq!(m.discriminate_eval(&p, &hc).unwrap().len(), 40);
        let out = m.generate(&p, &hc, &hs, &s.alignment, Some(&s.pose)).unwrap();
        assert_eq!(out.shape(), (8, 6));
        assert_eq!(m.speech_embedding(&p, SpeechBranch::Content, &s.words[0].mel).unwrap().len(), 16);
    }

    #[test]
    fn style_dimension_is_independent_of_length() {
        let cfg = ModelConfig::tiny();
        let m = Model::new(cfg.clone()).unwrap();
        let p = m.init_params(0);
        let a = m.style_embedding(&p, &tiny_sample(&cfg, 1, 2, 1)).unwrap();
        let b = m.style_embedding(&p, &tiny_sample(&cfg, 4, 8, 2)).unwrap();
        assert_eq!(a.dim(), b.dim());
    }

    #[test]
    fn autoregressive_matches_teacher_forcing_on_own_output() {
        let cfg = ModelConfig::tiny();
        let m = Model::new(cfg.clone()).unwrap();
        let p = m.init_params(4);
        let s = tiny_sample(&cfg, 2, 8, 3);
        let hc = m.content_embedding(&p, &s).unwrap();
        let hs = m.style_embedding(&p, &s).unwrap();
        let free = m.generate(&p, &hc, &hs, &s.alignment, None).unwrap();
        let forced = m.generate(&p, &hc, &hs, &s.alignment, Some(&free)).unwrap();
        for (a, b) in free.as_slice().iter().zip(forced.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        let again = m.generate(&p, &hc, &hs, &s.alignment, None).unwrap();
        assert_eq!(free, again);
    }

    #[test]
    fn upsample_repeats_rows() {
        let h = ContentEmbedding(Matrix::from_fn(2, 2, |r, c| (r * 10 + c) as f64));
        let up = upsample_content(&h, &[Span::new(0, 3), Span::new(3, 5)]).unwrap();
        let rows: Vec<_> = up.iter_rows().map(|r| r[0]).collect();
        assert_eq!(rows, vec![0.0, 0.0, 0.0, 10.0, 10.0]);
        let single = upsample_content(&ContentEmbedding(Matrix::filled(1, 3, 2.0)), &[Span::new(0, 4)]).unwrap();
        assert_eq!(single, Matrix::filled(4, 3, 2.0));
    }

    #[test]
    fn rejects_wrong_text_width() {
        let cfg = ModelConfig::tiny();
        let m = Model::new(cfg.clone()).unwrap();
        let p = m.init_params(0);
        let mut s = tiny_sample(&cfg, 2, 8, 1);
        s.words[0].text_vec.push(0.0);
        s.words[1].text_vec.push(0.0);
        assert!(matches!(m.content_embedding(&p, &s), Err(Error::DimensionMismatch(_))));
    }
}
