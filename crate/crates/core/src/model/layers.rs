//! Building blocks shared by the encoders, generator and discriminator.
//!
//! Each block only holds [`ParamId`]s; values live in a [`ParamStore`] and are
//! pulled into a [`Graph`] on every forward call.

use crate::autograd::{Graph, NodeId};
use crate::params::{Init, LayoutBuilder, ParamId, ParamStore};

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(l: &mut LayoutBuilder, name: &str, input: usize, output: usize) -> Self {
        Self {
            w: l.add(format!("{name}.w"), input, output, Init::FanIn(input)),
            b: l.add(format!("{name}.b"), 1, output, Init::Zeros),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: NodeId) -> NodeId {
        let w = g.param(p, self.w);
        let b = g.param(p, self.b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(l: &mut LayoutBuilder, name: &str, width: usize) -> Self {
        Self {
            gamma: l.add(format!("{name}.gamma"), 1, width, Init::Ones),
            beta: l.add(format!("{name}.beta"), 1, width, Init::Zeros),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: NodeId) -> NodeId {
        let gamma = g.param(p, self.gamma);
        let beta = g.param(p, self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
    pub width: usize,
}

impl MultiHeadAttention {
    pub fn new(l: &mut LayoutBuilder, name: &str, width: usize, heads: usize) -> Self {
        Self {
            q: Linear::new(l, &format!("{name}.q"), width, width),
            k: Linear::new(l, &format!("{name}.k"), width, width),
            v: Linear::new(l, &format!("{name}.v"), width, width),
            out: Linear::new(l, &format!("{name}.out"), width, width),
            heads,
            width,
        }
    }

    /// Scaled dot-product attention of `query` rows over `memory` rows.
    /// With `causal`, query row `i` only sees memory rows `0..=i`.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &ParamStore,
        query: NodeId,
        memory: NodeId,
        causal: bool,
    ) -> NodeId {
        let q = self.q.forward(g, p, query);
        let k = self.k.forward(g, p, memory);
        let v = self.v.forward(g, p, memory);
        let head_dim = self.width / self.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    g.slice_cols(q, h * head_dim, head_dim),
                    g.slice_cols(k, h * head_dim, head_dim),
                    g.slice_cols(v, h * head_dim, head_dim),
                )
            };
            let scores = g.matmul_bt(qh, kh);
            let scores = g.scale(scores, scale);
            let attn = g.softmax_rows(scores, causal);
            outs.push(g.matmul(attn, vh));
        }
        let joined = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs) };
        self.out.forward(g, p, joined)
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(l: &mut LayoutBuilder, name: &str, width: usize, hidden: usize) -> Self {
        Self {
            up: Linear::new(l, &format!("{name}.up"), width, hidden),
            down: Linear::new(l, &format!("{name}.down"), hidden, width),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: NodeId) -> NodeId {
        let h = self.up.forward(g, p, x);
        let h = g.gelu(h);
        self.down.forward(g, p, h)
    }
}

/// Post-norm transformer encoder layer.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ffn: FeedForward,
    pub norm2: LayerNorm,
}

impl EncoderLayer {
    pub fn new(l: &mut LayoutBuilder, name: &str, width: usize, heads: usize, ffn: usize) -> Self {
        Self {
            attn: MultiHeadAttention::new(l, &format!("{name}.attn"), width, heads),
            norm1: LayerNorm::new(l, &format!("{name}.norm1"), width),
            ffn: FeedForward::new(l, &format!("{name}.ffn"), width, ffn),
            norm2: LayerNorm::new(l, &format!("{name}.norm2"), width),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: NodeId) -> NodeId {
        let a = self.attn.forward(g, p, x, x, false);
        let x = g.add(x, a);
        let x = self.norm1.forward(g, p, x);
        let f = self.ffn.forward(g, p, x);
        let x = g.add(x, f);
        self.norm2.forward(g, p, x)
    }
}

/// Post-norm transformer decoder layer: causal self-attention, cross-attention, FFN.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub self_attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
    pub norm3: LayerNorm,
}

impl DecoderLayer {
    pub fn new(l: &mut LayoutBuilder, name: &str, width: usize, heads: usize, ffn: usize) -> Self {
        Self {
            self_attn: MultiHeadAttention::new(l, &format!("{name}.self_attn"), width, heads),
            norm1: LayerNorm::new(l, &format!("{name}.norm1"), width),
            cross_attn: MultiHeadAttention::new(l, &format!("{name}.cross_attn"), width, heads),
            norm2: LayerNorm::new(l, &format!("{name}.norm2"), width),
            ffn: FeedForward::new(l, &format!("{name}.ffn"), width, ffn),
            norm3: LayerNorm::new(l, &format!("{name}.norm3"), width),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: NodeId, memory: NodeId) -> NodeId {
        let a = self.self_attn.forward(g, p, x, x, true);
        let x = g.add(x, a);
        let x = self.norm1.forward(g, p, x);
        let c = self.cross_attn.forward(g, p, x, memory, false);
        let x = g.add(x, c);
        let x = self.norm2.forward(g, p, x);
        let f = self.ffn.forward(g, p, x);
        let x = g.add(x, f);
        self.norm3.forward(g, p, x)
    }
}

#[derive(Debug, Clone)]
pub struct LstmLayer {
    pub wih: ParamId,
    pub whh: ParamId,
    pub b: ParamId,
}

/// Stacked LSTM; returns the top layer's hidden states `[T × hidden]`.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub layers: Vec<LstmLayer>,
}

impl Lstm {
    pub fn new(l: &mut LayoutBuilder, name: &str, input: usize, hidden: usize, depth: usize) -> Self {
        let layers = (0..depth)
            .map(|i| {
                let inp = if i == 0 { input } else { hidden };
                LstmLayer {
                    wih: l.add(format!("{name}.{i}.wih"), inp, 4 * hidden, Init::FanIn(inp)),
                    whh: l.add(format!("{name}.{i}.whh"), hidden, 4 * hidden, Init::OrthogonalGates),
                    b: l.add(format!("{name}.{i}.b"), 1, 4 * hidden, Init::Zeros),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: NodeId) -> NodeId {
        let mut h = x;
        for layer in &self.layers {
            let (wih, whh, b) = (g.param(p, layer.wih), g.param(p, layer.whh), g.param(p, layer.b));
            h = g.lstm(h, wih, whh, b);
        }
        h
    }
}
