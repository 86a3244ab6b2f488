//! One alternating optimization step.

use crate::autograd::{Gradients, Graph, NodeId};
use crate::data::sample::Sample;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::params::{Group, ParamStore};
use crate::tensor::Matrix;
use crate::train::adam::Adam;
use crate::train::config::TrainConfig;
use crate::train::losses::adversarial_from_errors;
use crate::train::schedule::{lambda_at, lr_at};

/// Scalars reported for one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepScalars {
    /// Number of steps completed before this one.
    pub step: u64,
    pub lambda: f64,
    pub lr: f64,
    pub l_dis: f64,
    pub l_rec: f64,
    pub l_adv: f64,
    pub l_total: f64,
}

/// Autoencoder forward pass of one sample, with the discriminator frozen.
pub(crate) struct SampleGraph {
    pub g: Graph,
    pub hc: NodeId,
    pub hs: NodeId,
    pub rec: NodeId,
}

impl SampleGraph {
    pub fn build(model: &Model, p: &ParamStore, s: &Sample) -> Result<Self> {
        let mut g = Graph::new();
        g.freeze(Group::Discriminator);
        let hc = model.encode_content(&mut g, p, s)?;
        let hs = model.encode_style(&mut g, p, s)?;
        let pred = model.generate_teacher_forced(&mut g, p, hc, hs, &s.alignment, &s.pose)?;
        let target = g.constant(s.pose.clone());
        let diff = g.sub(pred, target);
        let rec = g.norm(diff);
        Ok(Self { g, hc, hs, rec })
    }

    fn scalar(&self, n: NodeId) -> f64 {
        self.g.value(n).get(0, 0)
    }

    /// Appends `‖h_style − D(h_content)‖` using the current discriminator values.
    pub fn style_error(&mut self, model: &Model, p: &ParamStore) -> Result<NodeId> {
        let pred = model.discriminate(&mut self.g, p, self.hc)?;
        let diff = self.g.sub(self.hs, pred);
        Ok(self.g.norm(diff))
    }
}

/// Mean discriminator loss over constant `(h_content, h_style)` pairs and its
/// gradient, which reaches only the discriminator.
pub(crate) fn discriminator_pass(
    model: &Model,
    p: &ParamStore,
    pairs: &[(Matrix, Matrix)],
) -> Result<(f64, Gradients)> {
    let b = pairs.len() as f64;
    let mut grads = Gradients::new(p.len());
    let mut total = 0.0;
    for (hc, hs) in pairs {
        let mut g = Graph::new();
        g.freeze(Group::Autoencoder);
        let hc = g.constant(hc.clone());
        let hs = g.constant(hs.clone());
        let pred = model.discriminate(&mut g, p, hc)?;
        let diff = g.sub(hs, pred);
        let e = g.norm(diff);
        total += g.value(e).get(0, 0);
        grads.merge(&g.backward(&[(e, Matrix::filled(1, 1, 1.0 / b))], p.len()));
    }
    Ok((total / b, grads))
}

/// Reconstruction and adversarial terms of a batch, with gradients of
/// `rec_weight·L_rec + adv_weight·L_adv` over the autoencoder parameters.
pub(crate) struct AutoencoderPass {
    pub l_rec: f64,
    pub l_adv: f64,
    pub grads: Gradients,
}

pub(crate) fn autoencoder_pass(
    model: &Model,
    p: &ParamStore,
    graphs: &mut [SampleGraph],
    eps_norm: f64,
    rec_weight: f64,
    adv_weight: f64,
) -> Result<AutoencoderPass> {
    let b = graphs.len() as f64;
    let errs = graphs.iter_mut().map(|sg| sg.style_error(model, p)).collect::<Result<Vec<_>>>()?;
    let e_vals: Vec<f64> = graphs.iter().zip(&errs).map(|(sg, &e)| sg.scalar(e)).collect();
    let (l_adv, de) = adversarial_from_errors(&e_vals, eps_norm);
    let l_rec = graphs.iter().map(|sg| sg.scalar(sg.rec)).sum::<f64>() / b;
    let mut grads = Gradients::new(p.len());
    for ((sg, &e), d) in graphs.iter().zip(&errs).zip(&de) {
        let mut seeds = Vec::with_capacity(2);
        if rec_weight != 0.0 {
            seeds.push((sg.rec, Matrix::filled(1, 1, rec_weight / b)));
        }
        if adv_weight != 0.0 {
            seeds.push((e, Matrix::filled(1, 1, adv_weight * d)));
        }
        if !seeds.is_empty() {
            grads.merge(&sg.g.backward(&seeds, p.len()));
        }
    }
    Ok(AutoencoderPass { l_rec, l_adv, grads })
}

fn ensure_finite(step: u64, what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { step, detail: format!("{what} = {v}") })
    }
}

/// Phase 1 updates the discriminator on `L_dis` with the encoders held fixed;
/// phase 2 updates encoders and generator on `L_rec + λ·L_adv` with the
/// discriminator frozen. `step` is the number of steps already completed.
pub fn train_step(
    model: &Model,
    params: &mut ParamStore,
    adam: &mut Adam,
    step: u64,
    batch: &[&Sample],
    cfg: &TrainConfig,
) -> Result<StepScalars> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    let lambda = lambda_at(step, cfg);
    let lr = lr_at(step + 1, cfg);
    let t = step + 1;
    let mut graphs = batch.iter().map(|s| SampleGraph::build(model, params, s)).collect::<Result<Vec<_>>>()?;

    let pairs: Vec<(Matrix, Matrix)> =
        graphs.iter().map(|sg| (sg.g.value(sg.hc).clone(), sg.g.value(sg.hs).clone())).collect();
    let (l_dis, d_grads) = discriminator_pass(model, params, &pairs)?;
    ensure_finite(step, "L_dis", l_dis)?;
    if cfg.train_discriminator {
        adam.step(params, &d_grads, Group::Discriminator, lr, t, cfg.adam());
    }

    let pass = autoencoder_pass(model, params, &mut graphs, cfg.epsilon_norm, 1.0, lambda)?;
    ensure_finite(step, "L_rec", pass.l_rec)?;
    ensure_finite(step, "L_adv", pass.l_adv)?;
    adam.step(params, &pass.grads, Group::Autoencoder, lr, t, cfg.adam());
    if !params.is_finite() {
        return Err(Error::NonFiniteLoss { step, detail: "parameters diverged".into() });
    }
    Ok(StepScalars {
        step,
        lambda,
        lr,
        l_dis,
        l_rec: pass.l_rec,
        l_adv: pass.l_adv,
        l_total: pass.l_rec + lambda * pass.l_adv,
    })
}

/// Mean teacher-forced reconstruction loss, without any update.
pub fn validation_loss(model: &Model, params: &ParamStore, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no validation samples".into()));
    }
    let mut total = 0.0;
    for s in samples {
        let sg = SampleGraph::build(model, params, s)?;
        total += sg.scalar(sg.rec);
    }
    Ok(total / samples.len() as f64)
}
