//! Central finite-difference verification of the training gradients.

use crate::autograd::Gradients;
use crate::data::sample::Sample;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::params::{Group, ParamId, ParamStore};
use crate::tensor::Matrix;
use crate::train::step::{autoencoder_pass, discriminator_pass, SampleGraph};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub step: f64,
    /// Lower bound on the relative-error denominator, so entries whose true
    /// gradient is ~0 are judged by absolute error.
    pub floor: f64,
    pub lambda: f64,
    pub epsilon_norm: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self { step: 1e-5, floor: 1e-5, lambda: 0.5, epsilon_norm: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathReport {
    pub max_rel_error: f64,
    pub entries: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckReport {
    pub rec: PathReport,
    pub dis: PathReport,
    pub adv: PathReport,
    /// Largest discriminator gradient on the adversarial path; must be 0.
    pub adv_disc_grad: f64,
    /// Largest encoder/generator gradient on the discriminator path; must be 0.
    pub dis_encoder_grad: f64,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.rec.max_rel_error.max(self.dis.max_rel_error).max(self.adv.max_rel_error)
    }
}

fn rel(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn ids_of(p: &ParamStore, group: Group) -> Vec<ParamId> {
    p.ids().filter(|&id| p.spec(id).group == group).collect()
}

/// `(L_rec, L_adv)` of a batch.
fn losses(model: &Model, p: &ParamStore, batch: &[Sample], eps: f64) -> Result<(f64, f64)> {
    let mut graphs = batch.iter().map(|s| SampleGraph::build(model, p, s)).collect::<Result<Vec<_>>>()?;
    let pass = autoencoder_pass(model, p, &mut graphs, eps, 0.0, 0.0)?;
    Ok((pass.l_rec, pass.l_adv))
}

fn compare(
    p: &mut ParamStore,
    ids: &[ParamId],
    opts: &GradcheckOptions,
    mut eval: impl FnMut(&ParamStore) -> Result<Vec<f64>>,
    reports: &mut [PathReport],
    analytic: &[&Gradients],
) -> Result<()> {
    for &id in ids {
        for k in 0..p.get(id).len() {
            let orig = p.get(id).as_slice()[k];
            p.get_mut(id).as_mut_slice()[k] = orig + opts.step;
            let plus = eval(p)?;
            p.get_mut(id).as_mut_slice()[k] = orig - opts.step;
            let minus = eval(p)?;
            p.get_mut(id).as_mut_slice()[k] = orig;
            for ((rep, g), (hi, lo)) in reports.iter_mut().zip(analytic).zip(plus.iter().zip(&minus)) {
                let num = (hi - lo) / (2.0 * opts.step);
                let a = g.get(id).map_or(0.0, |m| m.as_slice()[k]);
                rep.max_rel_error = rep.max_rel_error.max(rel(a, num, opts.floor));
                rep.entries += 1;
            }
        }
    }
    Ok(())
}

/// Checks `L_rec` and `λ·L_adv` against every encoder/generator parameter and
/// `L_dis` against every discriminator parameter, and measures the gradients
/// that the stop-gradient rules require to be exactly zero.
pub fn gradcheck(model: &Model, params: &ParamStore, batch: &[Sample], opts: &GradcheckOptions) -> Result<GradcheckReport> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("gradcheck needs at least one sample".into()));
    }
    let mut p = params.clone();
    let ae = ids_of(&p, Group::Autoencoder);
    let disc = ids_of(&p, Group::Discriminator);
    let eps = opts.epsilon_norm;
    let lambda = opts.lambda;

    let build = |p: &ParamStore| batch.iter().map(|s| SampleGraph::build(model, p, s)).collect::<Result<Vec<_>>>();
    let rec_grads = autoencoder_pass(model, &p, &mut build(&p)?, eps, 1.0, 0.0)?.grads;
    let adv_grads = autoencoder_pass(model, &p, &mut build(&p)?, eps, 0.0, lambda)?.grads;
    let pairs: Vec<(Matrix, Matrix)> =
        build(&p)?.iter().map(|sg| (sg.g.value(sg.hc).clone(), sg.g.value(sg.hs).clone())).collect();
    let (_, dis_grads) = discriminator_pass(model, &p, &pairs)?;

    let mut ae_reports = [PathReport::default(), PathReport::default()];
    compare(
        &mut p,
        &ae,
        opts,
        |p| {
            let (r, a) = losses(model, p, batch, eps)?;
            Ok(vec![r, lambda * a])
        },
        &mut ae_reports,
        &[&rec_grads, &adv_grads],
    )?;
    let mut dis_report = [PathReport::default()];
    compare(
        &mut p,
        &disc,
        opts,
        |p| Ok(vec![discriminator_pass(model, p, &pairs)?.0]),
        &mut dis_report,
        &[&dis_grads],
    )?;
    Ok(GradcheckReport {
        rec: ae_reports[0],
        adv: ae_reports[1],
        dis: dis_report[0],
        adv_disc_grad: adv_grads.max_abs(disc.iter().copied()),
        dis_encoder_grad: dis_grads.max_abs(ae.iter().copied()),
    })
}
