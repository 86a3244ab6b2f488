use crate::params::{Group, ParamStore};
use crate::tensor::Matrix;
use crate::autograd::Gradients;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Adam moments for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Matrix> = params.values().iter().map(|v| Matrix::zeros(v.rows(), v.cols())).collect();
        Self { m: zeros.clone(), v: zeros }
    }

    /// One bias-corrected update of the parameters in `group`; `t` counts from 1.
    ///
    /// Parameters and moments are rounded to `f32` afterwards so that a
    /// checkpoint captures the optimizer exactly.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, group: Group, lr: f64, t: u64, cfg: AdamConfig) {
        let c1 = 1.0 - cfg.beta1.powf(t as f64);
        let c2 = 1.0 - cfg.beta2.powf(t as f64);
        let ids: Vec<_> = params.ids().filter(|&id| params.spec(id).group == group).collect();
        for id in ids {
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let p = params.get_mut(id);
            let g = grads.get(id);
            for k in 0..p.len() {
                let gk = g.map_or(0.0, |g| g.as_slice()[k]);
                let mk = cfg.beta1 * m.as_slice()[k] + (1.0 - cfg.beta1) * gk;
                let vk = cfg.beta2 * v.as_slice()[k] + (1.0 - cfg.beta2) * gk * gk;
                m.as_mut_slice()[k] = mk;
                v.as_mut_slice()[k] = vk;
                p.as_mut_slice()[k] -= lr * (mk / c1) / ((vk / c2).sqrt() + cfg.eps);
            }
            m.round_to_f32();
            v.round_to_f32();
            p.round_to_f32();
        }
    }
}
