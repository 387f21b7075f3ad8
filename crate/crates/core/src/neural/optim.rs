//! AdamW with bias-corrected moments and decoupled weight decay.

use super::config::TrainSchedule;
use super::params::{Gradients, Mat, Parameters};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct AdamW {
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl AdamW {
    pub fn new(params: &Parameters) -> Self {
        let zeros = |p: &Parameters| p.iter().map(|(_, _, t)| Mat::zeros(t.raw_dim())).collect();
        AdamW { m: zeros(params), v: zeros(params) }
    }

    /// Applies one update at `params.step` and increments the counter.
    ///
    /// `θ ← θ − lr·wd·θ − lr · m̂ / (√v̂ + ε)`
    pub fn step(&mut self, params: &mut Parameters, grads: &Gradients, schedule: &TrainSchedule) -> Result<()> {
        for id in params.ids() {
            if !grads.get(id).iter().all(|g| g.is_finite()) {
                return Err(Error::NonFinite {
                    tensor: format!("gradient of {}", params.name(id)),
                    step: params.step,
                });
            }
        }
        let lr = schedule.lr(params.step);
        let t = (params.step + 1) as i32;
        let (b1, b2) = (schedule.beta1, schedule.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let decay = 1.0 - lr * schedule.weight_decay;
        for id in params.ids() {
            let g = grads.get(id);
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            let theta = params.get_mut(id);
            ndarray::Zip::from(theta).and(m).and(v).and(g).for_each(|w, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let update = (*m / c1) / ((*v / c2).sqrt() + schedule.epsilon);
                *w = *w * decay - lr * update;
            });
        }
        params.step += 1;
        params.check_finite()
    }
}
