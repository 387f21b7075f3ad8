//! Central finite-difference check of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{Gradients, Parameters};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Coordinates sampled per tensor; smaller tensors are checked fully.
    pub coords_per_tensor: usize,
    pub epsilon: f64,
    /// Lower bound on the relative-error denominator. Gradients that are
    /// exactly zero (key biases, a bias shared by every choice score) leave
    /// only round-off in the finite difference.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { coords_per_tensor: 32, epsilon: 1e-5, floor: 1e-6, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub name: String,
    pub coordinates: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
}

/// `|a - n| / max(|a|, |n|, floor)`, and zero when all three vanish.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Compares `analytic` against `(f(θ+ε) − f(θ−ε)) / 2ε` on sampled
/// coordinates of every tensor. Parameters are restored afterwards.
pub fn grad_check<M>(
    model: &mut M,
    params: impl Fn(&mut M) -> &mut Parameters,
    loss: impl Fn(&M) -> f64,
    analytic: &Gradients,
    options: GradCheckOptions,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let shapes: Vec<(String, usize)> = params(model)
        .iter()
        .map(|(_, name, t)| (name.to_string(), t.len()))
        .collect();
    let ids: Vec<_> = params(model).ids().collect();
    let mut tensors = Vec::with_capacity(ids.len());
    for (id, (name, len)) in ids.into_iter().zip(shapes) {
        let picks: Vec<usize> = if len <= options.coords_per_tensor {
            (0..len).collect()
        } else {
            sample(&mut rng, len, options.coords_per_tensor).into_vec()
        };
        let mut worst: f64 = 0.0;
        for &flat in &picks {
            let cols = params(model).get(id).ncols();
            let at = [flat / cols, flat % cols];
            let original = params(model).get(id)[at];
            params(model).get_mut(id)[at] = original + options.epsilon;
            let plus = loss(model);
            params(model).get_mut(id)[at] = original - options.epsilon;
            let minus = loss(model);
            params(model).get_mut(id)[at] = original;
            let numeric = (plus - minus) / (2.0 * options.epsilon);
            worst = worst.max(relative_error(analytic.get(id)[at], numeric, options.floor));
        }
        tensors.push(TensorCheck { name, coordinates: picks.len(), max_rel_error: worst });
    }
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    GradCheckReport { tensors, max_rel_error }
}
