//! Central finite-difference verification of the analytic gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::softmax_ce;
use super::model::SegModel;
use super::train::Sample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    pub probes: usize,
    pub seed: u64,
    /// Fault injection: the analytic gradient of this layer's kernel is
    /// doubled before comparison.
    pub corrupt_layer: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { epsilon: 1e-3, probes: 50, seed: 0, corrupt_layer: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Probe {
    /// `|a - n| / max(|a|, |n|, 1e-8)`
    pub fn relative_error(&self) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(1e-8)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub probes: Vec<Probe>,
    /// Candidates discarded because the perturbation crossed a ReLU kink.
    pub rejected: usize,
    pub max_relative_error: f64,
}

fn loss_at(model: &SegModel, sample: &Sample) -> (f64, Vec<bool>) {
    let (logits, cache) = model.forward_tensor(&sample.input);
    (softmax_ce(&logits, &sample.labels, false).0, cache.relu_pattern())
}

fn analytic_gradient(model: &SegModel, sample: &Sample, corrupt_layer: Option<usize>) -> Vec<f64> {
    let mut grad = model.loss_and_grad(&sample.input, &sample.labels).1;
    if let Some(layer) = corrupt_layer {
        let spec = model.layers()[layer];
        grad[spec.weight_offset..spec.bias_offset].iter_mut().for_each(|g| *g *= 2.0);
    }
    grad
}

/// Analytic vs. numeric derivative at explicit parameter indices, with no
/// kink filtering.
pub fn probe_gradients(model: &SegModel, sample: &Sample, epsilon: f64, indices: &[usize]) -> Vec<Probe> {
    let grad = analytic_gradient(model, sample, None);
    let mut work = model.clone();
    indices
        .iter()
        .map(|&index| {
            let orig = work.params()[index];
            work.params_mut()[index] = orig + epsilon;
            let plus = loss_at(&work, sample).0;
            work.params_mut()[index] = orig - epsilon;
            let minus = loss_at(&work, sample).0;
            work.params_mut()[index] = orig;
            Probe { index, analytic: grad[index], numeric: (plus - minus) / (2.0 * epsilon) }
        })
        .collect()
}

/// Compares analytic and central-difference gradients on `probes` weights.
///
/// Probes are spread round-robin over the parameter tensors (each layer's
/// kernel and bias) with a random element inside each. A candidate whose
/// `+/- epsilon` perturbation changes the sign of any ReLU input is
/// rejected, so the finite difference never straddles a kink.
pub fn gradient_check(model: &SegModel, sample: &Sample, opts: &GradCheckOptions) -> GradCheck {
    let grad = analytic_gradient(model, sample, opts.corrupt_layer);
    let (_, base_pattern) = loss_at(model, sample);
    let tensors: Vec<(usize, usize)> = model
        .layers()
        .iter()
        .flat_map(|s| [(s.weight_offset, s.bias_offset), (s.bias_offset, s.bias_offset + s.shape.cout)])
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = model.clone();
    let mut probes = Vec::with_capacity(opts.probes);
    let mut rejected = 0;
    let max_attempts = opts.probes * 40;
    let mut attempt = 0;
    while probes.len() < opts.probes && attempt < max_attempts {
        let (lo, hi) = tensors[attempt % tensors.len()];
        attempt += 1;
        let index = rng.random_range(lo..hi);
        let orig = work.params()[index];
        work.params_mut()[index] = orig + opts.epsilon;
        let (plus, pattern_plus) = loss_at(&work, sample);
        work.params_mut()[index] = orig - opts.epsilon;
        let (minus, pattern_minus) = loss_at(&work, sample);
        work.params_mut()[index] = orig;
        if pattern_plus != base_pattern || pattern_minus != base_pattern {
            rejected += 1;
            continue;
        }
        probes.push(Probe { index, analytic: grad[index], numeric: (plus - minus) / (2.0 * opts.epsilon) });
    }
    let max_relative_error = probes.iter().map(Probe::relative_error).fold(0.0, f64::max);
    GradCheck { probes, rejected, max_relative_error }
}
