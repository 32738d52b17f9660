use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{masks_from_logits, SegModel};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::mask::{ClassId, MaskSet};
use crate::metrics::{mean_iou, MeanIoU};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Rescale the batch gradient to at most this L2 norm; `None` disables.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-2, momentum: 0.9, steps: 200, batch_size: 4, seed: 0, clip_norm: Some(1.0) }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip norm must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

/// Image and ground truth prepared for the network.
#[derive(Debug, Clone)]
pub struct Sample {
    pub input: Tensor,
    pub labels: Vec<u8>,
    pub masks: MaskSet,
}

impl Sample {
    pub fn new(image: &ImageBuffer, masks: &MaskSet) -> Result<Self> {
        if image.width() != masks.width() || image.height() != masks.height() {
            return Err(Error::DimensionMismatch {
                expected: image.dims_string(),
                actual: format!("{}x{}", masks.width(), masks.height()),
            });
        }
        Ok(Self { input: Tensor::from_image(image), labels: masks.labels(), masks: masks.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean batch loss of every step.
    pub losses: Vec<f64>,
    /// Validation mean IoU after every epoch (and after a trailing partial
    /// epoch).
    pub val_mean_iou: Vec<f64>,
    /// Index into `val_mean_iou` of the kept weights.
    pub best_epoch: usize,
    pub best_val_mean_iou: f64,
    /// Mean training loss over the epoch that produced the kept weights.
    pub loss_at_best: f64,
}

/// One SGD-with-momentum step on a batch (gradient clipped to
/// `tc.clip_norm`); returns the mean batch loss.
fn sgd_step(model: &mut SegModel, velocity: &mut [f64], batch: &[&Sample], tc: &TrainConfig) -> f64 {
    let mut grad = vec![0.0; model.param_count()];
    let mut loss = 0.0;
    for s in batch {
        let (l, g) = model.loss_and_grad(&s.input, &s.labels);
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let mut scale = 1.0 / batch.len() as f64;
    if let Some(clip) = tc.clip_norm {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt() * scale;
        if norm > clip {
            scale *= clip / norm;
        }
    }
    let loss_scale = 1.0 / batch.len() as f64;
    for ((p, v), g) in model.params_mut().iter_mut().zip(velocity.iter_mut()).zip(&grad) {
        *v = tc.momentum * *v + g * scale;
        *p -= tc.learning_rate * *v;
    }
    loss * loss_scale
}

/// Predicted masks for every sample, in order.
pub fn predict_samples(model: &SegModel, samples: &[Sample]) -> Result<Vec<MaskSet>> {
    samples.iter().map(|s| masks_from_logits(&model.forward_tensor(&s.input).0)).collect()
}

/// Mean IoU over all four classes.
pub fn evaluate(model: &SegModel, samples: &[Sample]) -> Result<MeanIoU> {
    let preds = predict_samples(model, samples)?;
    let truths: Vec<MaskSet> = samples.iter().map(|s| s.masks.clone()).collect();
    mean_iou(&preds, &truths, &ClassId::ALL)
}

fn val_score(model: &SegModel, val: &[Sample]) -> Result<f64> {
    match evaluate(model, val) {
        Ok(m) => Ok(m.mean),
        Err(Error::EmptyEvaluation) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Mini-batch SGD with momentum. Batches are drawn from a per-epoch
/// shuffle seeded by `tc.seed`; validation runs at every epoch end and the
/// weights with the best validation mean IoU (earliest on ties) are
/// returned.
pub fn train(model: SegModel, train_set: &[Sample], val_set: &[Sample], tc: &TrainConfig) -> Result<(SegModel, TrainHistory)> {
    tc.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidParameter("training and validation sets must be non-empty".into()));
    }
    let side = model.config().input_side;
    if let Some(s) = train_set.iter().chain(val_set).find(|s| s.input.h != side || s.input.w != side) {
        return Err(Error::DimensionMismatch { expected: format!("{side}x{side}"), actual: format!("{}x{}", s.input.w, s.input.h) });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut model = model;
    let mut velocity = vec![0.0; model.param_count()];
    let mut history = TrainHistory { best_val_mean_iou: f64::NEG_INFINITY, ..Default::default() };
    let mut best = model.clone();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cursor = order.len();
    let mut epoch_losses = Vec::new();

    for step in 0..tc.steps {
        if cursor >= order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + tc.batch_size).min(order.len());
        let batch: Vec<&Sample> = order[cursor..end].iter().map(|&i| &train_set[i]).collect();
        cursor = end;

        let loss = sgd_step(&mut model, &mut velocity, &batch, tc);
        if !loss.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteLoss { step, loss });
        }
        history.losses.push(loss);
        epoch_losses.push(loss);

        if cursor >= order.len() || step + 1 == tc.steps {
            let score = val_score(&model, val_set)?;
            history.val_mean_iou.push(score);
            if score > history.best_val_mean_iou {
                history.best_val_mean_iou = score;
                history.best_epoch = history.val_mean_iou.len() - 1;
                history.loss_at_best = epoch_losses.iter().sum::<f64>() / epoch_losses.len() as f64;
                best = model.clone();
            }
            epoch_losses.clear();
        }
    }
    Ok((best, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segnet::{build_model, SegConfig};

    fn toy_samples(n: usize, side: usize) -> Vec<Sample> {
        (0..n)
            .map(|k| {
                let img = ImageBuffer::from_fn(side, side, |x, y| {
                    let inside = x >= 2 + k && x < 6 + k && y >= 2 && y < 6;
                    if inside {
                        [0.9, 0.8, 0.7]
                    } else {
                        [0.2, 0.25, 0.3]
                    }
                });
                let mut m = MaskSet::empty(side, side);
                for y in 2..6 {
                    for x in 2 + k..6 + k {
                        m.plane_mut(ClassId::Dent).set(x, y, true);
                    }
                }
                Sample::new(&img, &m).unwrap()
            })
            .collect()
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { steps: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn single_step_history() {
        let cfg = SegConfig { input_side: 8, base_channels: 2, depth: 1, seed: 1, ..Default::default() };
        let data = toy_samples(2, 8);
        let tc = TrainConfig { steps: 1, batch_size: 1, ..Default::default() };
        let (_, h) = train(build_model(&cfg).unwrap(), &data, &data, &tc).unwrap();
        assert_eq!(h.losses.len(), 1);
        assert_eq!(h.val_mean_iou.len(), 1);
        assert!(h.losses.iter().chain(&h.val_mean_iou).all(|v| v.is_finite()));
    }

    #[test]
    fn training_is_bit_reproducible() {
        let cfg = SegConfig { input_side: 8, base_channels: 2, depth: 1, seed: 5, ..Default::default() };
        let data = toy_samples(3, 8);
        let tc = TrainConfig { steps: 7, batch_size: 2, seed: 9, ..Default::default() };
        let a = train(build_model(&cfg).unwrap(), &data, &data, &tc).unwrap();
        let b = train(build_model(&cfg).unwrap(), &data, &data, &tc).unwrap();
        assert_eq!(a.0.params(), b.0.params());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = SegConfig { input_side: 8, base_channels: 2, depth: 1, seed: 5, ..Default::default() };
        let data = toy_samples(2, 8);
        let tc = TrainConfig { steps: 50, batch_size: 2, learning_rate: 1e300, clip_norm: None, ..Default::default() };
        let err = train(build_model(&cfg).unwrap(), &data, &data, &tc).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. }), "{err}");
    }

    #[test]
    fn empty_sets_rejected() {
        let cfg = SegConfig { input_side: 8, base_channels: 2, depth: 1, ..Default::default() };
        let data = toy_samples(1, 8);
        assert!(train(build_model(&cfg).unwrap(), &[], &data, &TrainConfig::default()).is_err());
        assert!(train(build_model(&cfg).unwrap(), &data, &[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn small_step_rarely_increases_loss() {
        let data = toy_samples(1, 8);
        let s = &data[0];
        let tc = TrainConfig { learning_rate: 1e-3, momentum: 0.0, steps: 1, batch_size: 1, seed: 0, clip_norm: None };
        let mut increased = 0;
        for seed in 0..100 {
            let cfg = SegConfig { input_side: 8, base_channels: 2, depth: 1, seed, ..Default::default() };
            let mut model = build_model(&cfg).unwrap();
            let before = model.loss_and_grad(&s.input, &s.labels).0;
            let mut v = vec![0.0; model.param_count()];
            sgd_step(&mut model, &mut v, &[s], &tc);
            let after = model.loss_and_grad(&s.input, &s.labels).0;
            if after > before {
                increased += 1;
            }
        }
        assert!(increased <= 5, "loss increased in {increased} of 100 trials");
    }
}
