use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::loss::softmax_ce;
use super::ops::{self, ConvShape};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::mask::MaskSet;

/// Number of output classes: background plus the four [`ClassId`]s.
///
/// [`ClassId`]: crate::mask::ClassId
pub const NUM_CLASSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegConfig {
    pub input_side: usize,
    pub base_channels: usize,
    pub depth: usize,
    pub classes: usize,
    pub seed: u64,
}

impl Default for SegConfig {
    fn default() -> Self {
        Self { input_side: 64, base_channels: 8, depth: 3, classes: NUM_CLASSES, seed: 0 }
    }
}

impl SegConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.depth < 1 {
            return bad("depth must be at least 1".into());
        }
        if self.depth > 16 || self.input_side == 0 || self.input_side % (1 << self.depth) != 0 {
            return bad(format!("input side {} not divisible by 2^{}", self.input_side, self.depth));
        }
        if self.base_channels < 1 {
            return bad("base_channels must be at least 1".into());
        }
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        Ok(())
    }

    /// Channels at encoder level `i`.
    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

/// One convolution and where its parameters live in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub shape: ConvShape,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerSpec {
    pub fn param_len(&self) -> usize {
        self.shape.weight_len() + self.shape.cout
    }
}

/// Layer order in the parameter vector:
///
/// ```text
/// stem                               3 -> C0, 3x3
/// res_a0, res_b0                     C0 -> C0, 3x3
/// for i in 1..=depth:
///     down_i                         C(i-1) -> Ci, 3x3 (after 2x2 avg pool)
///     res_ai, res_bi                 Ci -> Ci, 3x3
/// for j in (0..depth).rev():
///     fuse_j                         C(j+1) + Cj -> Cj, 3x3 (upsampled ++ skip)
///     refine_j                       Cj -> Cj, 3x3
/// head                               C0 -> classes, 1x1
/// ```
pub fn layer_shapes(cfg: &SegConfig) -> Vec<ConvShape> {
    let c = |i| cfg.channels(i);
    let conv3 = |cin, cout| ConvShape { k: 3, cin, cout };
    let mut shapes = vec![conv3(3, c(0)), conv3(c(0), c(0)), conv3(c(0), c(0))];
    for i in 1..=cfg.depth {
        shapes.extend([conv3(c(i - 1), c(i)), conv3(c(i), c(i)), conv3(c(i), c(i))]);
    }
    for j in (0..cfg.depth).rev() {
        shapes.extend([conv3(c(j + 1) + c(j), c(j)), conv3(c(j), c(j))]);
    }
    shapes.push(ConvShape { k: 1, cin: c(0), cout: cfg.classes });
    shapes
}

fn enc_first(level: usize) -> usize {
    if level == 0 {
        0
    } else {
        3 * level
    }
}

fn enc_res(level: usize) -> (usize, usize) {
    (3 * level + 1, 3 * level + 2)
}

fn dec_layers(depth: usize, j: usize) -> (usize, usize) {
    let base = 3 + 3 * depth + 2 * (depth - 1 - j);
    (base, base + 1)
}

fn head_layer(depth: usize) -> usize {
    3 + 5 * depth
}

/// Residual-encoder / skip-decoder segmentation network with all
/// parameters in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SegModel {
    config: SegConfig,
    layers: Vec<LayerSpec>,
    params: Vec<f64>,
}

impl SegModel {
    fn layout(config: &SegConfig) -> (Vec<LayerSpec>, usize) {
        let mut off = 0;
        let layers = layer_shapes(config)
            .into_iter()
            .map(|shape| {
                let spec = LayerSpec { shape, weight_offset: off, bias_offset: off + shape.weight_len() };
                off += spec.param_len();
                spec
            })
            .collect();
        (layers, off)
    }

    /// Rebuilds a model from a parameter vector (e.g. a checkpoint).
    pub fn from_params(config: SegConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let (layers, total) = Self::layout(&config);
        if params.len() != total {
            return Err(Error::ShapeMismatch(format!("expected {total} parameters, got {}", params.len())));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite parameter".into()));
        }
        Ok(Self { config, layers, params })
    }

    pub fn config(&self) -> &SegConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn weight(&self, layer: usize) -> &[f64] {
        let s = &self.layers[layer];
        &self.params[s.weight_offset..s.bias_offset]
    }

    fn bias(&self, layer: usize) -> &[f64] {
        let s = &self.layers[layer];
        &self.params[s.bias_offset..s.bias_offset + s.shape.cout]
    }

    fn conv(&self, layer: usize, x: &Tensor) -> Tensor {
        ops::conv_forward(x, self.layers[layer].shape, self.weight(layer), self.bias(layer))
    }

    fn conv_back(&self, layer: usize, x: &Tensor, dy: &Tensor, grad: &mut [f64], need_dx: bool) -> Option<Tensor> {
        let s = self.layers[layer];
        let (dw, rest) = grad[s.weight_offset..].split_at_mut(s.shape.weight_len());
        ops::conv_backward(x, s.shape, self.weight(layer), dy, dw, &mut rest[..s.shape.cout], need_dx)
    }

    fn check_input(&self, image: &ImageBuffer) -> Result<()> {
        let side = self.config.input_side;
        if image.width() != side || image.height() != side {
            return Err(Error::DimensionMismatch { expected: format!("{side}x{side}"), actual: image.dims_string() });
        }
        Ok(())
    }

    pub(crate) fn forward_tensor(&self, x: &Tensor) -> (Tensor, ForwardCache) {
        let depth = self.config.depth;
        let mut enc: Vec<EncoderCache> = Vec::with_capacity(depth + 1);
        for level in 0..=depth {
            let input = if level == 0 { x.clone() } else { ops::avg_pool2(&enc[level - 1].out) };
            let first_pre = self.conv(enc_first(level), &input);
            let first = ops::relu(&first_pre);
            let (ra, rb) = enc_res(level);
            let res_pre = self.conv(ra, &first);
            let res = ops::relu(&res_pre);
            let sum_pre = ops::add(&first, &self.conv(rb, &res));
            let out = ops::relu(&sum_pre);
            enc.push(EncoderCache { input, first_pre, first, res_pre, res, sum_pre, out });
        }

        let mut dec = Vec::with_capacity(depth);
        let mut current = enc[depth].out.clone();
        for j in (0..depth).rev() {
            let cat = ops::concat(&ops::upsample2(&current), &enc[j].out);
            let (fuse, refine) = dec_layers(depth, j);
            let fuse_pre = self.conv(fuse, &cat);
            let fused = ops::relu(&fuse_pre);
            let refine_pre = self.conv(refine, &fused);
            current = ops::relu(&refine_pre);
            dec.push(DecoderCache { level: j, cat, fuse_pre, fused, refine_pre });
        }
        let logits = self.conv(head_layer(depth), &current);
        (logits, ForwardCache { enc, dec, head_in: current })
    }

    /// Gradient of the loss w.r.t. every parameter given `dlogits`.
    pub(crate) fn backward(&self, cache: &ForwardCache, dlogits: &Tensor) -> Vec<f64> {
        let depth = self.config.depth;
        let mut grad = vec![0.0; self.params.len()];
        let mut d_current = self.conv_back(head_layer(depth), &cache.head_in, dlogits, &mut grad, true).expect("dx");

        // Gradients flowing into each encoder output from the skips.
        let mut d_enc_out: Vec<Option<Tensor>> = vec![None; depth + 1];
        for dc in cache.dec.iter().rev() {
            let j = dc.level;
            let (fuse, refine) = dec_layers(depth, j);
            let d_refine_pre = ops::relu_backward(&dc.refine_pre, &d_current);
            let d_fused = self.conv_back(refine, &dc.fused, &d_refine_pre, &mut grad, true).expect("dx");
            let d_fuse_pre = ops::relu_backward(&dc.fuse_pre, &d_fused);
            let d_cat = self.conv_back(fuse, &dc.cat, &d_fuse_pre, &mut grad, true).expect("dx");
            let (d_up, d_skip) = ops::split(&d_cat, self.config.channels(j + 1));
            d_enc_out[j] = Some(d_skip);
            d_current = ops::upsample2_backward(&d_up);
        }
        // d_current is now the gradient at the bottleneck output.
        let mut d_out = d_current;
        for level in (0..=depth).rev() {
            let e = &cache.enc[level];
            if level < depth {
                if let Some(skip) = &d_enc_out[level] {
                    ops::add_assign(&mut d_out, skip);
                }
            }
            let (ra, rb) = enc_res(level);
            let d_sum = ops::relu_backward(&e.sum_pre, &d_out);
            let d_res = self.conv_back(rb, &e.res, &d_sum, &mut grad, true).expect("dx");
            let d_res_pre = ops::relu_backward(&e.res_pre, &d_res);
            let mut d_first = self.conv_back(ra, &e.first, &d_res_pre, &mut grad, true).expect("dx");
            ops::add_assign(&mut d_first, &d_sum);
            let d_first_pre = ops::relu_backward(&e.first_pre, &d_first);
            let d_input = self.conv_back(enc_first(level), &e.input, &d_first_pre, &mut grad, level > 0);
            if let Some(d_in) = d_input {
                d_out = ops::avg_pool2_backward(&d_in);
            }
        }
        grad
    }

    /// Loss and gradient for one sample.
    pub(crate) fn loss_and_grad(&self, x: &Tensor, labels: &[u8]) -> (f64, Vec<f64>) {
        let (logits, cache) = self.forward_tensor(x);
        let (loss, dlogits) = softmax_ce(&logits, labels, true);
        (loss, self.backward(&cache, &dlogits.expect("gradient requested")))
    }

    /// Per-pixel class logits, `H x W x classes`.
    pub fn forward(&self, image: &ImageBuffer) -> Result<Tensor> {
        self.check_input(image)?;
        Ok(self.forward_tensor(&Tensor::from_image(image)).0)
    }

    /// Argmax labelling; ties go to the lowest index, so background wins
    /// ties.
    pub fn predict(&self, image: &ImageBuffer) -> Result<MaskSet> {
        let logits = self.forward(image)?;
        masks_from_logits(&logits)
    }
}

/// Argmax over the class axis; label 0 is background.
pub fn masks_from_logits(logits: &Tensor) -> Result<MaskSet> {
    if logits.c != NUM_CLASSES {
        return Err(Error::ShapeMismatch(format!("expected {NUM_CLASSES} logit channels, got {}", logits.c)));
    }
    let labels: Vec<u8> = logits
        .data
        .chunks_exact(logits.c)
        .map(|px| {
            let mut best = 0;
            for k in 1..px.len() {
                if px[k] > px[best] {
                    best = k;
                }
            }
            best as u8
        })
        .collect();
    MaskSet::from_labels(logits.w, logits.h, &labels)
}

pub(crate) struct EncoderCache {
    input: Tensor,
    first_pre: Tensor,
    first: Tensor,
    res_pre: Tensor,
    res: Tensor,
    sum_pre: Tensor,
    out: Tensor,
}

pub(crate) struct DecoderCache {
    level: usize,
    cat: Tensor,
    fuse_pre: Tensor,
    fused: Tensor,
    refine_pre: Tensor,
}

pub(crate) struct ForwardCache {
    enc: Vec<EncoderCache>,
    dec: Vec<DecoderCache>,
    head_in: Tensor,
}

impl ForwardCache {
    /// Sign pattern of every ReLU input; equal patterns mean no kink was
    /// crossed.
    pub(crate) fn relu_pattern(&self) -> Vec<bool> {
        let mut bits = Vec::new();
        let mut push = |t: &Tensor| bits.extend(t.data.iter().map(|v| *v > 0.0));
        for e in &self.enc {
            push(&e.first_pre);
            push(&e.res_pre);
            push(&e.sum_pre);
        }
        for d in &self.dec {
            push(&d.fuse_pre);
            push(&d.refine_pre);
        }
        bits
    }
}

/// Deterministic He (fan-in) normal initialization; biases start at zero.
pub fn build_model(config: &SegConfig) -> Result<SegModel> {
    config.validate()?;
    let (layers, total) = SegModel::layout(config);
    let mut params = vec![0.0; total];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for spec in &layers {
        let std = (2.0 / spec.shape.fan_in() as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        for w in &mut params[spec.weight_offset..spec.bias_offset] {
            *w = normal.sample(&mut rng);
        }
    }
    Ok(SegModel { config: *config, layers, params })
}
