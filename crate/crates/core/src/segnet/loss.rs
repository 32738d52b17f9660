use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::mask::MaskSet;

/// Per-pixel softmax over the channel axis.
pub fn softmax(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    for px in out.data.chunks_exact_mut(logits.c) {
        let max = px.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in px.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        px.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Mean cross-entropy against integer labels, optionally with its gradient
/// w.r.t. the logits (`(softmax - onehot) / pixels`).
pub(crate) fn softmax_ce(logits: &Tensor, labels: &[u8], want_grad: bool) -> (f64, Option<Tensor>) {
    let n = logits.pixels() as f64;
    let mut loss = 0.0;
    let mut grad = want_grad.then(|| Tensor::zeros(logits.h, logits.w, logits.c));
    for (i, (px, &label)) in logits.data.chunks_exact(logits.c).zip(labels).enumerate() {
        let max = px.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = px.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - px[label as usize];
        if let Some(g) = grad.as_mut() {
            let dst = &mut g.data[i * logits.c..][..logits.c];
            for (k, (d, v)) in dst.iter_mut().zip(px).enumerate() {
                let p = (v - log_z).exp();
                *d = (p - if k == label as usize { 1.0 } else { 0.0 }) / n;
            }
        }
    }
    (loss / n, grad)
}

/// Mean over pixels of `-log softmax(logits)[true class]`; pixels with no
/// class set are background (label 0).
pub fn loss_ce(logits: &Tensor, masks: &MaskSet) -> Result<f64> {
    if logits.h != masks.height() || logits.w != masks.width() {
        return Err(Error::ShapeMismatch(format!(
            "logits {}x{} vs masks {}x{}",
            logits.w,
            logits.h,
            masks.width(),
            masks.height()
        )));
    }
    if logits.c < crate::mask::ClassId::ALL.len() + 1 {
        return Err(Error::ShapeMismatch(format!("{} logit channels cannot hold 5 classes", logits.c)));
    }
    Ok(softmax_ce(logits, &masks.labels(), false).0)
}
