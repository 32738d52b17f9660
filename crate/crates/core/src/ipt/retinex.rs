//! Multi-scale retinex on the intensity channel with chromaticity kept.

use serde::{Deserialize, Serialize};

use super::blur::{gaussian_blur, Border};
use crate::error::{Error, Result};
use crate::image::{ImageBuffer, CANONICAL_SIDE};

const MIN_RANGE: f64 = 1e-9;

/// Retinex parameters. `scales` are Gaussian sigmas in pixels for a
/// 500-pixel image; they are scaled by `min(H, W) / 500` at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MsrParams {
    pub scales: Vec<f64>,
    pub weights: Vec<f64>,
    pub epsilon: f64,
    /// Percentiles of the retinex response mapped to 0 and 1.
    pub low_percentile: f64,
    pub high_percentile: f64,
}

impl Default for MsrParams {
    fn default() -> Self {
        Self {
            scales: vec![15.0, 80.0, 250.0],
            weights: vec![1.0 / 3.0; 3],
            epsilon: 1e-4,
            low_percentile: 1.0,
            high_percentile: 99.0,
        }
    }
}

impl MsrParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.scales.is_empty() || self.scales.len() != self.weights.len() {
            return bad(format!("{} scales vs {} weights", self.scales.len(), self.weights.len()));
        }
        if self.scales.iter().any(|s| !(*s > 0.0)) {
            return bad(format!("retinex sigmas must be positive: {:?}", self.scales));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("retinex weights sum to {sum}, not 1"));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("retinex epsilon must be positive: {}", self.epsilon));
        }
        if !(0.0..100.0).contains(&self.low_percentile) || !(self.low_percentile < self.high_percentile && self.high_percentile <= 100.0) {
            return bad(format!("bad percentiles {} / {}", self.low_percentile, self.high_percentile));
        }
        Ok(())
    }
}

/// Linear-interpolated percentile of an already sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn intensity_neutralize(image: &ImageBuffer, params: &MsrParams) -> Result<ImageBuffer> {
    let raw = intensity_neutralize_raw(image, params)?;
    ImageBuffer::from_raw_clamped(image.width(), image.height(), raw)
}

/// Retinex output before clamping.
///
/// `MSR = sum_k w_k (ln(I + eps) - ln(G_k * I + eps))`, stretched so its low
/// and high percentiles land on 0 and 1, gives the new intensity `I'`.
/// Every channel is multiplied by `I' / max(I, eps)`. A response range below
/// 1e-9 returns the input samples untouched.
pub fn intensity_neutralize_raw(image: &ImageBuffer, params: &MsrParams) -> Result<Vec<f64>> {
    params.validate()?;
    let (w, h) = (image.width(), image.height());
    let eps = params.epsilon;
    let intensity = image.intensity();
    let scale = w.min(h) as f64 / CANONICAL_SIDE as f64;

    let log_i: Vec<f64> = intensity.iter().map(|v| (v + eps).ln()).collect();
    let mut response = vec![0.0; intensity.len()];
    for (&sigma, &weight) in params.scales.iter().zip(&params.weights) {
        let surround = gaussian_blur(&intensity, w, h, sigma * scale, Border::Replicate);
        for ((r, li), g) in response.iter_mut().zip(&log_i).zip(&surround) {
            *r += weight * (li - (g + eps).ln());
        }
    }

    let mut sorted = response.clone();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile(&sorted, params.low_percentile);
    let hi = percentile(&sorted, params.high_percentile);
    if !(hi - lo >= MIN_RANGE) {
        return Ok(image.data().to_vec());
    }

    let mut out = image.data().to_vec();
    for ((px, &r), &i) in out.chunks_exact_mut(3).zip(&response).zip(&intensity) {
        let target = ((r - lo) / (hi - lo)).clamp(0.0, 1.0);
        let gain = target / i.max(eps);
        px.iter_mut().for_each(|c| *c *= gain);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, |x, y| {
            let shade = 0.3 + 0.6 * (x as f64 / w as f64);
            let t = ((x * 7 + y * 3) % 13) as f64 / 13.0;
            [shade * (0.5 + 0.3 * t), shade * 0.6, shade * (0.4 + 0.2 * (1.0 - t))]
        })
    }

    #[test]
    fn constant_image_returned_unchanged() {
        let img = ImageBuffer::filled(20, 20, [0.3, 0.4, 0.5]);
        assert_eq!(intensity_neutralize(&img, &MsrParams::default()).unwrap(), img);
    }

    #[test]
    fn grayscale_stays_grayscale() {
        let img = ImageBuffer::from_fn(32, 24, |x, y| [((x * y) % 29) as f64 / 28.0 * 0.8 + 0.1; 3]);
        let out = intensity_neutralize(&img, &MsrParams::default()).unwrap();
        for p in out.pixels() {
            assert!((p[0] - p[1]).abs() < 1e-6 && (p[1] - p[2]).abs() < 1e-6);
        }
    }

    #[test]
    fn chromaticity_preserved_before_clamp() {
        let img = textured(40, 30);
        let raw = intensity_neutralize_raw(&img, &MsrParams::default()).unwrap();
        for (p, q) in img.pixels().zip(raw.chunks_exact(3)) {
            let s = p[0] + p[1] + p[2];
            if s / 3.0 <= 0.01 {
                continue;
            }
            let t: f64 = q.iter().sum();
            if t == 0.0 {
                continue;
            }
            for c in 0..3 {
                assert!((p[c] / s - q[c] / t).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn params_validated() {
        let img = textured(8, 8);
        let mut p = MsrParams::default();
        p.weights = vec![0.5, 0.5, 0.5];
        assert!(intensity_neutralize(&img, &p).is_err());
        let mut p = MsrParams::default();
        p.scales = vec![15.0, 0.0, 250.0];
        assert!(intensity_neutralize(&img, &p).is_err());
        let mut p = MsrParams::default();
        p.scales.pop();
        assert!(intensity_neutralize(&img, &p).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 50.0), 2.0);
        assert_eq!(percentile(&v, 12.5), 0.5);
        assert_eq!(percentile(&v, 100.0), 4.0);
    }
}
