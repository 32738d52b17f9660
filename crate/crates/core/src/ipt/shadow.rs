use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::blur::{gaussian_blur, Border};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Luminance floor used when dividing by the blurred illumination estimate.
const LUMA_FLOOR: f64 = 1e-3;

/// Where shadow-free images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShadowBackend {
    /// Precomputed shadow-free images stored as `<directory>/<image_id>.png`.
    External { directory: PathBuf },
    /// Divide luminance by its large-scale Gaussian blur.
    Classic { sigma_fraction: f64 },
}

impl Default for ShadowBackend {
    fn default() -> Self {
        ShadowBackend::Classic { sigma_fraction: 0.25 }
    }
}

impl ShadowBackend {
    pub fn validate(&self) -> Result<()> {
        match self {
            ShadowBackend::Classic { sigma_fraction } if !(*sigma_fraction > 0.0 && *sigma_fraction <= 1.0) => Err(
                Error::InvalidParameter(format!("sigma_fraction {sigma_fraction} outside (0, 1]")),
            ),
            _ => Ok(()),
        }
    }
}

pub fn shadow_removal(image: &ImageBuffer, backend: &ShadowBackend, image_id: &str) -> Result<ImageBuffer> {
    backend.validate()?;
    match backend {
        ShadowBackend::External { directory } => {
            let path = directory.join(format!("{image_id}.png"));
            if !path.is_file() {
                return Err(Error::MissingExternal { image_id: image_id.to_string(), path });
            }
            let stored = ImageBuffer::load_png(&path)?;
            if !stored.same_dims(image) {
                return Err(Error::DimensionMismatch { expected: image.dims_string(), actual: stored.dims_string() });
            }
            Ok(stored)
        }
        ShadowBackend::Classic { sigma_fraction } => {
            let raw = classic_shadow_removal_raw(image, *sigma_fraction);
            ImageBuffer::from_raw_clamped(image.width(), image.height(), raw)
        }
    }
}

/// Classic shadow flattening before the final clamp.
///
/// Luminance `L = (R+G+B)/3` is divided by its Gaussian blur at
/// `sigma_fraction * min(H, W)` (point-reflected borders), rescaled so the
/// mean luminance is unchanged, and the ratio `L'/L` is applied to all three
/// channels so per-pixel chromaticity is untouched.
pub fn classic_shadow_removal_raw(image: &ImageBuffer, sigma_fraction: f64) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let luma = image.intensity();
    let sigma = sigma_fraction * w.min(h) as f64;
    let blurred = gaussian_blur(&luma, w, h, sigma, Border::PointReflect);

    let ratio: Vec<f64> = luma.iter().zip(&blurred).map(|(l, b)| l / b.max(LUMA_FLOOR)).collect();
    let n = luma.len() as f64;
    let mean_luma = luma.iter().sum::<f64>() / n;
    let mean_ratio = ratio.iter().sum::<f64>() / n;
    let rescale = if mean_ratio > 0.0 { mean_luma / mean_ratio } else { 1.0 };

    let mut out = image.data().to_vec();
    for ((px, &l), &r) in out.chunks_exact_mut(3).zip(&luma).zip(&ratio) {
        if l > LUMA_FLOOR {
            let gain = r * rescale / l;
            px.iter_mut().for_each(|c| *c *= gain);
        }
    }
    out
}
