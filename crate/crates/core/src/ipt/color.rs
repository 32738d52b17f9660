//! Von Kries chromatic adaptation in Hunt-Pointer-Estevez cone space.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Linear sRGB (D65) to CIE XYZ.
pub const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

/// Hunt-Pointer-Estevez XYZ to LMS.
pub const HPE_XYZ_TO_LMS: [[f64; 3]; 3] = [
    [0.389_71, 0.688_98, -0.078_68],
    [-0.229_81, 1.183_40, 0.046_41],
    [0.0, 0.0, 1.0],
];

const MIN_LMS: f64 = 1e-9;

/// Illuminant colour expressed in linear RGB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhitePoint {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl WhitePoint {
    /// sRGB primaries are defined relative to D65, so D65 is `(1, 1, 1)`.
    pub const D65: WhitePoint = WhitePoint { r: 1.0, g: 1.0, b: 1.0 };

    pub fn new(r: f64, g: f64, b: f64) -> Result<Self> {
        let w = WhitePoint { r, g, b };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.r, self.g, self.b].iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("white point components must be positive: {self:?}")))
        }
    }

    fn vector(self) -> Vector3<f64> {
        Vector3::new(self.r, self.g, self.b)
    }
}

impl Default for WhitePoint {
    fn default() -> Self {
        Self::D65
    }
}

/// Source illuminant: estimated from the image or given explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhiteSource {
    /// Gray-world: mean of the linear RGB samples.
    #[default]
    Auto,
    Fixed(WhitePoint),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ColorParams {
    pub source: WhiteSource,
    pub target: WhitePoint,
}

impl ColorParams {
    pub fn validate(&self) -> Result<()> {
        if let WhiteSource::Fixed(w) = self.source {
            w.validate()?;
        }
        self.target.validate()
    }
}

pub fn srgb_decode(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

pub fn srgb_encode(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn rgb_to_lms() -> Matrix3<f64> {
    let m = |a: [[f64; 3]; 3]| Matrix3::from_fn(|i, j| a[i][j]);
    m(HPE_XYZ_TO_LMS) * m(SRGB_TO_XYZ)
}

/// Gray-world estimate: per-channel mean of the linear RGB samples.
pub fn gray_world(image: &ImageBuffer) -> [f64; 3] {
    let mut sum = [0.0; 3];
    for px in image.pixels() {
        for c in 0..3 {
            sum[c] += srgb_decode(px[c]);
        }
    }
    sum.map(|s| s / image.pixel_count() as f64)
}

/// The linear-RGB 3x3 transform adapting `source` to `target`.
pub fn adaptation_matrix(source: [f64; 3], target: WhitePoint) -> Result<Matrix3<f64>> {
    target.validate()?;
    let to_lms = rgb_to_lms();
    let lms_s = to_lms * Vector3::from(source);
    let lms_t = to_lms * target.vector();
    if let Some(bad) = lms_s.iter().find(|v| !(**v >= MIN_LMS)) {
        return Err(Error::DegenerateWhite(*bad));
    }
    let gain = Matrix3::from_diagonal(&lms_t.component_div(&lms_s));
    let from_lms = to_lms.try_inverse().expect("HPE * sRGB matrix is invertible");
    Ok(from_lms * gain * to_lms)
}

/// Gamma-decodes, adapts `source_white` to `target_white` by diagonal
/// scaling in LMS, re-encodes and clamps.
pub fn color_neutralize(image: &ImageBuffer, source_white: WhiteSource, target_white: WhitePoint) -> Result<ImageBuffer> {
    let source = match source_white {
        WhiteSource::Auto => gray_world(image),
        WhiteSource::Fixed(w) => {
            w.validate()?;
            [w.r, w.g, w.b]
        }
    };
    let m = adaptation_matrix(source, target_white)?;
    let mut out = Vec::with_capacity(image.data().len());
    for px in image.pixels() {
        let lin = Vector3::new(srgb_decode(px[0]), srgb_decode(px[1]), srgb_decode(px[2]));
        let adapted = m * lin;
        out.extend(adapted.iter().map(|v| srgb_encode(v.clamp(0.0, 1.0))));
    }
    ImageBuffer::from_raw_clamped(image.width(), image.height(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_image() -> ImageBuffer {
        ImageBuffer::from_fn(16, 12, |x, y| [0.1 + 0.05 * x as f64, 0.2 + 0.06 * y as f64, 0.7 - 0.02 * x as f64])
    }

    #[test]
    fn gamma_round_trip() {
        for i in 0..=100 {
            let c = i as f64 / 100.0;
            assert!((srgb_encode(srgb_decode(c)) - c).abs() < 1e-12);
        }
    }

    #[test]
    fn same_white_is_identity() {
        let img = sample_image();
        let w = WhitePoint::new(0.8, 0.9, 0.7).unwrap();
        let out = color_neutralize(&img, WhiteSource::Fixed(w), w).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn source_white_maps_to_target_white() {
        let src = WhitePoint::new(0.6, 0.5, 0.3).unwrap();
        let tgt = WhitePoint::new(0.7, 0.75, 0.8).unwrap();
        let px = [srgb_encode(src.r), srgb_encode(src.g), srgb_encode(src.b)];
        let img = ImageBuffer::filled(2, 2, px);
        let out = color_neutralize(&img, WhiteSource::Fixed(src), tgt).unwrap();
        let p = out.pixel(1, 1);
        let lin = [srgb_decode(p[0]), srgb_decode(p[1]), srgb_decode(p[2])];
        assert!((lin[0] - tgt.r).abs() < 1e-6);
        assert!((lin[1] - tgt.g).abs() < 1e-6);
        assert!((lin[2] - tgt.b).abs() < 1e-6);
    }

    #[test]
    fn gray_world_on_balanced_image_is_identity() {
        // Linear mean of each channel equals 0.5; adapt to (0.5, 0.5, 0.5).
        let a = srgb_encode(0.3);
        let b = srgb_encode(0.7);
        let img = ImageBuffer::from_fn(4, 4, |x, _| if x % 2 == 0 { [a, b, a] } else { [b, a, b] });
        let tgt = WhitePoint::new(0.5, 0.5, 0.5).unwrap();
        let out = color_neutralize(&img, WhiteSource::Auto, tgt).unwrap();
        for (p, q) in out.data().iter().zip(img.data()) {
            assert!((p - q).abs() < 1e-6);
        }
    }

    #[test]
    fn black_image_has_degenerate_white() {
        let img = ImageBuffer::filled(3, 3, [0.0; 3]);
        assert!(matches!(color_neutralize(&img, WhiteSource::Auto, WhitePoint::D65), Err(Error::DegenerateWhite(_))));
    }

    #[test]
    fn non_positive_white_rejected() {
        assert!(WhitePoint::new(0.0, 1.0, 1.0).is_err());
        let bad = WhitePoint { r: -1.0, g: 1.0, b: 1.0 };
        let img = sample_image();
        assert!(color_neutralize(&img, WhiteSource::Fixed(bad), WhitePoint::D65).is_err());
    }
}
