//! The RGB raster every stage consumes and produces.

use std::path::Path;

use image::{ImageBuffer as Raster, Rgb};

use crate::error::{Error, Result};

/// Canonical network/input side length.
pub const CANONICAL_SIDE: usize = 500;

/// Row-major interleaved RGB image with samples in `[0, 1]`.
///
/// Construction validates the invariants, so any `ImageBuffer` in hand has
/// `data.len() == width * height * 3` and every sample finite and in range.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} RGB needs {} samples, got {}",
                width * height * 3,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    /// Builds an image from unconstrained samples, clamping into `[0, 1]`.
    /// NaN becomes 0.
    pub fn from_raw_clamped(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(width, height, data)
    }

    /// Builds an image from a per-pixel closure; values are clamped.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::from_raw_clamped(width, height, data).expect("from_fn with zero-sized image")
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// One channel as a plane of `width * height` values.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }

    /// Per-pixel intensity `(R + G + B) / 3`.
    pub fn intensity(&self) -> Vec<f64> {
        self.pixels().map(|[r, g, b]| (r + g + b) / 3.0).collect()
    }

    pub fn same_dims(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn dims_string(&self) -> String {
        format!("{}x{}", self.width, self.height)
    }

    /// Little-endian bytes of every sample; stable input for hashing.
    pub fn sample_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 8 + 16);
        out.extend_from_slice(&(self.width as u64).to_le_bytes());
        out.extend_from_slice(&(self.height as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Inverse of [`ImageBuffer::sample_bytes`].
    pub fn from_sample_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = || Error::InvalidImage(format!("{} bytes is not a valid sample dump", bytes.len()));
        if bytes.len() < 16 {
            return Err(bad());
        }
        let width = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
        let height = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if width.checked_mul(height).and_then(|n| n.checked_mul(24)) != Some(body.len()) {
            return Err(bad());
        }
        let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Self::new(width, height, data)
    }

    /// Snaps every sample to the nearest 8-bit level.
    pub fn quantized(&self) -> Self {
        let data = self.data.iter().map(|v| (v * 255.0).round() / 255.0).collect();
        Self { width: self.width, height: self.height, data }
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|v| (v * 255.0).round() as u8).collect()
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingImageFile(path.to_path_buf()));
        }
        let rgb = image::open(path)?.to_rgb8();
        Self::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let raster: Raster<Rgb<u8>, Vec<u8>> =
            Raster::from_raw(self.width as u32, self.height as u32, self.to_rgb8())
                .expect("buffer length checked at construction");
        raster.save(path.as_ref())?;
        Ok(())
    }
}

/// Resamples to `side x side`.
///
/// Each axis is handled independently: area averaging when that axis
/// shrinks, bilinear interpolation (pixel-centre aligned) when it grows and
/// a plain copy when it is unchanged. Aspect ratio is not preserved.
pub fn resize_canonical(image: &ImageBuffer, side: usize) -> Result<ImageBuffer> {
    if side == 0 {
        return Err(Error::InvalidParameter("resize side must be at least 1".into()));
    }
    resize(image, side, side)
}

pub fn resize(image: &ImageBuffer, out_w: usize, out_h: usize) -> Result<ImageBuffer> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidParameter(format!("cannot resize to {out_w}x{out_h}")));
    }
    if image.width == out_w && image.height == out_h {
        return Ok(image.clone());
    }
    let (w, h) = (image.width, image.height);
    let xs = axis_weights(w, out_w);
    let ys = axis_weights(h, out_h);

    // Horizontal pass: h rows of out_w pixels.
    let mut tmp = vec![0.0; h * out_w * 3];
    for y in 0..h {
        for (ox, taps) in xs.iter().enumerate() {
            let mut acc = [0.0; 3];
            for &(sx, wt) in taps {
                let p = image.pixel(sx, y);
                for c in 0..3 {
                    acc[c] += wt * p[c];
                }
            }
            tmp[(y * out_w + ox) * 3..][..3].copy_from_slice(&acc);
        }
    }
    let mut out = vec![0.0; out_h * out_w * 3];
    for (oy, taps) in ys.iter().enumerate() {
        for ox in 0..out_w {
            let mut acc = [0.0; 3];
            for &(sy, wt) in taps {
                let i = (sy * out_w + ox) * 3;
                for c in 0..3 {
                    acc[c] += wt * tmp[i + c];
                }
            }
            out[(oy * out_w + ox) * 3..][..3].copy_from_slice(&acc);
        }
    }
    ImageBuffer::from_raw_clamped(out_w, out_h, out)
}

/// Source taps `(index, weight)` for every destination sample on one axis.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    if src == dst {
        return (0..dst).map(|i| vec![(i, 1.0)]).collect();
    }
    if dst < src {
        // Box filter: destination i covers [i*s, (i+1)*s) in source units.
        let scale = src as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let lo = i as f64 * scale;
                let hi = lo + scale;
                let first = lo.floor() as usize;
                let last = (hi.ceil() as usize).min(src);
                (first..last)
                    .filter_map(|s| {
                        let overlap = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                        (overlap > 0.0).then_some((s, overlap / scale))
                    })
                    .collect()
            })
            .collect()
    } else {
        let scale = src as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let x0 = pos.floor() as usize;
                let x1 = (x0 + 1).min(src - 1);
                let f = pos - x0 as f64;
                if f == 0.0 || x0 == x1 {
                    vec![(x0, 1.0)]
                } else {
                    vec![(x0, 1.0 - f), (x1, f)]
                }
            })
            .collect()
    }
}
