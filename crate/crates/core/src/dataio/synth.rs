//! Deterministic synthetic window-frame defect images.
//!
//! Each image is a wall background with a rectangular frame band around a
//! dark glass pane. Defects are painted onto the band and their masks mark
//! exactly the pixels they changed:
//!
//! - scratch: a 1-2 px polyline shifted brighter or darker,
//! - dent: an ellipse with radial multiplicative darkening,
//! - bend: a sheared brightness ridge running across the band.
//!
//! The nuisances then applied (illumination gradient, cast shadow, colour
//! cast, contrast compression, noise) are the ones the preprocessing stages
//! are meant to undo. Output is quantized to 8 bits so it survives a PNG
//! round trip unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::raster::rasterize;
use super::{DataItem, Dataset};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::image::ImageBuffer;
use crate::mask::{BinaryPlane, ClassId, MaskSet};

/// Per-image probability of containing each defect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectRates {
    pub scratch: f64,
    pub dent: f64,
    pub bend: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub count: usize,
    pub side: usize,
    pub rates: DefectRates,
    /// Largest fractional darkening across the illumination gradient.
    pub gradient_amplitude: f64,
    pub shadow_probability: f64,
    /// Multiplicative shadow factor range, within [0.4, 0.7].
    pub shadow_factor: [f64; 2],
    /// Per-channel gains are drawn from `[1 - color_cast, 1 + color_cast]`.
    pub color_cast: f64,
    pub noise_sigma: f64,
    /// Output dynamic range; 1 leaves contrast untouched.
    pub contrast: f64,
    /// Accepted scratch size in pixels, inclusive.
    pub scratch_pixels: [usize; 2],
    pub seed: u64,
}

impl Default for SynthSpec {
    /// The desk-scale corpus: 40 low-contrast, often shadowed 64x64 images.
    fn default() -> Self {
        Self {
            count: 40,
            side: 64,
            rates: DefectRates { scratch: 0.8, dent: 0.7, bend: 0.7 },
            gradient_amplitude: 0.4,
            shadow_probability: 0.6,
            shadow_factor: [0.4, 0.7],
            color_cast: 0.15,
            noise_sigma: 0.01,
            contrast: 0.45,
            scratch_pixels: [8, 96],
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.side < 32 {
            return bad(format!("side must be at least 32, got {}", self.side));
        }
        let DefectRates { scratch, dent, bend } = self.rates;
        if ![scratch, dent, bend, self.gradient_amplitude, self.shadow_probability].into_iter().all(unit) {
            return bad("defect rates, gradient amplitude and shadow probability must be in [0, 1]".into());
        }
        let [lo, hi] = self.shadow_factor;
        if !(0.4 <= lo && lo <= hi && hi <= 0.7) {
            return bad(format!("shadow factor range {:?} must lie within [0.4, 0.7]", self.shadow_factor));
        }
        if !(0.0..=0.5).contains(&self.color_cast) {
            return bad(format!("color cast must be in [0, 0.5], got {}", self.color_cast));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma <= 0.5) {
            return bad(format!("noise sigma must be in [0, 0.5], got {}", self.noise_sigma));
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return bad(format!("contrast must be in (0, 1], got {}", self.contrast));
        }
        let [smin, smax] = self.scratch_pixels;
        if smin == 0 || smin > smax {
            return bad(format!("scratch pixel bounds {:?} must satisfy 1 <= min <= max", self.scratch_pixels));
        }
        Ok(())
    }
}

/// Generates `spec.count` images. Image `i` draws from its own ChaCha
/// stream `(seed, i)`, so the output does not depend on thread count.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let items = (0..spec.count).into_par_iter().map(|i| render(spec, i)).collect();
    Dataset::new(items, Dataset::default_classes())
}

/// The part of the frame band along one side of the window.
#[derive(Debug, Clone, Copy)]
struct Segment {
    /// Pixel rectangle `[x0, x1) x [y0, y1)`.
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    horizontal: bool,
}

impl Segment {
    fn random_point(&self, rng: &mut ChaCha8Rng) -> Point {
        [rng.random_range(self.x0..self.x1), rng.random_range(self.y0..self.y1)]
    }

    fn clamp(&self, p: Point) -> Point {
        [p[0].clamp(self.x0, self.x1 - 1e-6), p[1].clamp(self.y0, self.y1 - 1e-6)]
    }
}

struct Canvas {
    side: usize,
    px: Vec<[f64; 3]>,
    band: BinaryPlane,
}

impl Canvas {
    fn centres(&self) -> impl Iterator<Item = (usize, usize, Point)> + '_ {
        let s = self.side;
        (0..s * s).map(move |i| (i % s, i / s, [(i % s) as f64 + 0.5, (i / s) as f64 + 0.5]))
    }
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
}

fn render(spec: &SynthSpec, index: usize) -> DataItem {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let side = spec.side;
    let sf = side as f64;
    let k = sf / 64.0;

    // Layout.
    let margin = |rng: &mut ChaCha8Rng| rng.random_range(0.06 * sf..0.14 * sf).round();
    let (ox0, oy0) = (margin(&mut rng), margin(&mut rng));
    let (ox1, oy1) = (sf - margin(&mut rng), sf - margin(&mut rng));
    let t = rng.random_range(0.12 * sf..0.18 * sf).round();
    let (ix0, iy0, ix1, iy1) = (ox0 + t, oy0 + t, ox1 - t, oy1 - t);
    let segments = [
        Segment { x0: ox0, y0: oy0, x1: ox1, y1: iy0, horizontal: true },
        Segment { x0: ox0, y0: iy1, x1: ox1, y1: oy1, horizontal: true },
        Segment { x0: ox0, y0: iy0, x1: ix0, y1: iy1, horizontal: false },
        Segment { x0: ix1, y0: iy0, x1: ox1, y1: iy1, horizontal: false },
    ];
    let band = BinaryPlane::from_fn(side, side, |x, y| {
        let (xc, yc) = (x as f64 + 0.5, y as f64 + 0.5);
        let outer = xc >= ox0 && xc < ox1 && yc >= oy0 && yc < oy1;
        let inner = xc >= ix0 && xc < ix1 && yc >= iy0 && yc < iy1;
        outer && !inner
    });

    // Base colours.
    let tint = |rng: &mut ChaCha8Rng, base: f64, spread: f64| -> [f64; 3] {
        std::array::from_fn(|_| base + rng.random_range(-spread..spread))
    };
    let base = rng.random_range(0.35..0.5);
    let wall = tint(&mut rng, base, 0.04);
    let base = rng.random_range(0.58..0.72);
    let frame = tint(&mut rng, base, 0.02);
    let base = rng.random_range(0.12..0.22);
    let glass = tint(&mut rng, base, 0.03);
    let px = (0..side * side)
        .map(|i| {
            let (xc, yc) = ((i % side) as f64 + 0.5, (i / side) as f64 + 0.5);
            if band.bits()[i] {
                frame
            } else if xc >= ix0 && xc < ix1 && yc >= iy0 && yc < iy1 {
                glass
            } else {
                wall
            }
        })
        .collect();
    let mut canvas = Canvas { side, px, band };
    let mut masks = MaskSet::empty(side, side);
    *masks.plane_mut(ClassId::WindowFrame) = canvas.band.clone();

    if rng.random_bool(spec.rates.bend) {
        let seg = segments[rng.random_range(0..4)];
        paint_bend(&mut canvas, &seg, k, &mut rng, masks.plane_mut(ClassId::Bend));
    }
    if rng.random_bool(spec.rates.dent) {
        let seg = segments[rng.random_range(0..4)];
        paint_dent(&mut canvas, &seg, k, &mut rng, masks.plane_mut(ClassId::Dent));
    }
    if rng.random_bool(spec.rates.scratch) {
        let seg = segments[rng.random_range(0..4)];
        paint_scratch(&mut canvas, &seg, k, spec.scratch_pixels, &mut rng, masks.plane_mut(ClassId::Scratch));
    }
    masks.resolve_priority();

    apply_nuisances(&mut canvas, spec, &mut rng);
    let data: Vec<f64> = canvas.px.iter().flatten().copied().collect();
    let image = ImageBuffer::from_raw_clamped(side, side, data).expect("canvas has side*side pixels").quantized();
    DataItem { id: format!("synth_{index:04}"), image, masks }
}

fn paint_scratch(
    c: &mut Canvas,
    seg: &Segment,
    k: f64,
    [min_px, max_px]: [usize; 2],
    rng: &mut ChaCha8Rng,
    mask: &mut BinaryPlane,
) {
    for _ in 0..200 {
        let half_width = if rng.random_bool(0.5) { 0.5 } else { 1.0 };
        let vertices = rng.random_range(3..=4);
        let mut pts = vec![seg.random_point(rng)];
        for _ in 1..vertices {
            let len = rng.random_range(5.0 * k..14.0 * k);
            let wobble = rng.random_range(-0.5..0.5f64);
            let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let (dx, dy) = if seg.horizontal { (dir * len, wobble * len) } else { (wobble * len, dir * len) };
            let last = *pts.last().expect("non-empty");
            pts.push(seg.clamp([last[0] + dx, last[1] + dy]));
        }
        let hit: Vec<usize> = c
            .centres()
            .filter(|&(x, y, p)| c.band.get(x, y) && pts.windows(2).any(|w| segment_distance(p, w[0], w[1]) < half_width))
            .map(|(x, y, _)| y * c.side + x)
            .collect();
        if hit.len() < min_px || hit.len() > max_px {
            continue;
        }
        let delta = rng.random_range(0.15..0.28) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        for i in hit {
            c.px[i].iter_mut().for_each(|v| *v += delta);
            mask.set(i % c.side, i / c.side, true);
        }
        return;
    }
}

fn paint_dent(c: &mut Canvas, seg: &Segment, k: f64, rng: &mut ChaCha8Rng, mask: &mut BinaryPlane) {
    let centre = seg.random_point(rng);
    let (ra, rb) = (rng.random_range(2.0 * k..4.5 * k), rng.random_range(2.0 * k..4.5 * k));
    let depth = rng.random_range(0.2..0.35);
    let hits: Vec<(usize, f64)> = c
        .centres()
        .filter(|&(x, y, _)| c.band.get(x, y))
        .filter_map(|(x, y, p)| {
            let r2 = ((p[0] - centre[0]) / ra).powi(2) + ((p[1] - centre[1]) / rb).powi(2);
            (r2 < 1.0).then_some((y * c.side + x, 1.0 - depth * (1.0 - r2)))
        })
        .collect();
    for (i, gain) in hits {
        c.px[i].iter_mut().for_each(|v| *v *= gain);
        mask.set(i % c.side, i / c.side, true);
    }
}

fn paint_bend(c: &mut Canvas, seg: &Segment, k: f64, rng: &mut ChaCha8Rng, mask: &mut BinaryPlane) {
    // Ridge centre line runs across the band: u = u0 + shear * (v - v_mid).
    let (ulo, uhi, vlo, vhi) = if seg.horizontal { (seg.x0, seg.x1, seg.y0, seg.y1) } else { (seg.y0, seg.y1, seg.x0, seg.x1) };
    let u0 = rng.random_range(ulo + 2.0..uhi - 2.0);
    let v_mid = 0.5 * (vlo + vhi);
    let shear = rng.random_range(-0.8..0.8);
    let half_width = rng.random_range(1.5 * k..3.0 * k);
    let amp = rng.random_range(0.15..0.25) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let hits: Vec<(usize, f64)> = c
        .centres()
        .filter(|&(x, y, p)| c.band.get(x, y) && p[0] >= seg.x0 && p[0] < seg.x1 && p[1] >= seg.y0 && p[1] < seg.y1)
        .filter_map(|(x, y, p)| {
            let (u, v) = if seg.horizontal { (p[0], p[1]) } else { (p[1], p[0]) };
            let du = (u - u0 - shear * (v - v_mid)).abs();
            (du < half_width).then_some((y * c.side + x, amp * (1.0 - du / half_width)))
        })
        .collect();
    for (i, delta) in hits {
        c.px[i].iter_mut().for_each(|v| *v += delta);
        mask.set(i % c.side, i / c.side, true);
    }
}

fn apply_nuisances(c: &mut Canvas, spec: &SynthSpec, rng: &mut ChaCha8Rng) {
    let sf = c.side as f64;

    // Linear illumination falloff along a random direction.
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (theta.cos(), theta.sin());
    let amp = spec.gradient_amplitude * rng.random_range(0.5..=1.0);
    let span = sf * (dx.abs() + dy.abs());
    let offset = if dx < 0.0 { -dx * sf } else { 0.0 } + if dy < 0.0 { -dy * sf } else { 0.0 };
    let gains: Vec<f64> = c.centres().map(|(_, _, p)| 1.0 - amp * (p[0] * dx + p[1] * dy + offset) / span).collect();
    for (px, g) in c.px.iter_mut().zip(gains) {
        px.iter_mut().for_each(|v| *v *= g);
    }

    // Cast shadow: a quadrilateral hanging off one image edge.
    if rng.random_bool(spec.shadow_probability) {
        let factor = rng.random_range(spec.shadow_factor[0]..=spec.shadow_factor[1]);
        let (a, b) = {
            let p = rng.random_range(-0.2 * sf..0.6 * sf);
            (p, p + rng.random_range(0.4 * sf..0.9 * sf))
        };
        let (d1, d2) = (rng.random_range(0.3 * sf..0.9 * sf), rng.random_range(0.3 * sf..0.9 * sf));
        let skew = rng.random_range(-0.3 * sf..0.3 * sf);
        let quad: Vec<Point> = match rng.random_range(0..4) {
            0 => vec![[a, -1.0], [b, -1.0], [b + skew, d2], [a + skew, d1]],
            1 => vec![[a, sf + 1.0], [b, sf + 1.0], [b + skew, sf - d2], [a + skew, sf - d1]],
            2 => vec![[-1.0, a], [-1.0, b], [d2, b + skew], [d1, a + skew]],
            _ => vec![[sf + 1.0, a], [sf + 1.0, b], [sf - d2, b + skew], [sf - d1, a + skew]],
        };
        let shadow = rasterize(&[quad], c.side, c.side).expect("quad has four finite vertices");
        for (px, &inside) in c.px.iter_mut().zip(shadow.bits()) {
            if inside {
                px.iter_mut().for_each(|v| *v *= factor);
            }
        }
    }

    // Colour cast.
    let cast: [f64; 3] = std::array::from_fn(|_| 1.0 + rng.random_range(-spec.color_cast..=spec.color_cast));
    for px in &mut c.px {
        px.iter_mut().zip(cast).for_each(|(v, g)| *v *= g);
    }

    // Compress into a narrow band at a random level.
    let lo = rng.random_range(0.05..=(0.95 - spec.contrast).max(0.05));
    for px in &mut c.px {
        px.iter_mut().for_each(|v| *v = lo + spec.contrast * v.clamp(0.0, 1.0));
    }

    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
        for px in &mut c.px {
            px.iter_mut().for_each(|v| *v += normal.sample(rng));
        }
    }
}
