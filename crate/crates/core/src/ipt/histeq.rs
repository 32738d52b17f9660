use crate::image::ImageBuffer;

const LEVELS: usize = 256;

fn level(v: f64) -> usize {
    ((v * 255.0).round() as usize).min(LEVELS - 1)
}

/// Per-channel 256-bin histogram equalization.
///
/// `h(v) = round(255 * (cdf(v) - cdf_min) / (1 - cdf_min))`, with `cdf_min`
/// the cdf at the darkest occupied level. Constant channels pass through
/// untouched (not even quantized).
pub fn contrast_enhance(image: &ImageBuffer) -> ImageBuffer {
    let mut out = image.data().to_vec();
    let n = image.pixel_count();
    for c in 0..3 {
        let mut hist = [0usize; LEVELS];
        for v in image.data().iter().skip(c).step_by(3) {
            hist[level(*v)] += 1;
        }
        let first = hist.iter().position(|&k| k > 0).expect("non-empty image");
        let cdf_min = hist[first];
        if cdf_min == n {
            continue;
        }
        let mut lut = [0.0; LEVELS];
        let mut cum = 0usize;
        for (k, slot) in lut.iter_mut().enumerate() {
            cum += hist[k];
            let num = 255.0 * cum.saturating_sub(cdf_min) as f64;
            *slot = (num / (n - cdf_min) as f64).round() / 255.0;
        }
        for v in out.iter_mut().skip(c).step_by(3) {
            *v = lut[level(*v)];
        }
    }
    ImageBuffer::new(image.width(), image.height(), out).expect("lut values lie in [0, 1]")
}
