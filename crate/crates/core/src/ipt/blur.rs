//! Separable Gaussian blur on single-channel planes.

use rayon::prelude::*;

/// How samples beyond the plane edge are synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Border {
    /// Repeat the edge sample.
    Replicate,
    /// Point reflection through the edge sample, `f(-i) = 2 f(0) - f(i)`.
    /// Linear ramps extend linearly, so their blur is exact.
    PointReflect,
}

/// Normalized kernel with radius `ceil(3 sigma)`, at least 1.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = ((3.0 * sigma).ceil() as usize).max(1);
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / denom).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn extended(row: &[f64], i: isize, border: Border) -> f64 {
    let n = row.len() as isize;
    match border {
        Border::Replicate => row[i.clamp(0, n - 1) as usize],
        Border::PointReflect => {
            if n == 1 {
                return row[0];
            }
            let (mut offset, mut sign, mut i) = (0.0, 1.0, i);
            loop {
                if i < 0 {
                    offset += sign * 2.0 * row[0];
                    sign = -sign;
                    i = -i;
                } else if i >= n {
                    offset += sign * 2.0 * row[(n - 1) as usize];
                    sign = -sign;
                    i = 2 * (n - 1) - i;
                } else {
                    return offset + sign * row[i as usize];
                }
            }
        }
    }
}

fn blur_row(row: &[f64], kernel: &[f64], border: Border, out: &mut [f64]) {
    let n = row.len();
    let r = kernel.len() / 2;
    let padded: Vec<f64> = (0..n + 2 * r).map(|k| extended(row, k as isize - r as isize, border)).collect();
    for (x, o) in out.iter_mut().enumerate() {
        *o = padded[x..x + kernel.len()].iter().zip(kernel).map(|(a, b)| a * b).sum();
    }
}

fn transpose(plane: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut t = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            t[x * height + y] = plane[y * width + x];
        }
    }
    t
}

fn blur_rows(plane: &[f64], width: usize, kernel: &[f64], border: Border) -> Vec<f64> {
    let mut out = vec![0.0; plane.len()];
    out.par_chunks_mut(width)
        .zip(plane.par_chunks(width))
        .for_each(|(o, row)| blur_row(row, kernel, border, o));
    out
}

/// Blurs a row-major `width x height` plane. Rows are processed in parallel;
/// each output sample is computed by the same fixed sequence of operations,
/// so results do not depend on the thread count.
pub fn gaussian_blur(plane: &[f64], width: usize, height: usize, sigma: f64, border: Border) -> Vec<f64> {
    assert_eq!(plane.len(), width * height);
    assert!(sigma > 0.0, "sigma must be positive");
    let kernel = gaussian_kernel(sigma);
    let horizontal = blur_rows(plane, width, &kernel, border);
    let t = transpose(&horizontal, width, height);
    let vertical = blur_rows(&t, height, &kernel, border);
    transpose(&vertical, height, width)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        for sigma in [0.3, 1.0, 4.5, 40.0] {
            let k = gaussian_kernel(sigma);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let n = k.len();
            for i in 0..n / 2 {
                assert_eq!(k[i], k[n - 1 - i]);
            }
        }
    }

    #[test]
    fn constant_plane_stays_constant() {
        let plane = vec![0.37; 12 * 7];
        for border in [Border::Replicate, Border::PointReflect] {
            for sigma in [0.8, 3.0, 50.0] {
                let out = gaussian_blur(&plane, 12, 7, sigma, border);
                assert!(out.iter().all(|v| (v - 0.37).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn point_reflection_keeps_linear_ramps() {
        let (w, h) = (30, 5);
        let plane: Vec<f64> = (0..w * h).map(|i| 0.2 + 0.01 * (i % w) as f64).collect();
        // Radius far exceeds the plane: multiple reflections.
        let out = gaussian_blur(&plane, w, h, 25.0, Border::PointReflect);
        for (a, b) in out.iter().zip(&plane) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn replicate_matches_direct_convolution() {
        let (w, h) = (9, 6);
        let plane: Vec<f64> = (0..w * h).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
        let sigma = 1.3;
        let k = gaussian_kernel(sigma);
        let r = (k.len() / 2) as isize;
        let at = |x: isize, y: isize| plane[(y.clamp(0, h as isize - 1) as usize) * w + x.clamp(0, w as isize - 1) as usize];
        let out = gaussian_blur(&plane, w, h, sigma, Border::Replicate);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        acc += k[(dy + r) as usize] * k[(dx + r) as usize] * at(x + dx, y + dy);
                    }
                }
                assert!((acc - out[y as usize * w + x as usize]).abs() < 1e-12);
            }
        }
    }
}
