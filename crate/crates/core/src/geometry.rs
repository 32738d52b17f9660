//! Four-point perspective rectification.
//!
//! Pixel `(i, j)` has its centre at coordinate `(i, j)`; a `W x H` image
//! spans `[0, W-1] x [0, H-1]`.

use std::path::Path;

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageBuffer, CANONICAL_SIDE};

pub type Point = [f64; 2];

const MIN_DET: f64 = 1e-12;
const SNAP: f64 = 1e-9;

/// A projective transform with `h[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Homography(Matrix3::identity())
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Homography(Matrix3::new(1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0))
    }

    /// Normalizes so the bottom-right element is 1.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let h33 = m[(2, 2)];
        if !h33.is_finite() || h33.abs() < MIN_DET {
            return Err(Error::DegenerateConfiguration(format!("h33 = {h33}")));
        }
        let m = m / h33;
        if !(m.determinant().abs() > MIN_DET) || m.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateConfiguration("singular homography".into()));
        }
        Ok(Homography(m))
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_fn(|i, j| rows[i][j]))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.0[(i, j)]))
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self.0.try_inverse().ok_or_else(|| Error::DegenerateConfiguration("not invertible".into()))?;
        Self::from_matrix(inv)
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &Homography) -> Result<Self> {
        Self::from_matrix(self.0 * first.0)
    }

    pub fn project(&self, p: Point) -> Point {
        project(&self.0, p)
    }
}

fn project(m: &Matrix3<f64>, p: Point) -> Point {
    let v = m * Vector3::new(p[0], p[1], 1.0);
    [v[0] / v[2], v[1] / v[2]]
}

/// Four source points and where they must land.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadCorrespondence {
    src: [Point; 4],
    dst: [Point; 4],
}

impl QuadCorrespondence {
    pub fn new(src: [Point; 4], dst: [Point; 4]) -> Result<Self> {
        check_quad(&src, "src")?;
        check_quad(&dst, "dst")?;
        Ok(Self { src, dst })
    }

    pub fn src(&self) -> &[Point; 4] {
        &self.src
    }

    pub fn dst(&self) -> &[Point; 4] {
        &self.dst
    }
}

fn check_quad(pts: &[Point; 4], which: &str) -> Result<()> {
    if pts.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateConfiguration(format!("{which} has non-finite coordinates")));
    }
    let extent = pts
        .iter()
        .flat_map(|a| pts.iter().map(move |b| (a[0] - b[0]).abs().max((a[1] - b[1]).abs())))
        .fold(0.0, f64::max);
    let tol = 1e-9 * extent * extent;
    for (i, j, k) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
        let (a, b, c) = (pts[i], pts[j], pts[k]);
        let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        if !(cross.abs() > tol) {
            return Err(Error::DegenerateConfiguration(format!("{which} points {i}, {j}, {k} are collinear")));
        }
    }
    Ok(())
}

/// Similarity moving the centroid to the origin with mean distance sqrt 2.
fn conditioning(pts: &[Point; 4]) -> Matrix3<f64> {
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / 4.0;
    let mean = pts.iter().map(|p| (p[0] - cx).hypot(p[1] - cy)).sum::<f64>() / 4.0;
    let s = std::f64::consts::SQRT_2 / mean;
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

/// Direct linear transform with `h33 = 1`: an 8x8 system solved on
/// conditioned coordinates.
pub fn estimate_homography(corr: &QuadCorrespondence) -> Result<Homography> {
    let ts = conditioning(&corr.src);
    let td = conditioning(&corr.dst);
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for k in 0..4 {
        let [x, y] = project(&ts, corr.src[k]);
        let [u, v] = project(&td, corr.dst[k]);
        let r = 2 * k;
        a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a
        .lu()
        .solve(&b)
        .filter(|h| h.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::DegenerateConfiguration("singular DLT system".into()))?;
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
    let td_inv = td.try_inverse().expect("conditioning is a similarity");
    Homography::from_matrix(td_inv * hn * ts)
}

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

/// Inverse-mapped warp: output pixel `p` takes the bilinear sample of the
/// input at `H^-1 p`, or 0 when that lies outside the input.
pub fn warp(image: &ImageBuffer, h: &Homography, out_w: usize, out_h: usize) -> Result<ImageBuffer> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidParameter(format!("warp target {out_w}x{out_h}")));
    }
    let inv = *h.inverse()?.matrix();
    let (w, h_in) = (image.width(), image.height());
    let (max_x, max_y) = ((w - 1) as f64, (h_in - 1) as f64);
    let mut out = vec![0.0; out_w * out_h * 3];
    out.par_chunks_mut(out_w * 3).enumerate().for_each(|(y, row)| {
        for x in 0..out_w {
            let [sx, sy] = project(&inv, [x as f64, y as f64]);
            let (sx, sy) = (snap(sx), snap(sy));
            if !(sx >= 0.0 && sx <= max_x && sy >= 0.0 && sy <= max_y) {
                continue;
            }
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h_in - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let (p00, p10, p01, p11) = (image.pixel(x0, y0), image.pixel(x1, y0), image.pixel(x0, y1), image.pixel(x1, y1));
            for c in 0..3 {
                let top = if fx == 0.0 { p00[c] } else { (1.0 - fx) * p00[c] + fx * p10[c] };
                let bottom = if fx == 0.0 { p01[c] } else { (1.0 - fx) * p01[c] + fx * p11[c] };
                row[x * 3 + c] = if fy == 0.0 { top } else { (1.0 - fy) * top + fy * bottom };
            }
        }
    });
    ImageBuffer::from_raw_clamped(out_w, out_h, out)
}

/// Output rectangle corners in quad order: top-left, top-right,
/// bottom-right, bottom-left.
pub fn output_corners(out_w: usize, out_h: usize) -> [Point; 4] {
    let (r, b) = ((out_w - 1) as f64, (out_h - 1) as f64);
    [[0.0, 0.0], [r, 0.0], [r, b], [0.0, b]]
}

/// Maps `quad` (TL, TR, BR, BL) onto the full `out_w x out_h` output.
pub fn rectify_quad(image: &ImageBuffer, quad: [Point; 4], out_w: usize, out_h: usize) -> Result<ImageBuffer> {
    if out_w < 2 || out_h < 2 {
        return Err(Error::InvalidParameter(format!("rectified size {out_w}x{out_h} too small")));
    }
    let corr = QuadCorrespondence::new(quad, output_corners(out_w, out_h))?;
    warp(image, &estimate_homography(&corr)?, out_w, out_h)
}

/// Per-image rectification sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectifySidecar {
    pub image_id: String,
    pub src: [Point; 4],
    #[serde(default = "default_side")]
    pub dst_width: usize,
    #[serde(default = "default_side")]
    pub dst_height: usize,
}

fn default_side() -> usize {
    CANONICAL_SIDE
}

impl RectifySidecar {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn apply(&self, image: &ImageBuffer) -> Result<ImageBuffer> {
        rectify_quad(image, self.src, self.dst_width, self.dst_height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT: [Point; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

    fn max_abs_diff(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        (a - b).abs().max()
    }

    /// Plain Gaussian elimination with partial pivoting on the raw
    /// (unconditioned) DLT system.
    fn oracle_homography(src: &[Point; 4], dst: &[Point; 4]) -> [[f64; 3]; 3] {
        let mut m = [[0.0f64; 9]; 8];
        for k in 0..4 {
            let ([x, y], [u, v]) = (src[k], dst[k]);
            m[2 * k] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
            m[2 * k + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
        }
        for col in 0..8 {
            let piv = (col..8).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
            m.swap(col, piv);
            for row in 0..8 {
                if row != col {
                    let f = m[row][col] / m[col][col];
                    for k in col..9 {
                        m[row][k] -= f * m[col][k];
                    }
                }
            }
        }
        let h: Vec<f64> = (0..8).map(|i| m[i][8] / m[i][i]).collect();
        [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]]
    }

    #[test]
    fn identity_from_equal_quads() {
        let h = estimate_homography(&QuadCorrespondence::new(UNIT, UNIT).unwrap()).unwrap();
        assert!(max_abs_diff(h.matrix(), &Matrix3::identity()) < 1e-12);
    }

    #[test]
    fn pure_translation() {
        let dst = UNIT.map(|[x, y]| [x + 10.0, y + 5.0]);
        let h = estimate_homography(&QuadCorrespondence::new(UNIT, dst).unwrap()).unwrap();
        let want = Homography::translation(10.0, 5.0);
        assert!(max_abs_diff(h.matrix(), want.matrix()) < 1e-12);
    }

    #[test]
    fn general_quad_matches_elimination_oracle() {
        let dst = [[0.0, 0.0], [100.0, 10.0], [95.0, 110.0], [-5.0, 90.0]];
        let h = estimate_homography(&QuadCorrespondence::new(UNIT, dst).unwrap()).unwrap();
        let oracle = oracle_homography(&UNIT, &dst);
        for i in 0..3 {
            for j in 0..3 {
                assert!((h.matrix()[(i, j)] - oracle[i][j]).abs() < 1e-9 * (1.0 + oracle[i][j].abs()));
            }
        }
        for k in 0..4 {
            let p = h.project(UNIT[k]);
            assert!((p[0] - dst[k][0]).abs() < 1e-9 && (p[1] - dst[k][1]).abs() < 1e-9);
        }
    }

    #[test]
    fn collinear_points_rejected() {
        let bad = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [0.0, 5.0]];
        assert!(matches!(QuadCorrespondence::new(bad, UNIT), Err(Error::DegenerateConfiguration(_))));
        assert!(matches!(QuadCorrespondence::new(UNIT, bad), Err(Error::DegenerateConfiguration(_))));
    }

    fn ramp(w: usize, h: usize) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, |x, y| [x as f64 / w as f64, y as f64 / h as f64, ((x + y) % 7) as f64 / 6.0])
    }

    #[test]
    fn identity_warp_is_bit_exact() {
        let img = ramp(13, 9);
        assert_eq!(warp(&img, &Homography::identity(), 13, 9).unwrap(), img);
    }

    #[test]
    fn integer_translation_shifts_and_zero_fills() {
        let img = ramp(10, 8);
        let out = warp(&img, &Homography::translation(3.0, 2.0), 10, 8).unwrap();
        for y in 0..8 {
            for x in 0..10 {
                let want = if x >= 3 && y >= 2 { img.pixel(x - 3, y - 2) } else { [0.0; 3] };
                assert_eq!(out.pixel(x, y), want);
            }
        }
    }

    #[test]
    fn half_pixel_translation_blends() {
        let img = ImageBuffer::new(2, 2, vec![0.0, 0.2, 0.4, 1.0, 0.8, 0.6, 0.2, 0.2, 0.2, 0.6, 0.4, 0.0]).unwrap();
        let out = warp(&img, &Homography::translation(0.5, 0.0), 2, 2).unwrap();
        // Column 0 samples x = -0.5 (outside); column 1 samples x = 0.5.
        assert_eq!(out.pixel(0, 0), [0.0; 3]);
        assert_eq!(out.pixel(0, 1), [0.0; 3]);
        let close = |a: [f64; 3], b: [f64; 3]| a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-12);
        assert!(close(out.pixel(1, 0), [0.5, 0.5, 0.5]));
        assert!(close(out.pixel(1, 1), [0.4, 0.3, 0.1]));
    }

    #[test]
    fn full_rectangle_quad_is_identity() {
        let img = ramp(20, 15);
        let out = rectify_quad(&img, output_corners(20, 15), 20, 15).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn sub_rectangle_is_a_crop() {
        let img = ramp(30, 20);
        let quad = [[5.0, 4.0], [14.0, 4.0], [14.0, 11.0], [5.0, 11.0]];
        let out = rectify_quad(&img, quad, 10, 8).unwrap();
        for y in 0..8 {
            for x in 0..10 {
                let (p, q) = (out.pixel(x, y), img.pixel(x + 5, y + 4));
                assert!(p.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-9));
            }
        }
        // Twice the resolution: odd samples fall halfway between source pixels.
        let up = rectify_quad(&img, [[5.0, 4.0], [9.0, 4.0], [9.0, 8.0], [5.0, 8.0]], 9, 9).unwrap();
        for y in 0..9 {
            for x in 0..9 {
                let (sx, sy) = (5.0 + x as f64 / 2.0, 4.0 + y as f64 / 2.0);
                let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
                for c in 0..3 {
                    let v = |xx: usize, yy: usize| img.pixel(xx, yy)[c];
                    let want = (1.0 - fy) * ((1.0 - fx) * v(x0, y0) + fx * v(x0 + 1, y0))
                        + fy * ((1.0 - fx) * v(x0, y0 + 1) + fx * v(x0 + 1, y0 + 1));
                    assert!((up.pixel(x, y)[c] - want).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn rotated_quad_corners_land_on_output_corners() {
        let c = [50.0, 40.0];
        let angle: f64 = 0.4;
        let quad = [[-20.0, -20.0], [20.0, -20.0], [20.0, 20.0], [-20.0, 20.0]]
            .map(|[x, y]| [c[0] + x * angle.cos() - y * angle.sin(), c[1] + x * angle.sin() + y * angle.cos()]);
        let corners = output_corners(64, 48);
        let h = estimate_homography(&QuadCorrespondence::new(quad, corners).unwrap()).unwrap();
        for k in 0..4 {
            let p = h.project(quad[k]);
            assert!((p[0] - corners[k][0]).abs() < 1e-6 && (p[1] - corners[k][1]).abs() < 1e-6);
        }
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        let s = RectifySidecar { image_id: "a".into(), src: UNIT, dst_width: 40, dst_height: 30 };
        s.save(&path).unwrap();
        assert_eq!(RectifySidecar::load(&path).unwrap(), s);
        let partial: RectifySidecar = serde_json::from_str(r#"{"image_id":"b","src":[[0,0],[1,0],[1,1],[0,1]]}"#).unwrap();
        assert_eq!((partial.dst_width, partial.dst_height), (500, 500));
    }
}
