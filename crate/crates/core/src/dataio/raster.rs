//! Pixel-centre, even-odd polygon fill.
//!
//! Pixel `(x, y)` is covered by a polygon when its centre
//! `(x + 0.5, y + 0.5)` is inside under the even-odd rule. Several polygons
//! combine by union.

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::mask::{BinaryPlane, ClassId, MaskSet};

/// x coordinate where edge `a -> b` crosses the horizontal line `y`, if it
/// does. Half-open in y so shared vertices are counted once.
#[inline]
fn crossing(a: Point, b: Point, y: f64) -> Option<f64> {
    ((a[1] > y) != (b[1] > y)).then(|| a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]))
}

fn check(polygon: &[Point]) -> Result<()> {
    if polygon.len() < 3 {
        return Err(Error::DegeneratePolygon(polygon.len()));
    }
    if polygon.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("polygon has a non-finite coordinate".into()));
    }
    Ok(())
}

/// Fills one polygon into `plane` (OR-ing) with a scanline sweep.
fn fill(plane: &mut BinaryPlane, polygon: &[Point]) {
    let (w, h) = (plane.width(), plane.height());
    let ys = polygon.iter().map(|p| p[1]);
    let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
    let y0 = (lo - 0.5).floor().max(0.0) as usize;
    let y1 = ((hi - 0.5).ceil() + 1.0).clamp(0.0, h as f64) as usize;
    let mut xs = Vec::new();
    for y in y0..y1 {
        let yc = y as f64 + 0.5;
        xs.clear();
        for (i, &a) in polygon.iter().enumerate() {
            let b = polygon[(i + 1) % polygon.len()];
            xs.extend(crossing(a, b, yc));
        }
        xs.sort_by(f64::total_cmp);
        // A centre xc is inside iff an odd number of crossings lie to its
        // right, i.e. xs[2k] <= xc < xs[2k + 1].
        for pair in xs.chunks_exact(2) {
            let first = first_center_at_or_after(pair[0]);
            let end = first_center_at_or_after(pair[1]);
            for x in first.max(0)..end.min(w as i64) {
                plane.set(x as usize, y, true);
            }
        }
    }
}

/// Smallest integer `x` with `x + 0.5 >= v`, robust to rounding in the
/// initial guess.
fn first_center_at_or_after(v: f64) -> i64 {
    let v = v.clamp(-1e15, 1e15);
    let mut x = (v - 0.5).ceil() as i64;
    while x as f64 - 0.5 >= v {
        x -= 1;
    }
    while x as f64 + 0.5 < v {
        x += 1;
    }
    x
}

/// Union of the given polygons on a `width x height` canvas.
pub fn rasterize(polygons: &[Vec<Point>], width: usize, height: usize) -> Result<BinaryPlane> {
    let mut plane = BinaryPlane::empty(width, height);
    for polygon in polygons {
        check(polygon)?;
        fill(&mut plane, polygon);
    }
    Ok(plane)
}

/// Rasterizes per-class polygon lists into one mask set and resolves
/// overlaps by class priority.
pub fn rasterize_classes(shapes: &[(ClassId, Vec<Vec<Point>>)], width: usize, height: usize) -> Result<MaskSet> {
    let mut set = MaskSet::empty(width, height);
    for (class, polygons) in shapes {
        let plane = rasterize(polygons, width, height)?;
        set.plane_mut(*class).union_with(&plane);
    }
    set.resolve_priority();
    Ok(set)
}

/// One axis-aligned rectangle per horizontal run of set pixels; the union
/// rasterizes back to exactly `plane`.
pub fn row_run_polygons(plane: &BinaryPlane) -> Vec<Vec<Point>> {
    let mut out = Vec::new();
    for y in 0..plane.height() {
        let mut x = 0;
        while x < plane.width() {
            if !plane.get(x, y) {
                x += 1;
                continue;
            }
            let start = x;
            while x < plane.width() && plane.get(x, y) {
                x += 1;
            }
            let (x0, x1, y0, y1) = (start as f64, x as f64, y as f64, y as f64 + 1.0);
            out.push(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]);
        }
    }
    out
}
